import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import eigh_normal, mean_direction
from rutfinder.errors import DegenerateFieldError, DegenerateInputError
from rutfinder.grid import DisparityMap, centered_grid
from rutfinder.surface import (
    NormalField,
    QuadraticSurface,
    estimate_normals,
    filter_by_normal,
    fit_quadratic,
    fit_surface,
    optimal_normal,
)
from rutfinder.synth import Pothole, SceneSpec, render


def _angle(a, b):
    return math.atan2(np.linalg.norm(np.cross(a, b)), float(np.dot(a, b)))


def _surface_map(c, width=60, height=40):
    uu, vv = centered_grid(width, height)
    return DisparityMap.from_array(QuadraticSurface(np.array(c), 0, 0, 0).evaluate(uu, vv))


def test_plane_normals():
    uu, vv = centered_grid(12, 9)
    field = estimate_normals(DisparityMap.from_array(2 * uu + 3 * vv + 40))
    expected = np.array([-2.0, -3.0, 1.0]) / math.sqrt(14)
    vecs = field.vectors()
    assert vecs.shape[0] == 10 * 7
    assert np.max(np.abs(vecs - expected)) <= 1e-12


def test_constant_normals():
    field = estimate_normals(DisparityMap.from_array(np.full((5, 6), 7.0)))
    assert np.allclose(field.vectors(), [0, 0, 1], atol=0)


def test_border_and_mask_leave_gaps():
    dmap = DisparityMap.from_array(np.full((6, 6), 7.0))
    mask = np.ones((6, 6), bool)
    mask[2, 2] = False
    field = estimate_normals(dmap, mask)
    assert not field.defined[0].any() and not field.defined[:, -1].any()
    assert not field.defined[1:4, 1:4].any()
    assert np.isnan(field.normals[2, 2]).all()


@pytest.mark.parametrize("k", [4, 8, 24])
def test_against_eigendecomposition(k):
    rng = np.random.default_rng(k)
    data = rng.uniform(10, 14, (12, 14))
    field = estimate_normals(DisparityMap.from_array(data), k=k)
    from rutfinder.surface import STENCILS

    offs = [(0, 0)] + STENCILS[k]
    rows, cols = np.nonzero(field.defined)
    assert rows.size > 0
    for r, c in zip(rows, cols):
        pts = np.array([[c + dc, r + dr, data[r + dr, c + dc]] for dr, dc in offs], float)
        assert _angle(field.normals[r, c], eigh_normal(pts)) <= 1e-9


def test_quadratic_patch_matches_gradient():
    c = (30.0, 0.05, 0.12, 1e-4, 2e-4, -1e-4)
    dmap = _surface_map(c)
    field = estimate_normals(dmap)
    uu, vv = centered_grid(60, 40)
    gu = c[1] + 2 * c[3] * uu + c[5] * vv
    gv = c[2] + 2 * c[4] * vv + c[5] * uu
    analytic = np.stack([-gu, -gv, np.ones_like(gu)], axis=-1)
    analytic /= np.linalg.norm(analytic, axis=-1, keepdims=True)
    got = field.normals[field.defined]
    ref = analytic[field.defined]
    err = np.arccos(np.clip(np.sum(got * ref, axis=1), -1, 1))
    assert err.max() <= 0.01


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(5, 50))
def test_affine_surface_gives_constant_field(a, b, c0):
    uu, vv = centered_grid(9, 7)
    d = a * uu + b * vv + c0
    d = d - d.min() + 1.0
    vecs = estimate_normals(DisparityMap.from_array(d)).vectors()
    ang = np.arccos(np.clip(vecs @ vecs[0], -1, 1))
    assert ang.max() <= 1e-6


def test_optimal_identical_normals():
    n = np.array([0.1, -0.2, 0.9])
    n /= np.linalg.norm(n)
    best = optimal_normal(np.tile(n, (10, 1)))
    assert np.allclose(best.n_hat, n, atol=1e-12)


def test_optimal_symmetric_pair():
    best = optimal_normal(np.array([[1.0, 0, 0], [0, 1.0, 0]]))
    assert np.allclose(best.n_hat, [1 / math.sqrt(2), 1 / math.sqrt(2), 0], atol=1e-12)


def _cone(rng, n, axis, half_angle, min_angle=0.0):
    axis = axis / np.linalg.norm(axis)
    tilt = rng.uniform(min_angle, half_angle, n)
    spin = rng.uniform(0, 2 * np.pi, n)
    helper = np.array([1.0, 0, 0]) if abs(axis[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return (
        np.cos(tilt)[:, None] * axis
        + np.sin(tilt)[:, None] * (np.cos(spin)[:, None] * e1 + np.sin(spin)[:, None] * e2)
    )


def test_optimal_matches_mean_direction_oracle():
    rng = np.random.default_rng(30)
    for _ in range(20):
        axis = rng.normal(size=3)
        vecs = _cone(rng, 1000, axis, rng.uniform(0.05, 1.2))
        best = optimal_normal(vecs)
        assert _angle(best.n_hat, mean_direction(vecs)) <= 1e-9
        assert best.energy == pytest.approx(-np.linalg.norm(vecs.sum(axis=0)), rel=1e-12)


def test_optimal_permutation_and_duplication():
    rng = np.random.default_rng(31)
    vecs = _cone(rng, 500, np.array([0.2, -0.1, 1.0]), 0.4)
    base = optimal_normal(vecs).n_hat
    assert _angle(optimal_normal(vecs[rng.permutation(500)]).n_hat, base) <= 1e-12
    assert _angle(optimal_normal(np.vstack([vecs, vecs])).n_hat, base) <= 1e-12


def test_antipodal_field_is_degenerate():
    with pytest.raises(DegenerateFieldError):
        optimal_normal(np.array([[0, 0, 1.0], [0, 0, -1.0]]))
    with pytest.raises(DegenerateFieldError):
        optimal_normal(np.zeros((0, 3)))


def _field(vecs):
    n = len(vecs)
    normals = np.asarray(vecs, float).reshape(1, n, 3)
    return NormalField(normals, np.ones((1, n), bool), 8)


def test_filter_boundary_is_closed():
    eps = math.pi / 36
    n_hat = np.array([0.0, 0.0, 1.0])
    field = _field([[0, 0, 1.0], [math.sin(eps), 0, math.cos(eps)], [math.sin(eps * 1.001), 0, math.cos(eps * 1.001)]])
    assert filter_by_normal(field, n_hat, eps)[0].tolist() == [True, True, False]


def test_filter_removes_steep_corruption():
    rng = np.random.default_rng(33)
    n = 20000
    axis = np.array([0.02, -0.15, 1.0])
    axis /= np.linalg.norm(axis)
    clean = axis + rng.normal(0, 0.008, (n, 3))
    bad = rng.random(n) < 0.1
    steep = _cone(rng, n, axis, 1.4, min_angle=0.35)
    vecs = np.where(bad[:, None], steep, clean)
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    field = _field(vecs)
    keep = filter_by_normal(field, optimal_normal(field), math.pi / 36)[0]
    assert (~keep[bad]).mean() >= 0.99
    assert (~keep[~bad]).mean() <= 0.01


def test_filter_rejects_bad_eps():
    with pytest.raises(ValueError):
        filter_by_normal(_field([[0, 0, 1.0]]), np.array([0, 0, 1.0]), 0.0)


def test_fit_quadratic_reproduces_generator():
    rng = np.random.default_rng(34)
    u = rng.uniform(-300, 300, 500)
    v = rng.uniform(-200, 200, 500)
    for _ in range(10):
        c = rng.normal(0, 1, 6) * np.array([10, 0.1, 0.1, 1e-4, 1e-4, 1e-4])
        d = QuadraticSurface(c, 0, 0, 0).evaluate(u, v)
        assert np.allclose(fit_quadratic(u, v, d), c, rtol=1e-9, atol=1e-14)


def test_noise_free_surface_recovery():
    c = np.array([30.0, 0.0, 0.001, 0.0, 0.0002, 0.0])
    dmap = _surface_map(c, 600, 400)
    surf = fit_surface(dmap, np.ones(dmap.shape, bool))
    assert np.all(np.abs(surf.c - c) <= 1e-6)
    assert surf.inlier_ratio == math.inf


def test_symmetric_road_has_no_odd_terms():
    c = np.array([35.0, 0.0, 0.12, 0.0, 4e-5, 0.0])
    dmap = _surface_map(c, 601, 401)
    surf = fit_surface(dmap, np.ones(dmap.shape, bool), seed=7)
    assert abs(surf.c[1]) <= 1e-6 and abs(surf.c[3]) <= 1e-6 and abs(surf.c[5]) <= 1e-6


def test_noisy_surface_with_potholes_masked():
    spec = SceneSpec(
        alpha_true=(40.0, 0.15, 5e-5),
        potholes=(Pothole(-100, 50, 50, 30, 15), Pothole(150, -60, 40, 30, 18)),
        noise_sigma=0.1,
        seed=8,
    )
    dmap, gt = render(spec)
    surf = fit_surface(dmap, gt.road_mask)
    road = gt.road_mask & dmap.valid
    resid = dmap.data - surf.model_disparity(dmap.shape)
    assert math.sqrt(np.mean(resid[road] ** 2)) <= 0.15
    inl = surf.inlier_mask
    assert np.all(np.abs(resid[inl]) <= 4.0 / 2**3)


def test_too_few_blocks():
    dmap = _surface_map([30, 0, 0, 0, 0, 0], 60, 40)
    with pytest.raises(DegenerateInputError):
        fit_surface(dmap, np.ones(dmap.shape, bool), r=125)
