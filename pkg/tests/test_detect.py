
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import DESK_W
from oracles import canonical, clean_and_label_oracle
from rutfinder.config import RunConfig
from rutfinder.detect import (
    PotholeLabelMap,
    StereoGeometry,
    clean_and_label,
    detect_potholes,
    extract_pointcloud,
    fill_holes,
    read_ply,
    residual_mask,
    write_ply,
)
from rutfinder.grid import DisparityMap
from rutfinder.roadmodel import estimate_road_model
from rutfinder.surface import QuadraticSurface
from rutfinder.synth import Pothole, SceneSpec, render


def _flat(level):
    return QuadraticSurface(np.array([level, 0, 0, 0, 0, 0.0]), 0, 0, 0)


def test_residual_sign_and_boundary():
    data = np.full((3, 3), 20.0)
    data[0, 0] = 20.0 - 6.3
    data[2, 2] = 30.0
    data[1, 1] = 20.0 - 6.2
    m = residual_mask(DisparityMap.from_array(data), _flat(20.0), 6.2)
    assert m[0, 0] and not m[2, 2] and not m[1, 1]
    assert m.sum() == 1


def test_marked_set_covers_deep_pixels():
    spec = SceneSpec(potholes=(Pothole(0, 0, 40, 30, 12.0),))
    dmap, gt = render(spec)
    # the exact road as surface, so g - d is the injected depth
    a0, a1, a2 = spec.alpha_true
    surf = QuadraticSurface(np.array([a0, 0, a1, 0, a2, 0]), 0, 0, 0)
    m = residual_mask(dmap, surf, 6.2)
    assert np.all(m[gt.depth > 6.2])


def test_size_filter():
    mask = np.zeros((10, 10), bool)
    mask[0, :5] = True
    mask[5:8, 2:6] = True
    res = clean_and_label(mask, 10)
    assert res.count == 1
    assert res.stats[0].pixels == 12
    assert res.stats[0].bbox == (2, 5, 5, 7)


def test_ring_is_filled():
    mask = np.zeros((9, 9), bool)
    mask[2:7, 2:7] = True
    mask[3:6, 3:6] = False
    res = clean_and_label(mask, 1)
    assert res.count == 1
    assert res.labels[4, 4] == 1
    assert res.stats[0].pixels == 25


def test_diagonal_gap_leaks():
    # the background reaches the interior through a diagonal step only
    mask = np.array(
        [
            [0, 1, 0, 0],
            [1, 0, 1, 0],
            [0, 1, 0, 0],
            [0, 0, 0, 0],
        ],
        bool,
    )
    assert fill_holes(mask)[1, 1]
    leaky = mask.copy()
    leaky[0, 1] = False
    assert not fill_holes(leaky)[1, 1]


def test_random_masks_match_flood_fill():
    rng = np.random.default_rng(40)
    for i in range(60):
        mask = rng.random((64, 64)) < rng.uniform(0.2, 0.6)
        w = int(rng.integers(1, 40))
        ref, n = clean_and_label_oracle(mask, w)
        got = clean_and_label(mask, w)
        assert got.count == n
        assert np.array_equal(got.labels, ref)


@settings(max_examples=60, deadline=None)
@given(arrays(bool, st.tuples(st.integers(3, 24), st.integers(3, 24))), st.integers(1, 12))
def test_transpose_symmetry(mask, w):
    a = clean_and_label(mask, w).labels
    b = clean_and_label(mask.T, w).labels
    assert np.array_equal(canonical(a.T), canonical(b))


@pytest.fixture(scope="module")
def detected():
    spec = SceneSpec(
        theta_true=0.05,
        potholes=(
            Pothole(-180, 60, 50, 35, 16.0),
            Pothole(20, -40, 45, 30, 14.0),
            Pothole(200, 90, 55, 35, 18.0),
        ),
        noise_sigma=0.1,
        invalid_fraction=0.01,
        seed=41,
    )
    dmap, gt = render(spec)
    cfg = RunConfig(min_pixels=DESK_W)
    road = estimate_road_model(dmap, cfg)
    return dmap, gt, cfg, road, detect_potholes(dmap, road.model, cfg)


def test_three_potholes_found(detected):
    dmap, gt, cfg, _, det = detected
    assert det.labels.count == 3
    for s in det.labels.stats:
        assert s.pixels >= DESK_W and s.mean_depth > cfg.eps_d
    overlap = det.labels.mask & gt.pothole_mask
    assert overlap.sum() >= 0.9 * gt.pothole_mask.sum()
    assert det.report["min_pixels"] == DESK_W


def test_monotone_in_w_and_eps(detected):
    dmap, _, _, _, det = detected
    counts = []
    for w in (1, 10, 100, 500, 2000, 8000):
        counts.append(clean_and_label(dmap.valid & (det.depth > 6.2), w).count)
    assert counts == sorted(counts, reverse=True)
    marked = [residual_mask(dmap, det.surface, e).sum() for e in np.arange(1.0, 15.0, 0.5)]
    assert marked == sorted(marked, reverse=True)


def test_labels_respect_residual_rule(detected):
    dmap, _, cfg, _, det = detected
    lab = det.labels.mask
    marked = dmap.valid & (det.depth > cfg.eps_d)
    # every labeled pixel is marked or sits in a hole of the marked part
    assert not (lab & ~fill_holes(lab & marked)).any()


def test_damage_free_frame(desk_config):
    dmap, _ = render(SceneSpec(noise_sigma=0.1, invalid_fraction=0.01, seed=43))
    road = estimate_road_model(dmap, desk_config)
    assert detect_potholes(dmap, road.model, desk_config).labels.count == 0


def test_pointcloud_examples():
    data = np.full((3, 21), 42.0)
    data[1, 20] = 2.0
    dmap = DisparityMap.from_array(data)
    labels = np.zeros((3, 21), np.int32)
    labels[1, 20] = 1
    labels[0, 0] = 1
    lab = PotholeLabelMap(labels, ())
    cloud = extract_pointcloud(dmap, StereoGeometry(700.0, 1.0), lab)
    # column 20 of 21 is u = +10
    assert cloud.points[1, 0] == 5.0
    cloud = extract_pointcloud(dmap, StereoGeometry(700.0, 0.12), lab)
    assert cloud.points[0, 2] == pytest.approx(2.0, rel=1e-15)


def test_pointcloud_roundtrip(detected, tmp_path):
    dmap, _, cfg, _, det = detected
    geom = StereoGeometry(cfg.focal_length, cfg.baseline)
    cloud = extract_pointcloud(dmap, geom, det.labels, include_road=True)
    x, y, z = cloud.points.T
    d_back = geom.focal_length * geom.baseline / z
    assert np.max(np.abs(d_back - cloud.disparities) / cloud.disparities) <= 1e-12
    assert np.all(z > 0)
    road_z = z[cloud.labels == 0]
    pot_z = z[cloud.labels > 0]
    assert road_z.min() <= pot_z.min() and pot_z.max() <= road_z.max() * 1.5
    write_ply(tmp_path / "c.ply", cloud)
    back = read_ply(tmp_path / "c.ply")
    assert np.array_equal(back.points, cloud.points)
    assert np.array_equal(back.labels, cloud.labels)


def test_pointcloud_skips_invalid_hole_pixels():
    data = np.full((5, 5), 10.0)
    data[2, 2] = np.nan
    labels = np.zeros((5, 5), np.int32)
    labels[1:4, 1:4] = 1
    cloud = extract_pointcloud(DisparityMap.from_array(data), StereoGeometry(700, 0.1), PotholeLabelMap(labels, ()))
    assert len(cloud) == 8


def test_geometry_must_be_positive():
    with pytest.raises(ValueError):
        StereoGeometry(0.0, 0.1)
