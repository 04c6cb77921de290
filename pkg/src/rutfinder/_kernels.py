"""Compiled inner loops. Sequential accumulation keeps results bitwise stable."""

from __future__ import annotations

import numpy as np
from numba import njit

_RANK_EPS = 1e-24


@njit(cache=True)
def parabola_fit(z, d):
    """Fit ``d ~ b0 + b1 z + b2 z^2`` by Gram-Schmidt on centered columns.

    Returns ``(b0, b1, b2, energy, ok)``; ``ok`` is False when the columns
    are linearly dependent. The energy is the explicit residual sum of squares.
    """
    n = z.size
    mz = 0.0
    mz2 = 0.0
    md = 0.0
    for i in range(n):
        zi = z[i]
        mz += zi
        mz2 += zi * zi
        md += d[i]
    mz /= n
    mz2 /= n
    md /= n
    g11 = 0.0
    g12 = 0.0
    b1 = 0.0
    for i in range(n):
        zi = z[i]
        c1 = zi - mz
        c2 = zi * zi - mz2
        g11 += c1 * c1
        g12 += c1 * c2
        b1 += c1 * (d[i] - md)
    if g11 <= _RANK_EPS * n:
        return 0.0, 0.0, 0.0, 0.0, False
    gamma = g12 / g11
    beta1 = b1 / g11
    g22 = 0.0
    b2 = 0.0
    for i in range(n):
        zi = z[i]
        c1 = zi - mz
        c2 = zi * zi - mz2 - gamma * c1
        g22 += c2 * c2
        b2 += c2 * (d[i] - md - beta1 * c1)
    if g22 <= _RANK_EPS * n:
        return 0.0, 0.0, 0.0, 0.0, False
    beta2 = b2 / g22
    energy = 0.0
    for i in range(n):
        zi = z[i]
        c1 = zi - mz
        c2 = zi * zi - mz2 - gamma * c1
        r = d[i] - md - beta1 * c1 - beta2 * c2
        energy += r * r
    lin = beta1 - beta2 * gamma
    return md - lin * mz - beta2 * mz2, lin, beta2, energy, True


@njit(cache=True)
def band_refit(z, d, b0, b1, b2, tols):
    """Refit the parabola in ``z`` on the points within each tolerance in turn.

    Returns the last successful coefficients and how many tolerances succeeded.
    """
    n = z.size
    zs = np.empty(n)
    ds = np.empty(n)
    done = 0
    for j in range(tols.size):
        m = 0
        for i in range(n):
            zi = z[i]
            if abs(d[i] - (b0 + zi * (b1 + b2 * zi))) <= tols[j]:
                zs[m] = zi
                ds[m] = d[i]
                m += 1
        if m < 3:
            break
        c0, c1, c2, _, ok = parabola_fit(zs[:m], ds[:m])
        if not ok:
            break
        b0, b1, b2 = c0, c1, c2
        done += 1
    return b0, b1, b2, done


@njit(cache=True)
def rotated_parabola_energy(u, v, d, cos_t, sin_t):
    z = v * cos_t - u * sin_t
    return parabola_fit(z, d)


@njit(cache=True)
def plane_pca_normals(d, eligible, offsets_r, offsets_c, pad):
    """Closed-form smallest-eigenvector normals over a symmetric stencil.

    ``d`` and ``eligible`` are padded by ``pad``; output is unpadded
    ``(H, W, 3)`` with NaN where no normal exists, plus the defined mask.
    """
    hp, wp = d.shape
    h, w = hp - 2 * pad, wp - 2 * pad
    out = np.full((h, w, 3), np.nan)
    defined = np.zeros((h, w), dtype=np.bool_)
    k = offsets_r.size
    s = 0.0
    for j in range(k):
        s += offsets_c[j] * offsets_c[j]
    n_pts = k + 1
    for r in range(h):
        for c in range(w):
            rp = r + pad
            cp = c + pad
            if not eligible[rp, cp]:
                continue
            full = True
            for j in range(k):
                if not eligible[rp + offsets_r[j], cp + offsets_c[j]]:
                    full = False
                    break
            if not full:
                continue
            dc = d[rp, cp]
            a = 0.0
            b = 0.0
            es = 0.0
            eq = 0.0
            for j in range(k):
                e = d[rp + offsets_r[j], cp + offsets_c[j]] - dc
                a += offsets_c[j] * e
                b += offsets_r[j] * e
                es += e
                eq += e * e
            cc = eq - es * es / n_pts
            hh = 0.5 * (cc - s)
            rho2 = a * a + b * b
            if rho2 == 0.0 and hh >= 0.0:
                continue
            root = np.sqrt(hh * hh + rho2)
            if hh > 0.0:
                gap = rho2 / (root + hh)
            else:
                gap = root - hh
            nrm = np.sqrt(rho2 + gap * gap)
            if nrm == 0.0:
                continue
            out[r, c, 0] = -a / nrm
            out[r, c, 1] = -b / nrm
            out[r, c, 2] = gap / nrm
            defined[r, c] = True
    return out, defined


@njit(cache=True)
def _score4(row_v, row_start, un, d, coef, t0, t1, t2, t3):
    c0, c1, c2, c3, c4, c5 = coef[0], coef[1], coef[2], coef[3], coef[4], coef[5]
    n0 = 0
    n1 = 0
    n2 = 0
    n3 = 0
    for i in range(row_v.size):
        v = row_v[i]
        a = c0 + v * (c2 + c4 * v)
        b = c1 + c5 * v
        for p in range(row_start[i], row_start[i + 1]):
            u = un[p]
            r = abs(d[p] - (a + u * (b + c3 * u)))
            n0 += r <= t0
            n1 += r <= t1
            n2 += r <= t2
            n3 += r <= t3
    return n0, n1, n2, n3


@njit(cache=True)
def inlier_residual_sum(row_v, row_start, un, d, coef, tol):
    """Sum of |residual| over pixels within ``tol``, in raster order."""
    c0, c1, c2, c3, c4, c5 = coef[0], coef[1], coef[2], coef[3], coef[4], coef[5]
    total = 0.0
    for i in range(row_v.size):
        v = row_v[i]
        a = c0 + v * (c2 + c4 * v)
        b = c1 + c5 * v
        for p in range(row_start[i], row_start[i + 1]):
            u = un[p]
            r = abs(d[p] - (a + u * (b + c3 * u)))
            if r <= tol:
                total += r
    return total


def score_surface(row_v, row_start, un, d, coef, tols):
    """Inlier counts per tolerance.

    Pixels are grouped by row: row ``i`` has ordinate ``row_v[i]`` and owns
    ``un[row_start[i]:row_start[i + 1]]`` and the matching ``d``. Tolerances
    go four per pass; unused slots get -1, which no residual meets.
    """
    tols = [float(t) for t in tols]
    counts = []
    for g in range(0, len(tols), 4):
        group = (tols[g : g + 4] + [-1.0] * 4)[:4]
        counts.extend(_score4(row_v, row_start, un, d, coef, *group))
    return np.array(counts[: len(tols)], dtype=np.int64)
