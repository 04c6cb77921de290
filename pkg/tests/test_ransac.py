import math

import numpy as np
import pytest

from rutfinder.ransac import inlier_ratio, select_trial, tolerance_schedule


def test_schedule():
    assert list(tolerance_schedule(4, 4)) == [4, 2, 1, 0.5]
    with pytest.raises(ValueError):
        tolerance_schedule(0, 4)


def test_outlier_free_ratio_ranks_first():
    assert inlier_ratio(10, 0) == math.inf
    assert inlier_ratio(10, 0) > inlier_ratio(10**9, 1)


def _m(*x):
    return np.array(x, dtype=float)


def test_first_unique_column_decides():
    eta = np.array([[5.0, 3.0], [5.0, 2.0]])
    sel = select_trial(eta, [_m(1), _m(2)], [0.0, 0.0])
    assert (sel.trial, sel.column, sel.tie_broken) == (0, 1, False)


def test_identical_models_are_one_model():
    eta = np.array([[5.0, 1.0], [5.0, 1.0], [2.0, 9.0]])
    sel = select_trial(eta, [_m(1), _m(1), _m(3)], [0.0, 0.0, 0.0])
    assert sel.trial == 0 and sel.column == 0


def test_tie_goes_to_residual_then_index():
    eta = np.array([[4.0, 2.0], [4.0, 2.0], [4.0, 2.0]])
    models = [_m(1), _m(2), _m(3)]
    sel = select_trial(eta, models, [3.0, 1.0, 1.0])
    assert sel.tie_broken and sel.trial == 1
    lazy = select_trial(eta, models, lambda i: [3.0, 1.0, 1.0][i])
    assert lazy.trial == 1


def test_relative_equality_of_ratios():
    eta = np.array([[1.0, 0.0], [1.0 + 1e-14, 5.0]])
    sel = select_trial(eta, [_m(1), _m(2)], [0.0, 0.0])
    assert sel.trial == 1 and sel.column == 1
