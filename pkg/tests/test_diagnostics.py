import csv
import math

import numpy as np
import pytest

from enkbf_lab.diagnostics import (
    DIAG_COLUMNS,
    bound_envelope,
    check_row_invariants,
    dissipativity_estimate,
    eigen_extremes,
    eigenvalue_bound_formulas,
    estimation_error,
    loglog_slope,
    time_average,
    v_local_bound,
    v_lower_bound,
    v_upper_bound,
    write_diagnostics_csv,
)
from enkbf_lab.errors import InvalidArgumentError
from enkbf_lab.model import linear_model


def test_estimation_error():
    assert estimation_error(np.array([3.0, 4.0]), np.zeros(2)) == 12.5
    assert estimation_error(np.ones(3), np.ones(3)) == 0.0
    assert estimation_error(np.array([-2.0]), np.array([0.0])) == 2.0


def test_eigen_extremes():
    assert eigen_extremes(np.diag([3.0, 1.0])) == pytest.approx((1.0, 3.0))
    assert eigen_extremes(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx((1.0, 3.0))
    assert eigen_extremes(np.zeros((2, 2))) == (0.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        eigen_extremes(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestSpreadBounds:
    def test_upper_l_plus_zero(self):
        assert v_upper_bound(0.0, 0.0, 2.0, 1.0, 2) == pytest.approx(math.sqrt(8.0), rel=1e-15)

    def test_upper_max_semantics(self):
        assert v_upper_bound(100.0, 0.0, 2.0, 1.0, 2) == 100.0
        assert v_upper_bound(0.0, 0.0, 0.0, 1.0, 5) == 0.0
        assert v_upper_bound(0.5, 0.0, 0.0, 1.0, 5) == 0.5

    def test_upper_validation(self):
        with pytest.raises(InvalidArgumentError):
            v_upper_bound(0.0, 0.0, 1.0, 1.0, 1)

    def test_local(self):
        assert v_local_bound(1.0, 2.0, 3.0, 0.0) == pytest.approx(2.5)
        assert v_local_bound(1.0, 1.0, 1.0, math.log(2.0)) == pytest.approx(8.0, rel=1e-14)
        assert v_local_bound(0.0, 1.0, 0.0, 3.0) == 0.0
        with pytest.raises(InvalidArgumentError):
            v_local_bound(1.0, 0.0, 1.0, 1.0)

    def test_lower_below_upper(self):
        env = bound_envelope(1.0, 1.0, 0.5, 2.0, -1.0, 3.0, np.eye(3), 0.1, 4)
        assert env.v_lower <= env.v_upper
        assert v_lower_bound(10.0, -1.0, 1.0, 1.0) < 10.0


class TestEigenvalueBounds:
    def test_no_lipschitz_term(self):
        hi, lo = eigenvalue_bound_formulas(0.0, 0.0, 0.0, 4, 3, 2.0, 0.5, 0.01)
        assert hi == pytest.approx(math.sqrt(0.04))
        assert lo == pytest.approx(0.0)
        hi, lo = eigenvalue_bound_formulas(0.0, 10.0, 0.0, 4, 3, 2.0, 0.5, 0.01)
        assert lo == pytest.approx(math.sqrt(0.01))

    def test_identity_diffusion(self):
        hi, lo = eigenvalue_bound_formulas(0.0, 1.0, 0.0, 4, 3, 1.0, 1.0, 0.01)
        assert hi == pytest.approx(math.sqrt(0.02), rel=1e-14)
        assert lo == pytest.approx(math.sqrt(0.02), rel=1e-14)

    def test_sqrt_eps_scaling(self):
        ratios = [eigenvalue_bound_formulas(0.0, 1.0, 10.0, 4, 3, 1.0, 1.0, e)[0] / math.sqrt(e)
                  for e in (1e-2, 1e-4, 1e-6, 1e-8)]
        assert max(ratios) < 10.0
        assert eigenvalue_bound_formulas(0.0, 0.0, 10.0, 4, 3, 1.0, 1.0, 1e-12)[0] < 1e-5


class TestDissipativity:
    def test_contraction(self, rng):
        model = linear_model(-np.eye(3))
        pairs = [(rng.normal(size=3), rng.normal(size=3)) for _ in range(10)]
        hi, lo = dissipativity_estimate(model, pairs)
        assert hi == pytest.approx(-1.0) and lo == pytest.approx(-1.0)

    def test_rayleigh(self):
        a = np.array([[2.0, 1.0], [1.0, 2.0]])
        lam, u = np.linalg.eigh(a)
        pairs = [(u[:, 0], np.zeros(2)), (u[:, 1], np.zeros(2))]
        hi, lo = dissipativity_estimate(linear_model(a), pairs)
        assert hi == pytest.approx(lam[1]) and lo == pytest.approx(lam[0])

    def test_single_pair(self):
        hi, lo = dissipativity_estimate(linear_model([[1.0, 2.0], [0.0, 3.0]]), [(np.ones(2), np.zeros(2))])
        assert hi == lo

    def test_degenerate(self):
        with pytest.raises(InvalidArgumentError):
            dissipativity_estimate(linear_model(np.eye(2)), [(np.ones(2), np.ones(2))])


def test_time_average():
    assert time_average([1.0, 2.0, 3.0], 1.0 / 3.0) == 2.5
    assert time_average([7.0] * 10, 0.5) == 7.0
    assert time_average([2.0, 4.0], 0.0) == 3.0
    with pytest.raises(InvalidArgumentError):
        time_average([], 0.0)


class TestLoglogSlope:
    def test_half_power(self):
        slope, _ = loglog_slope([0.01, 0.1, 1.0], [0.1, 0.3162278, 1.0])
        assert abs(slope - 0.5) <= 1e-6

    def test_constant_and_identity(self):
        assert loglog_slope([1.0, 10.0, 100.0], [3.0, 3.0, 3.0])[0] == pytest.approx(0.0, abs=1e-12)
        assert loglog_slope([1.0, 10.0, 100.0], [1.0, 10.0, 100.0])[0] == pytest.approx(1.0, abs=1e-12)

    def test_non_positive(self):
        with pytest.raises(InvalidArgumentError):
            loglog_slope([1.0, 2.0], [1.0, 0.0])
        with pytest.raises(InvalidArgumentError):
            loglog_slope([1.0], [1.0])


def test_row_invariants_detect_violations():
    good = np.array([[0.0, 0.0, 2.0, 0.5, 1.5, math.sqrt(2.5), 2.0]])
    assert sum(check_row_invariants(good, 4).values()) == 0
    bad = good.copy()
    bad[0, 5] = 3.0
    assert check_row_invariants(bad, 4)["frob_upper"] == 1


def test_csv(tmp_path):
    d = np.array([[0.0, 0.1, 1.0 / 3.0, 0.0, 1.0, 1.0, 1.0]])
    path = write_diagnostics_csv(d, tmp_path / "d.csv")
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == DIAG_COLUMNS
    assert float(rows[1][2]) == 1.0 / 3.0
    empty = write_diagnostics_csv(np.empty((0, 7)), tmp_path / "e.csv")
    assert open(empty).read().strip() == ",".join(DIAG_COLUMNS)
