import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddpc.errors import DimensionMismatch, NotPositiveDefinite
from ddpc.qp import (UNBOUNDED, QpSettings, QpSolver, QpStatus, QuadraticProgram,
                     kkt_residual, solve)

from oracles import full_kkt, qp_oracle
from qp_cases import random_qp


def scalar_clamp():
    # (z - 1)^2 = z^2 - 2z + 1
    return QuadraticProgram([[2.0]], [-2.0], [0.0], [0.5])


def unconstrained():
    return QuadraticProgram(np.diag([2.0, 4.0]), [-2.0, -4.0])


# -- examples -----------------------------------------------------------------

def test_scalar_clamp():
    sol = solve(scalar_clamp())
    assert sol.status is QpStatus.OPTIMAL
    assert sol.z[0] == pytest.approx(0.5, abs=1e-10)


def test_unconstrained_minimizer():
    sol = solve(unconstrained())
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-12)
    assert sol.iterations == 0


def test_kkt_at_analytic_optimum():
    # stationarity 2*0.5 - 2 + y = 0 -> y = 1 on the upper bound
    p, d = kkt_residual(scalar_clamp(), [0.5], [1.0])
    assert p <= 1e-12 and d <= 1e-12


def test_kkt_dual_at_origin():
    p, d = kkt_residual(unconstrained(), [0.0, 0.0])
    assert p == 0.0
    assert d == pytest.approx(4.0)


def test_kkt_grows_linearly_with_perturbation():
    qp = unconstrained()
    res = [kkt_residual(qp, [1.0 + h, 1.0])[1] for h in (1e-3, 2e-3, 4e-3)]
    # gradient of the first coordinate is 2h
    np.testing.assert_allclose(res, [2e-3, 4e-3, 8e-3], rtol=1e-9)


def test_kkt_primal_violation():
    p, _ = kkt_residual(scalar_clamp(), [0.7], [0.0])
    assert p == pytest.approx(0.2)


def test_kkt_dimension_checks():
    qp = unconstrained()
    with pytest.raises(DimensionMismatch):
        kkt_residual(qp, [1.0])
    with pytest.raises(DimensionMismatch):
        kkt_residual(qp, [1.0, 1.0], [0.0])


# -- validation ---------------------------------------------------------------

def test_not_positive_definite():
    qp = QuadraticProgram(np.diag([1.0, -1.0]), [0.0, 0.0], [-1, -1], [1, 1])
    with pytest.raises(NotPositiveDefinite):
        solve(qp)


def test_semidefinite_rejected():
    qp = QuadraticProgram(np.diag([1.0, 0.0]), [0.0, 0.0])
    with pytest.raises(NotPositiveDefinite):
        solve(qp)


@pytest.mark.parametrize("kwargs", [
    dict(H=[[1.0, 2.0], [0.0, 1.0]], f=[0, 0]),
    dict(H=np.eye(2), f=[0, 0], lower=[1, 1], upper=[0, 0]),
    dict(H=np.eye(2), f=[0, np.nan]),
    dict(H=np.eye(2), f=[0, 0], A=[[1, 1]], l=[1], u=[0]),
])
def test_invalid_data(kwargs):
    with pytest.raises(ValueError):
        QuadraticProgram(**kwargs)


def test_dimension_mismatch_in_bounds():
    with pytest.raises(DimensionMismatch):
        QuadraticProgram(np.eye(3), [0, 0, 0], lower=[0, 0])


def test_unbounded_sentinel_is_infinite():
    qp = QuadraticProgram(np.eye(2), [0, 0])
    assert np.all(qp.lower == -UNBOUNDED) and np.all(np.isinf(qp.upper))


def test_dump_round_trip(tmp_path):
    qp = random_qp(np.random.default_rng(3), 6, 3)
    path = qp.dump(tmp_path / "qp.json")
    back = QuadraticProgram.from_dict(json.loads(path.read_text()))
    for name in ("H", "f", "lower", "upper", "A", "l", "u"):
        np.testing.assert_array_equal(getattr(back, name), getattr(qp, name))


# -- infeasibility ------------------------------------------------------------

def test_infeasible_affine_rows():
    # z1 + z2 >= 3 with both in [0, 1]
    qp = QuadraticProgram(np.eye(2), [0, 0], [0, 0], [1, 1], [[1, 1]], [3], [UNBOUNDED])
    sol = solve(qp)
    assert sol.status is QpStatus.INFEASIBLE


def test_infeasible_contradicting_rows():
    qp = QuadraticProgram(np.eye(2), [1, 1], A=[[1, 0], [-1, 0]], l=[1, 1], u=[2, 2])
    assert solve(qp).status is QpStatus.INFEASIBLE


# -- oracle comparison --------------------------------------------------------

def _check_against_oracle(qp):
    sol = solve(qp)
    assert sol.status is QpStatus.OPTIMAL
    z_ref = qp_oracle(qp.H, qp.f, qp.lower, qp.upper, qp.A if qp.m else None, qp.l, qp.u)
    f_ref = qp.objective(z_ref)
    assert abs(sol.objective - f_ref) <= 1e-6 * max(1.0, abs(f_ref))
    primal, dual, comp = full_kkt(qp, sol.z, sol.y)
    assert primal <= 1e-6 and dual <= 1e-6 and comp <= 1e-6
    assert sol.primal_residual <= 1e-8 and sol.dual_residual <= 1e-8


def test_spec_sized_instance():
    # n = 20, m = 10 affine rows
    _check_against_oracle(random_qp(np.random.default_rng(20), 20, 10))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 30), m=st.integers(0, 8))
def test_random_qps_match_oracle(seed, n, m):
    _check_against_oracle(random_qp(np.random.default_rng(seed), n, m))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 50))
def test_diagonal_hessian_is_exact_clamp(seed, n):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.1, 10, n)
    f = rng.standard_normal(n) * 3
    lo = rng.uniform(-1, 0, n)
    hi = lo + rng.uniform(0, 2, n)
    lo[rng.random(n) < 0.2] = -UNBOUNDED
    sol = solve(QuadraticProgram(np.diag(d), f, lo, hi))
    np.testing.assert_allclose(sol.z, np.clip(-f / d, lo, hi), atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_argmin_scaling_invariance(seed, scale):
    qp = random_qp(np.random.default_rng(seed), 12, 4)
    scaled = QuadraticProgram(qp.H * scale, qp.f * scale, qp.lower, qp.upper, qp.A, qp.l, qp.u)
    np.testing.assert_allclose(solve(scaled).z, solve(qp).z, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_returned_point_respects_box(seed):
    qp = random_qp(np.random.default_rng(seed), 15, 5)
    sol = solve(qp)
    assert np.all(sol.z >= qp.lower - 1e-8) and np.all(sol.z <= qp.upper + 1e-8)


# -- warm starts and caching --------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_warm_resolve_is_fast(seed):
    qp = random_qp(np.random.default_rng(seed), 25, 6)
    solver = QpSolver()
    first = solver.solve(qp)
    again = solver.solve(qp, warm_start=first)
    assert again.status is QpStatus.OPTIMAL
    assert again.iterations <= 5
    np.testing.assert_allclose(again.z, first.z, atol=1e-8)


def test_factorization_cache_reused():
    rng = np.random.default_rng(1)
    qp = random_qp(rng, 10, 3)
    solver = QpSolver(polish=False)
    solver.solve(qp)
    count = solver.factorizations
    other = QuadraticProgram(qp.H, rng.standard_normal(10), qp.lower, qp.upper, qp.A, qp.l, qp.u)
    solver.solve(other)
    # the Hessian factor is shared; only an adapted rho may refactor the KKT matrix
    assert solver._h_key is qp.H
    assert solver.factorizations >= count


def test_deterministic():
    qp = random_qp(np.random.default_rng(9), 30, 10)
    a, b = solve(qp), solve(qp)
    assert np.array_equal(a.z, b.z) and a.iterations == b.iterations


def test_max_iters_status():
    qp = random_qp(np.random.default_rng(4), 30, 10)
    sol = QpSolver(QpSettings(max_iters=3, polish=False)).solve(qp)
    assert sol.status is QpStatus.MAX_ITERS and not sol.optimal


def test_unknown_setting():
    with pytest.raises(TypeError):
        QpSolver(rhoo=2.0)


def test_dual_signs():
    # lower bound active on z1, upper on z2
    qp = QuadraticProgram(np.eye(2), [2.0, -2.0], [-1, -1], [1, 1])
    sol = solve(qp)
    np.testing.assert_allclose(sol.z, [-1, 1], atol=1e-10)
    assert sol.y[0] < 0 < sol.y[1]
