import numpy as np
import pytest

from lambda_opt.errors import UsageError
from lambda_opt.model.core_model import FactorPair, init_factors, residual
from lambda_opt.training.optimizers import (
    BASELINE_OPTIMIZERS,
    AdamOptimizer,
    MomentumOptimizer,
    NadamOptimizer,
    NesterovOptimizer,
    SgdOptimizer,
    make_optimizer,
)

ENTRIES = [(0, 0, 0.9), (1, 2, 0.4), (0, 2, 0.7), (2, 1, 0.1), (1, 0, 0.5), (0, 0, 0.9)]


def _run(optimizer, factors: FactorPair, lam: float = 0.01) -> FactorPair:
    for i, j, observed in ENTRIES:
        e = residual(observed, factors, i, j)
        optimizer.apply(factors, i, j, observed, e, lam)
    return factors


def _adam_scalar_steps(theta: float, grads: list[float], eta: float, beta1: float, beta2: float, eps: float) -> float:
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta -= eta * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def test_momentum_with_zero_beta_equals_sgd_bitwise():
    plain = init_factors(3, 3, 4, seed=1)
    heavy = plain.copy()
    _run(SgdOptimizer(plain, 0.05), plain)
    _run(MomentumOptimizer(heavy, 0.05, momentum=0.0), heavy)
    assert np.array_equal(plain.U, heavy.U)
    assert np.array_equal(plain.V, heavy.V)


def test_nesterov_first_step_equals_momentum_first_step():
    a = init_factors(2, 2, 3, seed=4)
    b = a.copy()
    e = residual(0.8, a, 1, 0)
    MomentumOptimizer(a, 0.05, 0.9).apply(a, 1, 0, 0.8, e, 0.01)
    NesterovOptimizer(b, 0.05, 0.9).apply(b, 1, 0, 0.8, e, 0.01)
    assert np.array_equal(a.U, b.U) and np.array_equal(a.V, b.V)


def test_nesterov_differs_from_momentum_once_velocity_builds():
    a = init_factors(3, 3, 2, seed=4)
    b = a.copy()
    _run(MomentumOptimizer(a, 0.05, 0.9), a)
    _run(NesterovOptimizer(b, 0.05, 0.9), b)
    assert not np.array_equal(a.U, b.U)


def test_momentum_velocity_accumulates():
    factors = FactorPair(U=np.array([[1.0]]), V=np.array([[1.0]]))
    optimizer = MomentumOptimizer(factors, 0.1, momentum=0.5)
    # lam = 0 and observed = 1 with u = v = 1 gives zero gradient; use observed 2
    optimizer.apply(factors, 0, 0, 2.0, residual(2.0, factors, 0, 0), 0.0)
    assert optimizer.vel_u[0, 0] == pytest.approx(-2.0)
    assert factors.U[0, 0] == pytest.approx(1.2)


def test_adam_matches_scalar_reference():
    eta, beta1, beta2, eps = 0.01, 0.9, 0.999, 1e-8
    factors = FactorPair(U=np.array([[0.3]]), V=np.array([[0.5]]))
    optimizer = AdamOptimizer(factors, eta, beta1, beta2, eps)

    grads_u = []
    theta_u = 0.3
    for observed in (1.0, 0.8, 1.2):
        e = residual(observed, factors, 0, 0)
        grads_u.append(-2.0 * e * factors.V[0, 0])
        optimizer.apply(factors, 0, 0, observed, e, 0.0)
        expected = _adam_scalar_steps(theta_u, grads_u, eta, beta1, beta2, eps)
        assert factors.U[0, 0] == pytest.approx(expected, rel=1e-12)


def test_adam_first_step_has_magnitude_eta():
    factors = FactorPair(U=np.array([[0.3, -0.2]]), V=np.array([[0.5, 0.4]]))
    before = factors.U.copy()
    optimizer = AdamOptimizer(factors, 0.01)
    optimizer.apply(factors, 0, 0, 2.0, residual(2.0, factors, 0, 0), 0.0)
    assert np.abs(factors.U - before).tolist()[0] == pytest.approx([0.01, 0.01], rel=1e-5)


def test_adam_counts_steps_per_row():
    factors = init_factors(3, 3, 2, seed=0)
    optimizer = AdamOptimizer(factors, 0.01)
    _run(optimizer, factors)
    assert optimizer.t_u.tolist() == [3, 2, 1]
    assert optimizer.t_v.tolist() == [3, 1, 2]


def test_nadam_differs_from_adam():
    a = init_factors(3, 3, 2, seed=2)
    b = a.copy()
    _run(AdamOptimizer(a, 0.01), a)
    _run(NadamOptimizer(b, 0.01), b)
    assert not np.array_equal(a.U, b.U)
    assert np.all(np.isfinite(b.U)) and np.all(np.isfinite(b.V))


@pytest.mark.parametrize("name", BASELINE_OPTIMIZERS)
def test_buffers_match_factor_shapes(name):
    factors = init_factors(5, 3, 4, seed=0)
    optimizer = make_optimizer(name, factors, 0.01)
    for key, shape in optimizer.buffer_shapes().items():
        expected = factors.U.shape if key.endswith("_u") else factors.V.shape
        assert shape == expected


@pytest.mark.parametrize("name", BASELINE_OPTIMIZERS)
def test_untouched_rows_stay_fixed(name):
    factors = init_factors(4, 4, 2, seed=8)
    before = factors.copy()
    optimizer = make_optimizer(name, factors, 0.05)
    _run(optimizer, factors)
    # ENTRIES never touch U row 3 or V row 3
    assert np.array_equal(factors.U[3], before.U[3])
    assert np.array_equal(factors.V[3], before.V[3])


def test_unknown_optimizer_is_rejected():
    with pytest.raises(UsageError):
        make_optimizer("rmsprop", init_factors(2, 2, 1, seed=0), 0.01)
