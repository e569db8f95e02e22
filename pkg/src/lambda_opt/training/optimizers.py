"""Row-wise optimizer rules for the fixed-lambda baseline trainers.

Every buffer has the shape of the factor matrix it accompanies and is
updated lazily: a sample on entry (i, j) touches buffer rows i (U side)
and j (V side) only. Adam and Nadam keep one step counter per row so
bias correction counts the updates that row actually received.

Rules (g is the sample gradient, beta the momentum coefficient):
- sgd:       theta <- theta - eta * g
- momentum:  vel <- beta * vel + g;  theta <- theta - eta * vel
- nesterov:  g taken at the lookahead point theta - eta * beta * vel, then as momentum
- adam:      bias-corrected first/second moments, theta -= eta * m_hat / (sqrt(v_hat) + eps)
- nadam:     adam with the Nesterov-style first moment
             beta1 * m / (1 - beta1^(t+1)) + (1 - beta1) * g / (1 - beta1^t)
"""

import numpy as np

from lambda_opt.errors import UsageError
from lambda_opt.model.core_model import FactorPair, row_dot
from lambda_opt.training.gradients import grad_sample, sample_gradients, sgd_apply

OPTIMIZER_LAMBDA_OPT = "lambda_opt"
OPTIMIZER_SGD = "sgd"
OPTIMIZER_MOMENTUM = "momentum"
OPTIMIZER_NESTEROV = "nesterov"
OPTIMIZER_ADAM = "adam"
OPTIMIZER_NADAM = "nadam"

BASELINE_OPTIMIZERS = (
    OPTIMIZER_SGD,
    OPTIMIZER_MOMENTUM,
    OPTIMIZER_NESTEROV,
    OPTIMIZER_ADAM,
    OPTIMIZER_NADAM,
)
ALL_OPTIMIZERS = (OPTIMIZER_LAMBDA_OPT,) + BASELINE_OPTIMIZERS


class SgdOptimizer:
    """Plain SGD; no auxiliary buffers."""

    def __init__(self, factors: FactorPair, eta: float) -> None:
        self.eta = eta

    def apply(
        self,
        factors: FactorPair,
        i: int,
        j: int,
        observed: float,
        e_t: float,
        lam: float,
    ) -> None:
        g_u, g_v = grad_sample(factors, i, j, e_t, lam)
        sgd_apply(factors, i, j, g_u, g_v, self.eta)

    def buffer_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}


class MomentumOptimizer:
    """Heavy-ball momentum with per-row velocity buffers."""

    def __init__(self, factors: FactorPair, eta: float, momentum: float = 0.9) -> None:
        self.eta = eta
        self.momentum = momentum
        self.vel_u = np.zeros_like(factors.U)
        self.vel_v = np.zeros_like(factors.V)

    def _gradients(
        self,
        factors: FactorPair,
        i: int,
        j: int,
        observed: float,
        e_t: float,
        lam: float,
    ) -> tuple[np.ndarray, np.ndarray]:
        return grad_sample(factors, i, j, e_t, lam)

    def apply(
        self,
        factors: FactorPair,
        i: int,
        j: int,
        observed: float,
        e_t: float,
        lam: float,
    ) -> None:
        g_u, g_v = self._gradients(factors, i, j, observed, e_t, lam)
        vel_u = self.vel_u[i]
        vel_v = self.vel_v[j]
        vel_u *= self.momentum
        vel_u += g_u
        vel_v *= self.momentum
        vel_v += g_v
        sgd_apply(factors, i, j, vel_u, vel_v, self.eta)

    def buffer_shapes(self) -> dict[str, tuple[int, ...]]:
        return {"vel_u": self.vel_u.shape, "vel_v": self.vel_v.shape}


class NesterovOptimizer(MomentumOptimizer):
    """Momentum with the gradient evaluated at the lookahead point."""

    def _gradients(
        self,
        factors: FactorPair,
        i: int,
        j: int,
        observed: float,
        e_t: float,
        lam: float,
    ) -> tuple[np.ndarray, np.ndarray]:
        shift = self.eta * self.momentum
        u_ahead = factors.U[i] - shift * self.vel_u[i]
        v_ahead = factors.V[j] - shift * self.vel_v[j]
        e_ahead = observed - row_dot(u_ahead, v_ahead)
        return sample_gradients(u_ahead, v_ahead, e_ahead, lam)


class AdamOptimizer:
    """Adam with per-row moment buffers and per-row step counters."""

    def __init__(
        self,
        factors: FactorPair,
        eta: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.eta = eta
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m_u = np.zeros_like(factors.U)
        self.v_u = np.zeros_like(factors.U)
        self.m_v = np.zeros_like(factors.V)
        self.v_v = np.zeros_like(factors.V)
        self.t_u = np.zeros(factors.m, dtype=np.int64)
        self.t_v = np.zeros(factors.n, dtype=np.int64)

    def _first_moment(self, m: np.ndarray, g: np.ndarray, t: int) -> np.ndarray:
        return m / (1.0 - self.beta1**t)

    def _update_row(
        self,
        theta: np.ndarray,
        m: np.ndarray,
        v: np.ndarray,
        g: np.ndarray,
        t: int,
    ) -> None:
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        m_hat = self._first_moment(m, g, t)
        v_hat = v / (1.0 - self.beta2**t)
        theta -= self.eta * m_hat / (np.sqrt(v_hat) + self.eps)

    def apply(
        self,
        factors: FactorPair,
        i: int,
        j: int,
        observed: float,
        e_t: float,
        lam: float,
    ) -> None:
        g_u, g_v = grad_sample(factors, i, j, e_t, lam)
        self.t_u[i] += 1
        self.t_v[j] += 1
        self._update_row(factors.U[i], self.m_u[i], self.v_u[i], g_u, int(self.t_u[i]))
        self._update_row(factors.V[j], self.m_v[j], self.v_v[j], g_v, int(self.t_v[j]))

    def buffer_shapes(self) -> dict[str, tuple[int, ...]]:
        return {
            "m_u": self.m_u.shape,
            "v_u": self.v_u.shape,
            "m_v": self.m_v.shape,
            "v_v": self.v_v.shape,
        }


class NadamOptimizer(AdamOptimizer):
    """Adam with a Nesterov-style first-moment term."""

    def _first_moment(self, m: np.ndarray, g: np.ndarray, t: int) -> np.ndarray:
        return (
            self.beta1 * m / (1.0 - self.beta1 ** (t + 1))
            + (1.0 - self.beta1) * g / (1.0 - self.beta1**t)
        )


def make_optimizer(
    name: str,
    factors: FactorPair,
    eta: float,
    momentum: float = 0.9,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> SgdOptimizer | MomentumOptimizer | AdamOptimizer:
    """Allocate the named baseline optimizer with buffers shaped like factors."""
    if name == OPTIMIZER_SGD:
        return SgdOptimizer(factors, eta)
    if name == OPTIMIZER_MOMENTUM:
        return MomentumOptimizer(factors, eta, momentum)
    if name == OPTIMIZER_NESTEROV:
        return NesterovOptimizer(factors, eta, momentum)
    if name == OPTIMIZER_ADAM:
        return AdamOptimizer(factors, eta, beta1, beta2, eps)
    if name == OPTIMIZER_NADAM:
        return NadamOptimizer(factors, eta, beta1, beta2, eps)
    raise UsageError(f"Unknown baseline optimizer {name!r}; expected one of {BASELINE_OPTIMIZERS}.")

