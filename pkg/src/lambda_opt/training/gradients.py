"""Per-sample gradient and plain SGD row update.

Both functions touch a single observed entry (i, j): only row i of U
and row j of V are read or written.
"""

import numpy as np

from lambda_opt.errors import UsageError
from lambda_opt.model.core_model import FactorPair


def sample_gradients(
    u: np.ndarray,
    v: np.ndarray,
    e_t: float,
    lambda_ij: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of e^2 + lambda * (|u|^2 + |v|^2) at explicit row vectors."""
    g_u = -2.0 * e_t * v + 2.0 * lambda_ij * u
    g_v = -2.0 * e_t * u + 2.0 * lambda_ij * v
    return g_u, g_v


def grad_sample(
    factors: FactorPair,
    i: int,
    j: int,
    e_t: float,
    lambda_ij: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Return (gU_i, gV_j) for residual e_t and coefficient lambda_ij.

    gU_i = -2 e V_j + 2 lambda U_i
    gV_j = -2 e U_i + 2 lambda V_j

    The returned arrays are fresh copies, never views into the factors.
    """
    if lambda_ij < 0:
        raise UsageError(f"lambda_ij must be >= 0, got {lambda_ij}.")
    if not (0 <= i < factors.m and 0 <= j < factors.n):
        raise UsageError(f"Index ({i}, {j}) outside factor shape {factors.m}x{factors.n}.")
    return sample_gradients(factors.U[i], factors.V[j], e_t, lambda_ij)


def sgd_row_step(
    u: np.ndarray,
    v: np.ndarray,
    e_t: float,
    lambda_ij: float,
    eta: float,
) -> None:
    """grad_sample followed by sgd_apply, on row views whose indices are already known valid.

    Same arithmetic as the checked pair, so runs through either path agree bitwise.
    """
    g_u, g_v = sample_gradients(u, v, e_t, lambda_ij)
    u -= eta * g_u
    v -= eta * g_v


def sgd_apply(
    factors: FactorPair,
    i: int,
    j: int,
    g_u: np.ndarray,
    g_v: np.ndarray,
    eta: float,
) -> FactorPair:
    """U_i <- U_i - eta * gU_i, V_j <- V_j - eta * gV_j, in place."""
    factors.U[i] -= eta * g_u
    factors.V[j] -= eta * g_v
    return factors
