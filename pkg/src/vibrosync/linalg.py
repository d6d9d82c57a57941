"""Dense linear-algebra helpers: Lyapunov certificates, robustness margins,
M-matrix tests and transition matrices of time-varying linear systems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

hurwitz_margin = 1e-12
lyapunov_residual_tolerance = 1e-9
symmetry_tolerance = 1e-10
steps_per_period = 40
default_oversampling = 48
horizon_periods = 200
horizon_rel_tolerance = 1e-3


class NotHurwitz(ValueError):
    pass


class StepTooCoarse(ValueError):
    pass


class HorizonTooShort(ValueError):
    pass


def is_hurwitz(a: np.ndarray, margin: float = hurwitz_margin) -> bool:
    """True when every eigenvalue has real part strictly below ``-margin``."""
    return bool(np.all(np.linalg.eigvals(np.asarray(a, dtype=float)).real < -margin))


def solve_lyapunov(a: np.ndarray, q: Optional[np.ndarray] = None) -> np.ndarray:
    """Solve A^T X + X A = -Q for symmetric positive definite X.

    Q defaults to the identity.  Solved densely through the
    Kronecker-vectorized linear system; raises NotHurwitz when A has an
    eigenvalue with real part >= -1e-12 (no solution exists then).
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not is_hurwitz(a):
        raise NotHurwitz("matrix has an eigenvalue with nonnegative real part")
    if q is None:
        q = np.eye(n)
    q = np.asarray(q, dtype=float)
    ident = np.eye(n)
    # vec(A^T X) = (I kron A^T) vec X, vec(X A) = (A^T kron I) vec X
    k = np.kron(ident, a.T) + np.kron(a.T, ident)
    x = np.linalg.solve(k, -q.reshape(-1)).reshape(n, n)
    x = 0.5 * (x + x.T)
    residual = np.abs(a.T @ x + x @ a + q).max()
    if residual > lyapunov_residual_tolerance:
        raise ValueError(f"Lyapunov solve left residual {residual:.2e}")
    return x


@dataclass(frozen=True)
class RobustnessValue:
    """Reciprocal of the largest eigenvalue of the Lyapunov certificate.

    Scales linearly with the matrix: R(c A) = c R(A) for c > 0, and for
    a matrix -mu*I it evaluates to 2*mu.
    """

    value: float
    certificate: np.ndarray
    residual: float
    asymmetry: float

    def __post_init__(self):
        if self.residual > lyapunov_residual_tolerance:
            raise ValueError("certificate residual too large")
        if self.asymmetry > symmetry_tolerance:
            raise ValueError("certificate is not symmetric")


def robustness(a: np.ndarray) -> RobustnessValue:
    """Stability robustness of a Hurwitz matrix via its Lyapunov certificate."""
    a = np.asarray(a, dtype=float)
    x = solve_lyapunov(a)
    residual = float(np.abs(a.T @ x + x @ a + np.eye(a.shape[0])).max())
    asymmetry = float(np.abs(x - x.T).max())
    lam = float(np.linalg.eigvalsh(x).max())
    return RobustnessValue(value=1.0 / lam, certificate=x,
                           residual=residual, asymmetry=asymmetry)


def is_m_matrix(a: np.ndarray, tol: float = 0.0) -> bool:
    """Nonsingular M-matrix test: off-diagonal entries <= tol and every
    leading principal minor strictly positive."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    off = a - np.diag(np.diag(a))
    if np.any(off > tol):
        return False
    for k in range(1, n + 1):
        if np.linalg.det(a[:k, :k]) <= 0.0:
            return False
    return True


# ---------------------------------------------------------------------------
# transition matrices and averaged conjugations


def _resolve_step(t_span: float, dt: Optional[float], min_period: Optional[float]) -> float:
    if dt is None:
        if min_period is None:
            raise ValueError("need dt or min_period to choose a step size")
        dt = min_period / default_oversampling
    if min_period is not None and dt > min_period / steps_per_period * (1 + 1e-12):
        raise StepTooCoarse(
            f"dt={dt:g} gives fewer than {steps_per_period} steps per period {min_period:g}"
        )
    if dt <= 0 or t_span < 0:
        raise ValueError("need positive dt and nonnegative span")
    return dt


def state_transition(p: Callable[[float], np.ndarray], t0: float, t1: float,
                     dt: Optional[float] = None,
                     min_period: Optional[float] = None) -> np.ndarray:
    """Transition matrix of dv/dt = P(t) v from t0 to t1 (fixed-step RK4)."""
    dt = _resolve_step(t1 - t0, dt, min_period)
    n = np.asarray(p(t0)).shape[0]
    phi = np.eye(n)
    if t1 == t0:
        return phi
    steps = max(1, int(np.ceil((t1 - t0) / dt - 1e-12)))
    h = (t1 - t0) / steps
    t = t0
    for _ in range(steps):
        k1 = p(t) @ phi
        k2 = p(t + 0.5 * h) @ (phi + 0.5 * h * k1)
        k3 = p(t + 0.5 * h) @ (phi + 0.5 * h * k2)
        k4 = p(t + h) @ (phi + h * k3)
        phi = phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return phi


def conjugated_average(j: np.ndarray, p: Optional[Callable[[float], np.ndarray]],
                       T: Optional[float] = None, dt: Optional[float] = None,
                       base_period: Optional[float] = None,
                       min_period: Optional[float] = None,
                       rel_tol: float = horizon_rel_tolerance) -> np.ndarray:
    """Time average of Phi(t)^-1 J Phi(t) for the flow of dPhi/dt = P(t) Phi.

    The average uses the mean-one normalization of the raw fundamental
    solution (started at the identity), which coincides with choosing the
    zero-mean primitive at every order.  Convergence is checked by doubling
    the horizon; a relative drift above ``rel_tol`` raises HorizonTooShort.
    With ``p=None`` the input is returned unchanged.
    """
    j = np.asarray(j, dtype=float)
    if p is None:
        return j.copy()
    if T is None:
        if base_period is None:
            raise ValueError("need T or base_period for the averaging horizon")
        T = horizon_periods * base_period
    if dt is None and min_period is None:
        # single-frequency convenience: the base period also bounds the step
        min_period = base_period
    dt = _resolve_step(T, dt, min_period)

    n = j.shape[0]
    psi = np.eye(n)
    steps = max(1, int(np.ceil(T / dt - 1e-12)))
    h = T / steps

    def average_until(total_steps: int, psi0: np.ndarray, t_start: float,
                      acc_psi: np.ndarray, acc_m: np.ndarray, done: int):
        psi_c = psi0
        t = t_start
        for _ in range(total_steps - done):
            k1 = p(t) @ psi_c
            k2 = p(t + 0.5 * h) @ (psi_c + 0.5 * h * k1)
            k3 = p(t + 0.5 * h) @ (psi_c + 0.5 * h * k2)
            k4 = p(t + h) @ (psi_c + h * k3)
            psi_next = psi_c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            m_c = np.linalg.solve(psi_c, j @ psi_c)
            m_n = np.linalg.solve(psi_next, j @ psi_next)
            acc_psi += 0.5 * h * (psi_c + psi_next)
            acc_m += 0.5 * h * (m_c + m_n)
            psi_c = psi_next
            t += h
        return psi_c, t, acc_psi, acc_m

    acc_psi = np.zeros((n, n))
    acc_m = np.zeros((n, n))
    psi, t, acc_psi, acc_m = average_until(steps, psi, 0.0, acc_psi, acc_m, 0)
    mean_psi = acc_psi / T
    mean_m = acc_m / T
    jbar_1 = mean_psi @ mean_m @ np.linalg.inv(mean_psi)

    psi, t, acc_psi, acc_m = average_until(2 * steps, psi, t, acc_psi, acc_m, steps)
    mean_psi = acc_psi / (2 * T)
    mean_m = acc_m / (2 * T)
    jbar_2 = mean_psi @ mean_m @ np.linalg.inv(mean_psi)

    scale = max(float(np.abs(jbar_2).max()), 1e-30)
    drift = float(np.abs(jbar_2 - jbar_1).max()) / scale
    if drift > rel_tol:
        raise HorizonTooShort(
            f"average moved by {drift:.2e} (rel) when doubling the horizon {T:g}"
        )
    return jbar_2
