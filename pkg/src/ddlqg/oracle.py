"""Model-based ground truth.

Everything here uses the true plant matrices and noise statistics, and is
meant only to validate the data-driven estimates.

Sign convention: feedback gains include their sign, i.e. ``u = K x``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolation, DegenerateError, DivergenceError, ValidationError
from .linalg import pinv, psd_sqrt, symmetrize

RICCATI_TOL = 1e-12
RICCATI_MAX_ITER = 100_000


def _rank(M, tol=1e-9):
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol * max(s[0], 1.0))) if s.size else 0


def controllability_matrix(A, B):
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(A, B, tol=1e-9):
    return _rank(controllability_matrix(A, B), tol) == A.shape[0]


def is_observable(A, C, tol=1e-9):
    return is_controllable(A.T, C.T, tol)


def riccati_residual(P, A, B, Q, R):
    """Frobenius norm of P - (Q + A'PA - A'PB (R + B'PB)^-1 B'PA)."""
    BtPA = B.T @ P @ A
    rhs = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)
    return float(np.linalg.norm(P - rhs))


def solve_dare(A, B, Q, R, P0=None, tol=RICCATI_TOL, max_iter=RICCATI_MAX_ITER, history=None):
    """Value iteration for the discrete algebraic Riccati equation.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA until successive iterates
    differ by less than ``tol`` in Frobenius norm.

    Args:
        P0: starting point, defaults to Q.
        history: optional list; receives ``(P_k, step_norm)`` for every iterate.

    Raises:
        DivergenceError: no convergence within ``max_iter`` iterations.
    """
    P = symmetrize(np.array(Q if P0 is None else P0, dtype=float))
    for k in range(1, max_iter + 1):
        BtPA = B.T @ P @ A
        P_next = symmetrize(Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA))
        step = float(np.linalg.norm(P_next - P))
        if not np.isfinite(step):
            raise DivergenceError(f"Riccati iteration produced non-finite values at step {k}")
        if history is not None:
            history.append((P_next, step))
        P = P_next
        if step < tol:
            return P
    raise DivergenceError(f"Riccati iteration did not converge in {max_iter} iterations "
                          f"(last step {step:.3e})")


def lqr_gain(system, weights, return_cost=False):
    """Stationary LQR gain ``K`` with ``u = K x``.

    Raises:
        AssumptionViolation: (A, B) not controllable or (A, Q_x^1/2) not observable.
        DivergenceError: the Riccati iteration failed.
    """
    weights.check_against(system)
    A, B = system.A, system.B
    Q, R = weights.Q_x, weights.R_u
    if not is_controllable(A, B):
        raise AssumptionViolation("(A, B) is not controllable")
    if not is_observable(A, psd_sqrt(Q, "Q_x")):
        raise AssumptionViolation("(A, Q_x^1/2) is not observable")
    P = solve_dare(A, B, Q, R)
    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return (K, P) if return_cost else K


def finite_horizon_lqr(system, weights, T, x0):
    """Noise-free optimal trajectory for sum_{t<=T} x'Q_x x + sum_{t<T} u'R_u u.

    Backward Riccati recursion with terminal weight Q_x.

    Returns:
        (inputs m x T, states n x (T+1), gains list of K_t)
    """
    A, B = system.A, system.B
    Q, R = weights.Q_x, weights.R_u
    P = Q.copy()
    gains = [None] * T
    for t in range(T - 1, -1, -1):
        K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        gains[t] = K
        P = symmetrize(Q + A.T @ P @ (A + B @ K))
    x = np.empty((system.n, T + 1))
    u = np.empty((system.m, T))
    x[:, 0] = np.asarray(x0, dtype=float).reshape(-1)
    for t in range(T):
        u[:, t] = gains[t] @ x[:, t]
        x[:, t + 1] = A @ x[:, t] + B @ u[:, t]
    return u, x, gains


def feedback_trajectory(system, K, x0, T):
    """Noise-free states n x (T+1) and inputs m x T under u = K x."""
    x = np.empty((system.n, T + 1))
    u = np.empty((system.m, T))
    x[:, 0] = np.asarray(x0, dtype=float).reshape(-1)
    for t in range(T):
        u[:, t] = K @ x[:, t]
        x[:, t + 1] = system.A @ x[:, t] + system.B @ u[:, t]
    return u, x


@dataclass(frozen=True)
class KalmanOracle:
    """Time-varying Kalman filter over t = 0..T in stacked-gain form.

    ``gains[t]`` is the n x (mt + p(t+1)) matrix mapping
    [u(0..t-1); y(0..t)] to the filtered estimate of x(t). ``filter_gains[t]``
    is the usual measurement-update gain and ``error_covariances[t]`` the
    filtered error covariance.
    """

    gains: list
    error_covariances: list
    filter_gains: list
    predicted_covariances: list
    n: int
    m: int
    p: int

    @property
    def T(self):
        return len(self.gains) - 1

    def split(self, t):
        """(L_t^u, L_t^y) blocks of the stacked gain at time t."""
        L = self.gains[t]
        return L[:, :self.m * t], L[:, self.m * t:]


def kalman_oracle(system, T):
    """Time-varying Kalman filter from the prior x(0) ~ N(0, Sigma0)."""
    if T < 0:
        raise ValidationError(f"T must be nonnegative, got {T}")
    A, B, C = system.A, system.B, system.C
    n, m, p = system.n, system.m, system.p
    I = np.eye(n)
    Pm = system.Sigma0.copy()
    gains, covs, Gs, preds = [], [], [], []
    L = None
    for t in range(T + 1):
        G = Pm @ C.T @ np.linalg.inv(C @ Pm @ C.T + system.R_v)
        Phi = I - G @ C
        Sigma_e = symmetrize(Phi @ Pm @ Phi.T + G @ system.R_v @ G.T)
        if t == 0:
            L = G.copy()
        else:
            # x(t) = Phi (A x(t-1) + B u(t-1)) + G y(t); L ordered [u(0..t-1); y(0..t)]
            prev_u, prev_y = L[:, :m * (t - 1)], L[:, m * (t - 1):]
            PA = Phi @ A
            L = np.hstack([PA @ prev_u, Phi @ B, PA @ prev_y, G])
        gains.append(L)
        covs.append(Sigma_e)
        Gs.append(G)
        preds.append(Pm)
        Pm = symmetrize(A @ Sigma_e @ A.T + system.Q_w)
    return KalmanOracle(gains, covs, Gs, preds, n, m, p)


def steady_state_kalman(system):
    """Stationary measurement-update gain G and predicted covariance.

    The filter Riccati equation is the dual DARE, iterated from Sigma0, so
    the result is the limit of :func:`kalman_oracle`'s gains.
    """
    Pm = solve_dare(system.A.T, system.C.T, system.Q_w, system.R_v, P0=system.Sigma0)
    G = Pm @ system.C.T @ np.linalg.inv(system.C @ Pm @ system.C.T + system.R_v)
    return G, Pm


@dataclass(frozen=True)
class StaticLqgGain:
    """u(t+n) = K [u(t..t+n-1); y(t+1..t+n)].

    Also carries the pieces it was built from, for diagnostics.
    """

    K: np.ndarray
    K_lqr: np.ndarray
    filter_gain: np.ndarray
    closed_loop_filter: np.ndarray
    window_sigma_min: float


def lqg_static_gain(system, weights):
    """Window form of the LQG controller (steady-state filter + LQR).

    In closed loop the steady-state filter is
        xh(t+1) = Abar xh(t) + G y(t+1),   Abar = (I - G C)(A + B K_lqr),
    so u(t+k) = K_lqr Abar^k xh(t) + (terms in y(t+1..t+k)). Stacking k < n
    recovers xh(t) from the input window by pseudo-inverse; propagating n
    steps and applying K_lqr gives u(t+n).

    Raises:
        DegenerateError: the stacked K_lqr Abar^k matrix lacks full column rank.
    """
    K = lqr_gain(system, weights)
    G, _ = steady_state_kalman(system)
    n, m, p = system.n, system.m, system.p
    Abar = (np.eye(n) - G @ system.C) @ (system.A + system.B @ K)
    powers = [np.eye(n)]
    for _ in range(n):
        powers.append(Abar @ powers[-1])
    # u-window = Obs xh(t) + Gam y-window, y-window = [y(t+1); ...; y(t+n)]
    Obs = np.vstack([K @ powers[k] for k in range(n)])
    Gam = np.zeros((n * m, n * p))
    for k in range(n):
        for j in range(k):
            Gam[k * m:(k + 1) * m, j * p:(j + 1) * p] = K @ powers[k - 1 - j] @ G
    s = np.linalg.svd(Obs, compute_uv=False)
    if s[-1] <= 1e-10 * max(s[0], 1.0):
        raise DegenerateError(
            f"window-observability matrix is rank deficient (sigma_min={s[-1]:.3e})",
            sigma_min=float(s[-1]))
    Obs_pinv, _ = pinv(Obs)
    # xh(t+n) = Abar^n xh(t) + sum_j Abar^{n-1-j} G y(t+1+j)
    drive = np.hstack([powers[n - 1 - j] @ G for j in range(n)])
    recover = powers[n] @ Obs_pinv
    K_u = K @ recover
    K_y = K @ (drive - recover @ Gam)
    return StaticLqgGain(K=np.hstack([K_u, K_y]), K_lqr=K, filter_gain=G,
                         closed_loop_filter=Abar, window_sigma_min=float(s[-1]))
