"""LQR gain straight from noisy open-loop data.

With Ubar = [X_0; U] the stacked initial states and inputs of the dataset,
the data-implied state map is M = X Ubar^+. The finite-horizon LQR cost of
[x0; u] is then the quadratic form with

    P = M' (I_{T+1} kron Q_x) M + blkdiag(0_n, I_T kron R_u),

and minimizing it subject to the first n entries equal to x0 gives

    [u_v; x_v] = [H; M] P^-1/2 ([I_n 0] P^-1/2)^+ x0,    H = [0 I_mT].

The gain estimate is K = u_m x_m^+ over the chronological reshapes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, InsufficientDataError, ValidationError
from .linalg import inv_sqrt_pd, pinv, right_solve, symmetrize


@dataclass(frozen=True)
class LqrSynthesis:
    """Data-built matrices for the trajectory formula.

    Attributes:
        H: mT x (n+mT) input selector.
        M: n(T+1) x (n+mT) data map.
        P: (n+mT) x (n+mT) cost matrix.
        P_inv_sqrt: symmetric P^-1/2.
        fit_residual: ||M Ubar - X||_F / ||X||_F.
        sigma_min_data: smallest singular value of Ubar.
    """

    H: np.ndarray
    M: np.ndarray
    P: np.ndarray
    P_inv_sqrt: np.ndarray
    n: int
    m: int
    T: int
    fit_residual: float
    sigma_min_data: float


@dataclass(frozen=True)
class LqrTrajectoryEstimate:
    """u_v (mT,), x_v (n(T+1),) and their reshapes u_m (m x T), x_m (n x (T+1))."""

    u_v: np.ndarray
    x_v: np.ndarray
    u_m: np.ndarray
    x_m: np.ndarray


@dataclass(frozen=True)
class LqrGainEstimate:
    """Data-driven gain and diagnostics.

    ``kappa`` is sigma_max(x_m - x_m*) / sigma_min(x_m*) when a reference
    trajectory was given, else None. ``normal_residual`` is
    ||(K x_m - u_m) x_m'||_F, which vanishes at the least-squares solution.
    """

    K: np.ndarray
    kappa: float
    sigma_min_xm: float
    normal_residual: float
    trajectories: list


def build_synthesis(dataset, weights):
    """Assemble H, M, P from a dataset.

    Raises:
        InsufficientDataError: [X_0; U] lacks full row rank (needs N >= n + mT).
        IllPosedCostError: P is not safely positive definite.
    """
    n, m, T = dataset.n, dataset.m, dataset.T
    if weights.Q_x.shape != (n, n) or weights.R_u.shape != (m, m):
        raise ValidationError("cost weights do not match the dataset dimensions")
    Ubar = np.vstack([dataset.X0, dataset.U])
    try:
        M, sigma_min = right_solve(dataset.X, Ubar, what="[X_0; U]")
    except InsufficientDataError as exc:
        raise InsufficientDataError(
            f"insufficient excitation: {exc} (N={dataset.N}, need N >= n + mT = {n + m * T})",
            sigma_min=exc.sigma_min, required_N=n + m * T) from None
    fit_residual = float(np.linalg.norm(M @ Ubar - dataset.X) / np.linalg.norm(dataset.X))
    H = np.hstack([np.zeros((m * T, n)), np.eye(m * T)])
    Q_T = np.kron(np.eye(T + 1), weights.Q_x)
    R_T = np.zeros((n + m * T, n + m * T))
    R_T[n:, n:] = np.kron(np.eye(T), weights.R_u)
    P = symmetrize(M.T @ Q_T @ M + R_T)
    P_inv_sqrt = inv_sqrt_pd(P, "P")
    return LqrSynthesis(H, M, P, P_inv_sqrt, n, m, T, fit_residual, sigma_min)


def lqr_trajectories(synth, x0):
    """Estimated optimal noise-free input and state trajectories from ``x0``.

    Raises:
        DegenerateError: [I_n 0] P^-1/2 has rank < n.
    """
    n, m, T = synth.n, synth.m, synth.T
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (n,):
        raise ValidationError(f"x0 must have length {n}, got {x0.shape[0]}")
    S = synth.P_inv_sqrt[:n, :]
    S_pinv, s = pinv(S)
    if s[-1] <= 1e-10 * s[0] * max(S.shape):
        raise DegenerateError("[I_n 0] P^-1/2 is rank deficient: initial state infeasible",
                              sigma_min=float(s[-1]))
    z = synth.P_inv_sqrt @ (S_pinv @ x0)
    u_v = synth.H @ z
    x_v = synth.M @ z
    return LqrTrajectoryEstimate(u_v=u_v, x_v=x_v, u_m=u_v.reshape(T, m).T,
                                 x_m=x_v.reshape(T + 1, n).T)


def default_initial_states(n):
    """Canonical basis vectors; concatenated, their trajectories span R^n."""
    return [np.eye(n)[:, i] for i in range(n)]


def lqr_gain_from_data(dataset, weights, x0_set=None, reference=None, synth=None):
    """K = u_m x_m^+ with trajectories concatenated over several initial states.

    The state matrix keeps times 0..T-1 so that its columns pair with the
    inputs u(0..T-1).

    Args:
        x0_set: initial states; defaults to the n canonical basis vectors.
        reference: optional list of n x (T+1) (or n x T) reference state
            trajectories, one per initial state, for the kappa diagnostic.
        synth: a prebuilt :class:`LqrSynthesis` to reuse.

    Raises:
        DegenerateError: concatenated x_m has rank < n.
    """
    if synth is None:
        synth = build_synthesis(dataset, weights)
    if x0_set is None:
        x0_set = default_initial_states(synth.n)
    x0_set = list(x0_set)
    if not x0_set:
        raise ValidationError("need at least one initial state")
    T = synth.T
    trajs = [lqr_trajectories(synth, x0) for x0 in x0_set]
    u_m = np.hstack([tr.u_m for tr in trajs])
    x_m = np.hstack([tr.x_m[:, :T] for tr in trajs])
    s = np.linalg.svd(x_m, compute_uv=False)
    if s[-1] <= 1e-10 * s[0] * max(x_m.shape):
        raise DegenerateError(
            f"estimated state trajectories are rank deficient (sigma_min={s[-1]:.3e}); "
            "use more or different initial states", sigma_min=float(s[-1]))
    x_m_pinv, _ = pinv(x_m)
    K = u_m @ x_m_pinv
    kappa = None
    if reference is not None:
        ref = np.hstack([np.asarray(r, dtype=float)[:, :T] for r in reference])
        if ref.shape != x_m.shape:
            raise ValidationError(f"reference trajectories have shape {ref.shape}, "
                                  f"expected {x_m.shape}")
        kappa = float(np.linalg.norm(x_m - ref, 2) / np.linalg.svd(ref, compute_uv=False)[-1])
    normal_residual = float(np.linalg.norm((K @ x_m - u_m) @ x_m.T))
    return LqrGainEstimate(K=K, kappa=kappa, sigma_min_xm=float(s[-1]),
                           normal_residual=normal_residual, trajectories=trajs)
