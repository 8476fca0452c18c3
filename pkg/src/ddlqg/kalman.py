"""Per-time least-squares filter gains learned from open-loop data.

For each t the gain regresses the states at time t on everything measured
so far: L_t = X_t Z_t^+ with Z_t = [U_{t-1}; Y_t], i.e. inputs u(0..t-1) and
outputs y(0..t) of every trajectory. At t = 0 there are no inputs and
Z_0 = Y_0.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ShapeError, ValidationError
from .linalg import right_solve, truncation_threshold


@dataclass(frozen=True)
class EstimationWindow:
    """Measured history at time t: u(0..t-1) stacked (mt,) and y(0..t) stacked (p(t+1),)."""

    u_hist: np.ndarray
    y_hist: np.ndarray
    t: int

    def __post_init__(self):
        object.__setattr__(self, "u_hist", np.asarray(self.u_hist, dtype=float).reshape(-1))
        object.__setattr__(self, "y_hist", np.asarray(self.y_hist, dtype=float).reshape(-1))
        if self.t < 0:
            raise ValidationError(f"t must be nonnegative, got {self.t}")

    @property
    def z(self):
        return np.concatenate([self.u_hist, self.y_hist])

    @classmethod
    def from_trajectory(cls, trajectory, t):
        """Window ending at time t of a :class:`~ddlqg.system.Trajectory`."""
        return cls(trajectory.inputs[:, :t].T.reshape(-1),
                   trajectory.outputs[:, :t + 1].T.reshape(-1), t)


@dataclass(frozen=True)
class DataFilterBank:
    """Gains L_t (n x (mt + p(t+1))) for t = 0..T and sigma_min(Z_t) per t."""

    gains: list
    conditioning: np.ndarray
    n: int
    m: int
    p: int

    @property
    def T(self):
        return len(self.gains) - 1


def _gain_at(dataset, t):
    """Direct route: L_t = X_t Z_t^+ via an SVD of Z_t."""
    Z = np.vstack([dataset.U_t(t - 1), dataset.Y_t(t)])
    try:
        return right_solve(dataset.X_t(t), Z, what=f"Z_{t}")
    except InsufficientDataError as exc:
        raise InsufficientDataError(
            f"insufficient data for the filter gain at t={t}: {exc}",
            sigma_min=exc.sigma_min, required_N=exc.required_N, t=t) from None


def _chronological(dataset):
    """Rows y(0), u(0), y(1), u(1), ..., y(T) and the [U; Y] row index of each Z_t.

    In this ordering every Z_t is a row prefix, so one factorization serves
    all t.
    """
    m, p, T = dataset.m, dataset.p, dataset.T
    blocks, u_pos, y_pos = [], [], []
    row = 0
    for t in range(T + 1):
        blocks.append(dataset.Y[t * p:(t + 1) * p])
        y_pos.extend(range(row, row + p))
        row += p
        if t < T:
            blocks.append(dataset.U[t * m:(t + 1) * m])
            u_pos.extend(range(row, row + m))
            row += m
    return np.vstack(blocks), np.array(u_pos, dtype=int), np.array(y_pos, dtype=int)


def filter_bank_from_data(dataset):
    """All T+1 gains from one dataset.

    Numerically this is X_t Z_t^+ for every t, with the shared truncated
    pseudo-inverse. It is computed from a single thin QR of the
    chronologically ordered data: if Z_chron' = Q R then Z_t = R_k' Q_k'
    with Q_k' having orthonormal rows, so the singular values of Z_t are
    those of the k x k triangle R_k'.

    Raises:
        InsufficientDataError: some Z_t is not full row rank; ``t`` names the
            first failing time.
    """
    m, p, T, N = dataset.m, dataset.p, dataset.T, dataset.N
    required = m * T + p * (T + 1)
    if N < required:
        first = next(t for t in range(T + 1) if m * t + p * (t + 1) > N)
        raise InsufficientDataError(
            f"insufficient data for the filter gain at t={first}: Z_{first} has "
            f"{m * first + p * (first + 1)} rows but N={N}; all t <= {T} need N >= {required}",
            sigma_min=0.0, required_N=required, t=first)
    Zc, u_pos, y_pos = _chronological(dataset)
    Q, R = np.linalg.qr(Zc.T)
    XQ = dataset.X @ Q
    gains, conditioning = [], []
    for t in range(T + 1):
        k = m * t + p * (t + 1)
        Lk = R[:k, :k].T
        U, s, Vt = np.linalg.svd(Lk)
        if s[-1] <= truncation_threshold(s, (k, N)):
            raise InsufficientDataError(
                f"insufficient data for the filter gain at t={t}: Z_{t} is rank deficient "
                f"(sigma_min={s[-1]:.3e})", sigma_min=float(s[-1]), required_N=k, t=t)
        chron = ((XQ[t * dataset.n:(t + 1) * dataset.n, :k] @ Vt.T) / s) @ U.T
        order = np.concatenate([u_pos[:m * t], y_pos[:p * (t + 1)]])
        gains.append(chron[:, order])
        conditioning.append(float(s[-1]))
    return DataFilterBank(gains=gains, conditioning=np.array(conditioning), n=dataset.n, m=m, p=p)


def estimate_state(bank, window):
    """L_t [u_hist; y_hist] for a bank (data-driven or oracle) and a window."""
    t = window.t
    if t > bank.T:
        raise ValidationError(f"bank covers t <= {bank.T}, window is at t={t}")
    if window.u_hist.shape[0] != bank.m * t:
        raise ShapeError("u_hist", f"expected length {bank.m * t}, got {window.u_hist.shape[0]}")
    if window.y_hist.shape[0] != bank.p * (t + 1):
        raise ShapeError("y_hist",
                         f"expected length {bank.p * (t + 1)}, got {window.y_hist.shape[0]}")
    return bank.gains[t] @ window.z
