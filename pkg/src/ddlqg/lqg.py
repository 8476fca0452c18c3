"""Data-driven LQG: the separated input law, closed-loop collection and the static gain.

The recursive law is u(t) = K_d L_t [u(0..t-1); y(0..t)], with K_d the
data-driven LQR gain and L_t the data-driven filter bank. Running it for M
episodes and regressing the inputs at time T on the final window

    [u(T-n..T-1); y(T-n+1..T)]

yields a static gain that keeps producing LQG inputs past the experiment
horizon.
"""

from dataclasses import dataclass

import numpy as np

from .closedloop import (StackedFilterController, StaticLqgController, draw_noise,
                         simulate_closed_loop)
from .errors import InsufficientDataError, ValidationError
from .linalg import right_solve
from .system import derive_seed

CLOSED_LOOP_STREAM = 1


@dataclass(frozen=True)
class Episode:
    """One or more closed-loop runs over t = 0..T.

    inputs (m x (T+1)) and outputs (p x (T+1)) for a single run; the
    batched ``run`` keeps the raw arrays.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    run: object


def run_dd_lqg_episode(system, K_lqr_d, bank, seed=None, noise=None, T=None):
    """Simulate the data-driven LQG law from t = 0 to T (inclusive).

    Either ``seed`` (noise drawn via :func:`~ddlqg.closedloop.draw_noise`)
    or an explicit single-run ``noise`` batch must be given.

    Raises:
        InstabilityError: the loop diverged.
    """
    T = bank.T if T is None else T
    if T > bank.T:
        raise ValidationError(f"bank horizon {bank.T} is shorter than T={T}")
    if noise is None:
        if seed is None:
            raise ValidationError("give either seed or noise")
        noise = draw_noise(system, T + 1, [seed])
    run = simulate_closed_loop(system, StackedFilterController(K_lqr_d, bank), noise)
    return Episode(inputs=run.inputs[:, :, 0].T, outputs=run.outputs[:, :, 0].T, run=run)


@dataclass(frozen=True)
class ClosedLoopDataset:
    """M closed-loop episodes of horizon T.

    Attributes:
        U_dlqg: mT x M inputs u(0..T-1).
        Y_dlqg: p(T+1) x M outputs y(0..T).
        U_T: m x M inputs at time T.
        seeds: episode noise seeds.
    """

    U_dlqg: np.ndarray
    Y_dlqg: np.ndarray
    U_T: np.ndarray
    n: int
    m: int
    p: int
    seeds: np.ndarray

    @property
    def M(self):
        return self.U_dlqg.shape[1]

    @property
    def T(self):
        return self.U_dlqg.shape[0] // self.m

    @property
    def U_n(self):
        """Inputs at times T-n..T-1, nm x M."""
        return self.U_dlqg[(self.T - self.n) * self.m:]

    @property
    def Y_n(self):
        """Outputs at times T-n+1..T, np x M."""
        return self.Y_dlqg[(self.T - self.n + 1) * self.p:]

    @property
    def Z(self):
        return np.vstack([self.U_dlqg, self.Y_dlqg])

    @property
    def Z_n(self):
        return np.vstack([self.U_n, self.Y_n])


def min_episodes(n, m, p):
    return n + n * m + n * p


def collect_closed_loop_dataset(system, K_lqr_d, bank, M, seed, stream=CLOSED_LOOP_STREAM):
    """Run M independent episodes of the data-driven LQG law.

    Episode i draws its noise from ``derive_seed(seed, stream, i)``; the
    open-loop dataset uses stream 0, so the two never share noise.
    """
    n, m, p = system.n, system.m, system.p
    if M < min_episodes(n, m, p):
        raise ValidationError(f"need M >= n + nm + np = {min_episodes(n, m, p)} episodes, got M={M}")
    T = bank.T
    seeds = np.array([derive_seed(seed, stream, i) for i in range(M)], dtype=np.uint64)
    noise = draw_noise(system, T + 1, seeds)
    run = simulate_closed_loop(system, StackedFilterController(K_lqr_d, bank), noise)
    U = run.inputs[:T].reshape(T * m, M)
    Y = run.outputs.reshape((T + 1) * p, M)
    return ClosedLoopDataset(U_dlqg=U, Y_dlqg=Y, U_T=run.inputs[T], n=n, m=m, p=p, seeds=seeds)


@dataclass(frozen=True)
class StaticLqgGainEstimate:
    """K (m x (nm+np)) acting on [u(t..t+n-1); y(t+1..t+n)], and ||c4||_2.

    ``c4`` is [U_dlqg; Y_dlqg] [U_n; Y_n]^+, the data factor in the error bound.
    """

    K: np.ndarray
    c4_norm: float
    window_sigma_min: float
    n: int
    m: int
    p: int


def lqg_gain_from_data(cl, K_lqr_d, bank):
    """K_LQG = K_d L_T [U_dlqg; Y_dlqg] [U_n; Y_n]^+, using the bank's gain at t = T.

    Raises:
        InsufficientDataError: [U_n; Y_n] is not full row rank.
    """
    T = cl.T
    if bank.T < T:
        raise ValidationError(f"bank horizon {bank.T} is shorter than the closed-loop horizon {T}")
    try:
        c4, sigma_min = right_solve(cl.Z, cl.Z_n, what="[U_n; Y_n]")
    except InsufficientDataError as exc:
        raise InsufficientDataError(f"{exc}; collect more closed-loop episodes",
                                    sigma_min=exc.sigma_min, required_N=exc.required_N) from None
    K = np.asarray(K_lqr_d) @ bank.gains[T] @ c4
    return StaticLqgGainEstimate(K=K, c4_norm=float(np.linalg.norm(c4, 2)),
                                 window_sigma_min=sigma_min, n=cl.n, m=cl.m, p=cl.p)


def run_static_lqg(gain, system, warm_start_controller, T_eval, seed=None, noise=None):
    """Closed loop under the static window law, warm-started for t < n.

    Returns the batched :class:`~ddlqg.closedloop.ClosedLoopRun`.
    """
    K = gain.K if hasattr(gain, "K") else np.asarray(gain)
    if noise is None:
        if seed is None:
            raise ValidationError("give either seed or noise")
        noise = draw_noise(system, T_eval, [seed])
    controller = StaticLqgController(K, system.n, system.m, system.p, warm_start_controller)
    return simulate_closed_loop(system, controller, noise)
