"""Batched closed-loop simulation and the controllers that plug into it.

A controller sees only measured outputs. At every step ``t`` the simulator
hands it ``y(t)`` as a (p, R) array, one column per independent run, and
receives ``u(t)`` as (m, R). Controllers are stateful; call ``reset(R)``
before a run (the simulator does this).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError, ValidationError
from .linalg import psd_sqrt
from .system import derive_seed, make_rng

INSTABILITY_LIMIT = 1e9


@dataclass(frozen=True)
class NoiseBatch:
    """Initial states and noise for R runs of ``steps`` steps.

    x0: (n, R); w: (steps, n, R); v: (steps, p, R), where v[t] corrupts y(t).
    """

    x0: np.ndarray
    w: np.ndarray
    v: np.ndarray

    @property
    def steps(self):
        return self.w.shape[0]

    @property
    def R(self):
        return self.x0.shape[1]

    def column(self, i):
        return NoiseBatch(self.x0[:, i:i + 1], self.w[:, :, i:i + 1], self.v[:, :, i:i + 1])


def draw_noise(system, steps, seeds):
    """One noise realization per seed.

    Each seed's stream yields n (initial state), then n*steps (process
    noise, time-major), then p*steps (measurement noise) standard normals.
    """
    n, p = system.n, system.p
    seeds = list(seeds)
    R = len(seeds)
    z = np.empty((R, n + (n + p) * steps))
    for i, s in enumerate(seeds):
        z[i] = make_rng(s).standard_normal(z.shape[1])
    x0 = psd_sqrt(system.Sigma0, "Sigma0") @ z[:, :n].T
    zw = z[:, n:n + n * steps].reshape(R, steps, n)
    zv = z[:, n + n * steps:].reshape(R, steps, p)
    w = np.einsum("ij,rtj->tir", psd_sqrt(system.Q_w, "Q_w"), zw)
    v = np.einsum("ij,rtj->tir", psd_sqrt(system.R_v, "R_v"), zv)
    return NoiseBatch(x0, w, v)


@dataclass(frozen=True)
class ClosedLoopRun:
    """states (steps+1, n, R), outputs (steps, p, R), inputs (steps, m, R)."""

    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray

    def running_cost(self, weights):
        """Per-run average of x'Q_x x + u'R_u u over the simulated steps."""
        x = self.states[:-1]
        u = self.inputs
        cost = (np.einsum("tir,ij,tjr->r", x, weights.Q_x, x)
                + np.einsum("tir,ij,tjr->r", u, weights.R_u, u))
        return cost / u.shape[0]


def simulate_closed_loop(system, controller, noise):
    """Run ``controller`` against the noisy plant.

    Raises:
        InstabilityError: some state norm exceeded 1e9.
    """
    steps, R = noise.steps, noise.R
    n, m, p = system.n, system.m, system.p
    states = np.empty((steps + 1, n, R))
    outputs = np.empty((steps, p, R))
    inputs = np.empty((steps, m, R))
    states[0] = noise.x0
    controller.reset(R)
    for t in range(steps):
        x = states[t]
        y = system.C @ x + noise.v[t]
        u = controller(t, y)
        outputs[t] = y
        inputs[t] = u
        states[t + 1] = system.A @ x + system.B @ u + noise.w[t]
        if not np.all(np.isfinite(states[t + 1])) or \
                np.max(np.abs(states[t + 1])) > INSTABILITY_LIMIT:
            raise InstabilityError(f"closed loop diverged at step {t + 1} "
                                   f"(state norm > {INSTABILITY_LIMIT:g})", step=t + 1)
    return ClosedLoopRun(states, outputs, inputs)


class ZeroController:
    def __init__(self, m):
        self.m = m

    def reset(self, R):
        self.R = R

    def __call__(self, t, y):
        return np.zeros((self.m, y.shape[1]))


class RecursiveLqgController:
    """Kalman filter in measurement-update form followed by ``u = K xh``.

    Args:
        K: m x n feedback gain.
        filter_gains: either a single n x p gain (steady-state filter) or a
            sequence indexed by t (time-varying); the last entry is reused
            past the end of the sequence.
    """

    def __init__(self, system, K, filter_gains):
        self.A, self.B, self.C = system.A, system.B, system.C
        self.K = np.asarray(K, dtype=float)
        if isinstance(filter_gains, np.ndarray) and filter_gains.ndim == 2:
            filter_gains = [filter_gains]
        self.filter_gains = list(filter_gains)
        self.n = system.n

    def reset(self, R):
        self.x_pred = np.zeros((self.n, R))

    def __call__(self, t, y):
        G = self.filter_gains[min(t, len(self.filter_gains) - 1)]
        xh = self.x_pred + G @ (y - self.C @ self.x_pred)
        u = self.K @ xh
        self.x_pred = self.A @ xh + self.B @ u
        return u


class StackedFilterController:
    """``u(t) = K L_t [u(0..t-1); y(0..t)]`` from a bank of stacked gains.

    Works with a data-driven bank or a :class:`KalmanOracle`; anything with
    a ``gains`` list. The horizon is limited to the bank's length.
    """

    def __init__(self, K, bank):
        self.K = np.asarray(K, dtype=float)
        self.gains = bank.gains
        self.m = self.K.shape[0]

    def reset(self, R):
        self.u_hist = []
        self.y_hist = []

    def __call__(self, t, y):
        if t >= len(self.gains):
            raise ValidationError(f"filter bank covers t <= {len(self.gains) - 1}, asked for t={t}")
        self.y_hist.append(y)
        z = np.concatenate(self.u_hist + self.y_hist, axis=0)
        u = self.K @ (self.gains[t] @ z)
        self.u_hist.append(u)
        return u


class StaticLqgController:
    """Window law u(t) = K_static [u(t-n..t-1); y(t-n+1..t)] for t >= n.

    The first n inputs come from ``warm_start`` (fed the same outputs).
    """

    def __init__(self, K_static, n, m, p, warm_start):
        self.K = np.asarray(K_static, dtype=float)
        if self.K.shape != (m, n * (m + p)):
            raise ValidationError(f"static gain must be {m} x {n * (m + p)}, got {self.K.shape}")
        self.n = n
        self.warm_start = warm_start

    def reset(self, R):
        self.warm_start.reset(R)
        self.u_hist = []
        self.y_hist = []

    def __call__(self, t, y):
        n = self.n
        self.y_hist.append(y)
        if t < n:
            u = self.warm_start(t, y)
        else:
            window = np.concatenate(self.u_hist[-n:] + self.y_hist[-n:], axis=0)
            u = self.K @ window
        self.u_hist.append(u)
        self.u_hist = self.u_hist[-n:]
        self.y_hist = self.y_hist[-n:]
        return u


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    stderr: float
    per_rep: np.ndarray


def evaluate_lqg_cost(system, weights, controller, T_eval, reps, seed, stream=7):
    """Monte Carlo estimate of the average running cost over ``T_eval`` steps.

    Rep i uses the noise stream ``derive_seed(seed, stream, i)``, so two
    controllers evaluated with the same seed see identical noise (paired
    comparison).
    """
    if reps < 1 or T_eval < 1:
        raise ValidationError("reps and T_eval must be positive")
    noise = draw_noise(system, T_eval, [derive_seed(seed, stream, i) for i in range(reps)])
    run = simulate_closed_loop(system, controller, noise)
    costs = run.running_cost(weights)
    stderr = float(np.std(costs, ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
    return CostEstimate(float(np.mean(costs)), stderr, costs)
