"""Plant model, noise sampling, simulation and open-loop dataset generation.

The plant is

    x(t+1) = A x(t) + B u(t) + w(t),    y(t) = C x(t) + v(t)

with w ~ N(0, Q_w), v ~ N(0, R_v), x(0) ~ N(0, Sigma0), all independent.

Random streams are counter based (Philox) and keyed by ``(seed, *keys)``
through :class:`numpy.random.SeedSequence`, so any trajectory can be
regenerated on its own regardless of how many others were drawn, or in what
order.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeError, ValidationError
from .linalg import as_matrix, check_pd, check_psd, psd_sqrt


def make_rng(seed, *keys):
    """Philox generator for the stream identified by ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *keys):
    """A 64-bit seed for the sub-stream ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def _readonly(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LinearSystem:
    """LTI plant with Gaussian process/measurement noise and initial-state prior."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q_w: np.ndarray
    R_v: np.ndarray
    Sigma0: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ShapeError("A", f"must be square, got {A.shape}")
        B = as_matrix(self.B, "B")
        if B.shape[0] != n:
            raise ShapeError("B", f"expected {n} rows to match A, got {B.shape}")
        C = as_matrix(self.C, "C")
        if C.shape[1] != n:
            raise ShapeError("C", f"expected {n} columns to match A, got {C.shape}")
        p = C.shape[0]
        Q_w = as_matrix(self.Q_w, "Q_w", (n, n))
        R_v = as_matrix(self.R_v, "R_v", (p, p))
        Sigma0 = as_matrix(self.Sigma0, "Sigma0", (n, n))
        check_psd(Q_w, "Q_w")
        check_pd(R_v, "R_v")
        check_pd(Sigma0, "Sigma0")
        for name, value in (("A", A), ("B", B), ("C", C), ("Q_w", Q_w), ("R_v", R_v),
                            ("Sigma0", Sigma0)):
            object.__setattr__(self, name, _readonly(value.copy()))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    def replace(self, **changes):
        """Copy with some matrices swapped out (re-validated)."""
        fields = dict(A=self.A, B=self.B, C=self.C, Q_w=self.Q_w, R_v=self.R_v,
                      Sigma0=self.Sigma0)
        fields.update(changes)
        return LinearSystem(**fields)

    @classmethod
    def from_config(cls, cfg):
        try:
            return cls(**{k: cfg[k] for k in ("A", "B", "C", "Q_w", "R_v", "Sigma0")})
        except KeyError as exc:
            raise ValidationError(f"config is missing system matrix {exc.args[0]!r}") from None


@dataclass(frozen=True)
class CostWeights:
    """State and input weights of the quadratic cost."""

    Q_x: np.ndarray
    R_u: np.ndarray

    def __post_init__(self):
        Q_x = as_matrix(self.Q_x, "Q_x")
        R_u = as_matrix(self.R_u, "R_u")
        check_psd(Q_x, "Q_x")
        check_pd(R_u, "R_u")
        object.__setattr__(self, "Q_x", _readonly(Q_x.copy()))
        object.__setattr__(self, "R_u", _readonly(R_u.copy()))

    def check_against(self, system):
        if self.Q_x.shape != (system.n, system.n):
            raise ShapeError("Q_x", f"expected {(system.n, system.n)}, got {self.Q_x.shape}")
        if self.R_u.shape != (system.m, system.m):
            raise ShapeError("R_u", f"expected {(system.m, system.m)}, got {self.R_u.shape}")

    def scaled(self, factor):
        return CostWeights(self.Q_x * factor, self.R_u * factor)

    @classmethod
    def from_config(cls, cfg):
        try:
            return cls(cfg["Q_x"], cfg["R_u"])
        except KeyError as exc:
            raise ValidationError(f"config is missing weight {exc.args[0]!r}") from None


@dataclass(frozen=True)
class ExperimentInputSpec:
    """Open-loop excitation: u^i(t) ~ N(0, Sigma_u), N trajectories of horizon T."""

    Sigma_u: np.ndarray
    T: int
    N: int
    seed: int = 0

    def __post_init__(self):
        Sigma_u = as_matrix(self.Sigma_u, "Sigma_u")
        check_pd(Sigma_u, "Sigma_u")
        object.__setattr__(self, "Sigma_u", _readonly(Sigma_u.copy()))
        for name in ("T", "N"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError(f"seed must fit in 64 bits, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))

    def with_N(self, N, seed=None):
        return ExperimentInputSpec(self.Sigma_u, self.T, N, self.seed if seed is None else seed)

    @classmethod
    def from_config(cls, cfg):
        try:
            return cls(cfg["Sigma_u"], cfg["T"], cfg["N"], cfg.get("seed", 0))
        except KeyError as exc:
            raise ValidationError(f"config is missing {exc.args[0]!r}") from None


@dataclass(frozen=True)
class Trajectory:
    """One run: inputs m x T, states n x (T+1), outputs p x (T+1).

    ``process_noise`` (n x T) and ``measurement_noise`` (p x (T+1)) are the
    draws that produced the run, kept for replay checks.
    """

    inputs: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    process_noise: np.ndarray = None
    measurement_noise: np.ndarray = None

    @property
    def T(self):
        return self.inputs.shape[1]


# -- propagation -------------------------------------------------------------
#
# Matrix-vector products below are written as explicit column sums instead of
# BLAS calls. This keeps every trajectory bit-identical whether it is
# simulated alone or as one column of a batch.

def _matvec(M, X):
    out = M[:, 0, None] * X[0]
    for j in range(1, M.shape[1]):
        out = out + M[:, j, None] * X[j]
    return out


def _propagate(system, x0, inputs, w, v):
    """Batched recursion.

    Args:
        x0: (n, R) initial states.
        inputs: (T, m, R).
        w: (T, n, R) process noise, or None.
        v: (T+1, p, R) measurement noise, or None.

    Returns:
        states (T+1, n, R), outputs (T+1, p, R)
    """
    T = inputs.shape[0]
    n, R = x0.shape
    states = np.empty((T + 1, n, R))
    states[0] = x0
    for t in range(T):
        nxt = _matvec(system.A, states[t]) + _matvec(system.B, inputs[t])
        if w is not None:
            nxt = nxt + w[t]
        states[t + 1] = nxt
    outputs = np.empty((T + 1, system.p, R))
    for t in range(T + 1):
        y = _matvec(system.C, states[t])
        if v is not None:
            y = y + v[t]
        outputs[t] = y
    return states, outputs


def _noise_from_normals(system, T, z):
    """Turn raw standard normals (R, n*T + p*(T+1)) into w (T, n, R), v (T+1, p, R)."""
    n, p = system.n, system.p
    R = z.shape[0]
    zw = z[:, :n * T].reshape(R, T, n).transpose(1, 2, 0)
    zv = z[:, n * T:n * T + p * (T + 1)].reshape(R, T + 1, p).transpose(1, 2, 0)
    sq_w = psd_sqrt(system.Q_w, "Q_w")
    sq_v = psd_sqrt(system.R_v, "R_v")
    w = np.stack([_matvec(sq_w, zw[t]) for t in range(T)]) if T else np.empty((0, n, R))
    v = np.stack([_matvec(sq_v, zv[t]) for t in range(T + 1)])
    return w, v


def noise_size(system, T):
    return system.n * T + system.p * (T + 1)


def _check_inputs(system, inputs, x0):
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[0] != system.m:
        raise ShapeError("inputs", f"expected {system.m} rows (m), got {inputs.shape}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (system.n,):
        raise ShapeError("x0", f"expected length {system.n}, got {x0.shape[0]}")
    return inputs, x0


def simulate_trajectory(system, inputs, x0, noise_seed):
    """Simulate the noisy plant from ``x0`` under a given input sequence.

    Noise is drawn from the stream ``make_rng(noise_seed)``: first n*T
    process-noise normals (time-major), then p*(T+1) measurement-noise
    normals. The same seed always yields a bit-identical trajectory.
    """
    inputs, x0 = _check_inputs(system, inputs, x0)
    T = inputs.shape[1]
    z = make_rng(noise_seed).standard_normal(noise_size(system, T))[None, :]
    w, v = _noise_from_normals(system, T, z)
    states, outputs = _propagate(system, x0[:, None], inputs.T[:, :, None], w, v)
    return Trajectory(inputs=inputs.copy(), states=states[:, :, 0].T, outputs=outputs[:, :, 0].T,
                      process_noise=w[:, :, 0].T, measurement_noise=v[:, :, 0].T)


def simulate_noise_free(system, inputs, x0):
    """States of the plant with w = 0, as an n x (T+1) matrix."""
    inputs, x0 = _check_inputs(system, inputs, x0)
    states, _ = _propagate(system, x0[:, None], inputs.T[:, :, None], None, None)
    return states[:, :, 0].T


class NoiseFreePropagator:
    """Block matrices with stacked X = O x0 + F_u u + F_w w.

    ``O`` is n(T+1) x n, ``F_u`` is n(T+1) x mT and ``F_w`` is n(T+1) x nT,
    with states stacked chronologically.
    """

    def __init__(self, system, T):
        n, m = system.n, system.m
        A, B = system.A, system.B
        powers = [np.eye(n)]
        for _ in range(T):
            powers.append(A @ powers[-1])
        self.T = T
        self.O = np.vstack(powers)
        self.F_u = np.zeros((n * (T + 1), m * T))
        self.F_w = np.zeros((n * (T + 1), n * T))
        for t in range(1, T + 1):
            for s in range(t):
                Apow = powers[t - 1 - s]
                self.F_u[t * n:(t + 1) * n, s * m:(s + 1) * m] = Apow @ B
                self.F_w[t * n:(t + 1) * n, s * n:(s + 1) * n] = Apow

    @property
    def F(self):
        return np.hstack([self.O, self.F_u])

    def propagate(self, x0, u, w=None):
        """Stacked states for initial state(s) ``x0`` and stacked input(s) ``u``.

        Works column-wise: x0 may be (n,) or (n, N), u (mT,) or (mT, N).
        """
        X = self.O @ x0 + self.F_u @ u
        if w is not None:
            X = X + self.F_w @ w
        return X


@dataclass(frozen=True)
class TrajectoryDataset:
    """Open-loop data, one trajectory per column, time-stacked within a column.

    Attributes:
        U: mT x N inputs u(0..T-1).
        X: n(T+1) x N states x(0..T).
        Y: p(T+1) x N outputs y(0..T).
        seeds: per-trajectory 64-bit stream seeds for replay (may be empty
            for datasets loaded without them).
    """

    U: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    n: int
    m: int
    p: int
    seeds: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint64))

    def __post_init__(self):
        N = self.U.shape[1]
        if self.U.shape[0] % self.m:
            raise ShapeError("U", f"row count {self.U.shape[0]} not a multiple of m={self.m}")
        T = self.U.shape[0] // self.m
        if self.X.shape != (self.n * (T + 1), N):
            raise ShapeError("X", f"expected {(self.n * (T + 1), N)}, got {self.X.shape}")
        if self.Y.shape[1] != N or self.Y.shape[0] != self.p * (T + 1):
            raise ShapeError("Y", f"expected {(self.p * (T + 1), N)}, got {self.Y.shape}")
        if len(self.seeds) not in (0, N):
            raise ShapeError("seeds", f"expected {N} seeds, got {len(self.seeds)}")

    @property
    def N(self):
        return self.U.shape[1]

    @property
    def T(self):
        return self.U.shape[0] // self.m

    @property
    def X0(self):
        return self.X_t(0)

    def X_t(self, t):
        """States at time t of every trajectory, n x N."""
        if not 0 <= t <= self.T:
            raise ValidationError(f"t={t} outside [0, {self.T}]")
        return self.X[t * self.n:(t + 1) * self.n]

    def U_t(self, t):
        """Inputs u(0..t) stacked, m(t+1) x N; ``U_t(-1)`` is empty."""
        if not -1 <= t <= self.T - 1:
            raise ValidationError(f"t={t} outside [-1, {self.T - 1}]")
        return self.U[:(t + 1) * self.m]

    def Y_t(self, t):
        """Outputs y(0..t) stacked, p(t+1) x N."""
        if not 0 <= t <= self.T:
            raise ValidationError(f"t={t} outside [0, {self.T}]")
        return self.Y[:(t + 1) * self.p]

    def trajectory(self, i):
        T = self.T
        return Trajectory(inputs=self.U[:, i].reshape(T, self.m).T,
                          states=self.X[:, i].reshape(T + 1, self.n).T,
                          outputs=self.Y[:, i].reshape(T + 1, self.p).T)

    def head(self, N):
        """The first N trajectories."""
        seeds = self.seeds[:N] if len(self.seeds) else self.seeds
        return TrajectoryDataset(self.U[:, :N], self.X[:, :N], self.Y[:, :N], self.n, self.m,
                                 self.p, seeds)


def excitation_size(system, T):
    return system.n + system.m * T


def generate_open_loop_dataset(system, spec, stream=0):
    """Draw N open-loop trajectories per the excitation spec.

    Trajectory i uses the seed ``derive_seed(spec.seed, stream, i)``. From
    that stream the noise is drawn first (exactly as
    :func:`simulate_trajectory` draws it), then x(0) and the inputs, so
    ``simulate_trajectory(system, u_i, x0_i, seeds[i])`` replays column i.
    """
    n, m, T, N = system.n, system.m, spec.T, spec.N
    if spec.Sigma_u.shape != (m, m):
        raise ShapeError("Sigma_u", f"expected {(m, m)}, got {spec.Sigma_u.shape}")
    n_noise = noise_size(system, T)
    n_exc = excitation_size(system, T)
    seeds = np.empty(N, dtype=np.uint64)
    z = np.empty((N, n_noise + n_exc))
    for i in range(N):
        seeds[i] = derive_seed(spec.seed, stream, i)
        z[i] = make_rng(seeds[i]).standard_normal(n_noise + n_exc)
    w, v = _noise_from_normals(system, T, z[:, :n_noise])
    exc = z[:, n_noise:]
    x0 = _matvec(psd_sqrt(system.Sigma0, "Sigma0"), exc[:, :n].T)
    zu = exc[:, n:].reshape(N, T, m).transpose(1, 2, 0)
    sq_u = psd_sqrt(spec.Sigma_u, "Sigma_u")
    inputs = np.stack([_matvec(sq_u, zu[t]) for t in range(T)])
    states, outputs = _propagate(system, x0, inputs, w, v)
    return TrajectoryDataset(U=inputs.reshape(T * m, N), X=states.reshape((T + 1) * n, N),
                             Y=outputs.reshape((T + 1) * system.p, N), n=n, m=m, p=system.p,
                             seeds=seeds)


def save_dataset(dataset, directory):
    """Write U.csv, X.csv, Y.csv and seeds.csv (full float precision)."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for name in ("U", "X", "Y"):
            np.savetxt(directory / f"{name}.csv", getattr(dataset, name), delimiter=",",
                       fmt="%.17g")
        with open(directory / "seeds.csv", "w") as fh:
            fh.write("".join(f"{int(s)}\n" for s in dataset.seeds))
    except OSError as exc:
        raise OSError(f"cannot write dataset to {directory}: {exc}") from exc
    return directory


def load_dataset(directory, n, m, p):
    directory = Path(directory)
    mats = {name: np.loadtxt(directory / f"{name}.csv", delimiter=",", ndmin=2)
            for name in ("U", "X", "Y")}
    seeds_path = directory / "seeds.csv"
    seeds = np.zeros(0, dtype=np.uint64)
    if seeds_path.exists():
        text = seeds_path.read_text().split()
        seeds = np.array([int(s) for s in text], dtype=np.uint64)
    return TrajectoryDataset(mats["U"], mats["X"], mats["Y"], n, m, p, seeds)
