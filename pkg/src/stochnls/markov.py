"""Finite-state stationary Markov driver.

Generators are restricted to weighted-graph Laplacians: real symmetric,
positive semidefinite, zero row sums, non-positive off-diagonal entries,
one-dimensional kernel (connected graph).  That class guarantees that
e^{-tA} is a genuine symmetric stochastic transition kernel and that the
ground state of A is the flat distribution.

Path sampling is exact (jump-chain): hold in state y for an Exp(A_yy)
time, then jump to y' with probability -A[y,y']/A[y,y].  Randomness comes
from numpy's default PCG64 generator keyed by ``SeedSequence([seed])`` or,
for ensemble member i, ``SeedSequence([master_seed, i])``; this is fixed
and platform-independent, so a (model, horizon, seed) triple always
reproduces the same path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeneratorReport",
    "MarkovModel",
    "HeatKernel",
    "PathSample",
    "validate_generator",
    "ground_state",
    "heat_kernel",
    "sample_path",
    "state_at",
    "path_rng",
]

KERNEL_TOL = 1e-10


@dataclass
class GeneratorReport:
    """Checks mirroring the semigroup conditions for a candidate generator."""

    symmetry_residual: float
    min_eigenvalue: float
    row_sum_residual: float
    offdiag_sign_violations: int
    kernel_dimension: int
    limit_kernel: np.ndarray = field(repr=False)
    notes: tuple[str, ...] = (
        "L^1->L^inf boundedness of e^{-tA} is automatic for a finite state set",
        "tensor-product kernel approximation is automatic for a finite state set",
    )

    @property
    def passes(self) -> bool:
        scale = max(abs(self.min_eigenvalue), self.row_sum_residual, 1.0)
        return (
            self.symmetry_residual <= KERNEL_TOL * scale
            and self.min_eigenvalue >= -KERNEL_TOL * scale
            and self.row_sum_residual <= KERNEL_TOL * scale
            and self.offdiag_sign_violations == 0
            and self.kernel_dimension == 1
        )


def validate_generator(A: np.ndarray) -> GeneratorReport:
    """Run the generator checks and return the full report."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("generator must be a square matrix")
    m = A.shape[0]
    sym_res = float(np.max(np.abs(A - A.T), initial=0.0))
    eigvals, eigvecs = np.linalg.eigh(0.5 * (A + A.T))
    norm = float(np.max(np.abs(eigvals), initial=0.0))
    row_res = float(np.max(np.abs(A.sum(axis=1)), initial=0.0))
    off = A - np.diag(np.diag(A))
    violations = int(np.count_nonzero(off > KERNEL_TOL * max(norm, 1.0)))
    kernel_mask = eigvals <= KERNEL_TOL * norm
    kernel_dim = int(np.count_nonzero(kernel_mask))
    V = eigvecs[:, kernel_mask]
    limit = V @ V.T if kernel_dim else np.zeros((m, m))
    return GeneratorReport(
        symmetry_residual=sym_res,
        min_eigenvalue=float(eigvals[0]) if m else 0.0,
        row_sum_residual=row_res,
        offdiag_sign_violations=violations,
        kernel_dimension=kernel_dim,
        limit_kernel=limit,
    )


def ground_state(A: np.ndarray) -> np.ndarray:
    """Unique positive zero-energy eigenvector of A, normalized to sum 1."""
    report = validate_generator(A)
    if report.kernel_dimension != 1:
        raise ValueError(
            f"kernel dimension is {report.kernel_dimension}, expected 1 "
            "(generator must correspond to a connected graph)"
        )
    A = np.asarray(A, dtype=float)
    eigvals, eigvecs = np.linalg.eigh(0.5 * (A + A.T))
    h = eigvecs[:, 0]
    if h.sum() < 0:
        h = -h
    if np.any(h <= 0):
        raise ValueError("ground state is not strictly positive")
    h = h / h.sum()
    norm = float(np.max(np.abs(eigvals)))
    if np.max(np.abs(A @ h)) > KERNEL_TOL * max(norm, 1.0):
        raise ValueError("ground state residual too large")
    return h


@dataclass
class MarkovModel:
    """Validated generator plus an initial law (vector or Dirac state index)."""

    A: np.ndarray
    initial_law: np.ndarray | int = 0

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A, dtype=float)
        report = validate_generator(self.A)
        if not report.passes:
            raise ValueError(f"generator fails validation: {report}")
        self.report = report
        m = self.A.shape[0]
        if isinstance(self.initial_law, (int, np.integer)):
            if not 0 <= self.initial_law < m:
                raise ValueError("Dirac initial state out of range")
            law = np.zeros(m)
            law[self.initial_law] = 1.0
            self.initial_law = law
        else:
            law = np.asarray(self.initial_law, dtype=float)
            if law.shape != (m,) or np.any(law < 0) or abs(law.sum() - 1.0) > 1e-12:
                raise ValueError("initial law must be a probability vector of length m")
            self.initial_law = law
        self._eigvals, self._eigvecs = np.linalg.eigh(self.A)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def ground_state(self) -> np.ndarray:
        return ground_state(self.A)


@dataclass
class HeatKernel:
    """Transition matrix K[y1, y2] = P(X_t = y1 | X_0 = y2) = e^{-tA}(y1, y2)."""

    t: float
    K: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        K = np.asarray(self.K, dtype=float)
        if np.min(K) < -1e-12:
            raise ValueError("heat kernel has a negative entry")
        if np.max(np.abs(K.sum(axis=0) - 1.0)) > 1e-10:
            raise ValueError("heat kernel columns do not sum to 1")
        if np.max(np.abs(K - K.T)) > 1e-10 * max(1.0, np.max(np.abs(K))):
            raise ValueError("heat kernel is not symmetric")
        self.K = K


def heat_kernel(model: MarkovModel | np.ndarray, t: float) -> HeatKernel:
    """e^{-tA} by symmetric eigendecomposition."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if isinstance(model, MarkovModel):
        eigvals, eigvecs = model._eigvals, model._eigvecs
    else:
        eigvals, eigvecs = np.linalg.eigh(np.asarray(model, dtype=float))
    K = (eigvecs * np.exp(-t * eigvals)) @ eigvecs.T
    return HeatKernel(t=float(t), K=K)


@dataclass
class PathSample:
    """Piecewise-constant right-continuous realization of the chain on [0, T]."""

    horizon: float
    jump_times: np.ndarray
    states: np.ndarray
    seed: tuple[int, ...]

    def __post_init__(self) -> None:
        self.jump_times = np.asarray(self.jump_times, dtype=float)
        self.states = np.asarray(self.states, dtype=np.int64)
        if self.states.size != self.jump_times.size + 1:
            raise ValueError("states must have one more entry than jump_times")
        if self.jump_times.size:
            if self.jump_times[0] <= 0 or self.jump_times[-1] >= self.horizon:
                raise ValueError("jump times must lie strictly inside (0, T)")
            if np.any(np.diff(self.jump_times) <= 0):
                raise ValueError("jump times must be strictly increasing")
            if np.any(self.states[1:] == self.states[:-1]):
                raise ValueError("consecutive states must differ")

    def restricted(self, t: float) -> "PathSample":
        """The path on [0, t]; used to enforce adaptedness of source callbacks."""
        keep = self.jump_times < t
        return PathSample(
            horizon=t,
            jump_times=self.jump_times[keep],
            states=self.states[: int(np.count_nonzero(keep)) + 1],
            seed=self.seed,
        )


def path_rng(seed: int | tuple[int, ...]) -> np.random.Generator:
    """PCG64 generator keyed by the documented seed-splitting scheme."""
    entropy = [seed] if isinstance(seed, (int, np.integer)) else list(seed)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_path(model: MarkovModel, T: float, seed: int | tuple[int, ...]) -> PathSample:
    """Exact jump-chain sample of the chain with rate matrix Q = -A on [0, T]."""
    if T <= 0:
        raise ValueError("horizon must be positive")
    rng = path_rng(seed)
    m = model.m
    y = int(rng.choice(m, p=model.initial_law))
    jump_times: list[float] = []
    states = [y]
    t = 0.0
    while True:
        rate = model.A[y, y]
        off = -model.A[y, :].copy()
        off[y] = 0.0
        if rate <= 0.0:
            if np.any(off > 0):
                raise ValueError(f"state {y}: zero holding rate with off-diagonal mass")
            break  # absorbing state; no more jumps
        t += rng.exponential(1.0 / rate)
        if t >= T:
            break
        y = int(rng.choice(m, p=off / rate))
        jump_times.append(t)
        states.append(y)
    seed_tuple = (int(seed),) if isinstance(seed, (int, np.integer)) else tuple(int(s) for s in seed)
    return PathSample(horizon=float(T), jump_times=np.array(jump_times),
                      states=np.array(states), seed=seed_tuple)


def state_at(path: PathSample, t: float) -> int:
    """Right-continuous evaluation: at a jump time the post-jump state counts."""
    if t < 0 or t > path.horizon:
        raise ValueError(f"t={t} outside [0, {path.horizon}]")
    idx = int(np.searchsorted(path.jump_times, t, side="right"))
    return int(path.states[idx])
