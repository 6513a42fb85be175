"""Deterministic solvers for the averaged dynamics.

The per-path stochastic flow averages, conditionally on the driving
chain's position, into two deterministic equations:

* scalar:    i g_t - Lap g + i A g + V g + G = 0,   g = g(x, y, t)
* Liouville: i f_t - Lap_{x1} f + Lap_{x2} f + i A f
                + (V(x1,y) - V(x2,y)) f + F = 0,    f = f(x1, x2, y, t)

with A acting on the state index y.  Here g and f carry the joint
(probability-weighted) bookkeeping: summing tr f(y) over states gives the
conserved total mass.  Sources enter on the left-hand side, matching the
per-path solver's Duhamel convention.

Both solvers use the same symmetric splitting
    kinetic(dt/2) mixing(dt/2) potential(dt) mixing(dt/2) kinetic(dt/2)
so that for a single state they reduce factor-for-factor to the per-path
stepping (tensor-factorization oracle), and for V = 0 the composition
collapses exactly to e^{-tA} composed with the free flow.  The mixing
factor is the exact matrix exponential e^{-dt A/2}, precomputed once; its
entries are nonnegative with unit column sums, so Hermiticity, positivity
and total trace survive every step.

The Liouville solver stores dense (n x n) kernels per state and is
restricted to one space dimension; the identities it feeds (trace
conservation, positivity, tensor factorization, Feynman-Kac) are dimension
independent, so desk-scale d = 1 exercises them fully.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import SpatialGrid, laplacian_symbol
from .markov import MarkovModel, heat_kernel
from .potential import PotentialFamily
from .propagator import SolverConfig

__all__ = [
    "AveragedField",
    "AveragedDensityMatrix",
    "solve_scalar_averaged",
    "solve_liouville_averaged",
    "density",
    "trace",
    "psd_check",
    "write_density_csv",
    "write_trace_csv",
]

LIOUVILLE_N_CAP = 128
LIOUVILLE_M_CAP = 8


@dataclass
class AveragedField:
    """One complex field per Markov state: g(., y) at a fixed time."""

    grid: SpatialGrid
    g: np.ndarray = field(repr=False)  # shape (m, grid.size)
    t: float = 0.0

    def __post_init__(self) -> None:
        self.g = np.asarray(self.g, dtype=np.complex128)
        if self.g.ndim == 1:
            self.g = self.g[None, :]
        if self.g.shape[1] != self.grid.size:
            raise ValueError("field shape does not match grid")
        if not np.all(np.isfinite(self.g.view(np.float64))):
            raise ValueError("averaged field contains non-finite entries")

    @property
    def m(self) -> int:
        return self.g.shape[0]


@dataclass
class AveragedDensityMatrix:
    """Per-state kernels f(x1, x2, y) at a fixed time (one dimension only)."""

    grid: SpatialGrid
    f: np.ndarray = field(repr=False)  # shape (m, n, n)
    t: float = 0.0

    def __post_init__(self) -> None:
        if self.grid.dim != 1:
            raise ValueError("density-matrix solves are restricted to d = 1")
        self.f = np.asarray(self.f, dtype=np.complex128)
        if self.f.ndim == 2:
            self.f = self.f[None, :, :]
        n = self.grid.points_per_axis
        if self.f.shape[1:] != (n, n):
            raise ValueError("kernel shape does not match grid")
        scale = float(np.max(np.abs(self.f), initial=0.0))
        herm = float(np.max(np.abs(self.f - self.f.conj().transpose(0, 2, 1)),
                            initial=0.0))
        if scale > 0 and herm > 1e-10 * scale:
            raise ValueError(f"kernel is not Hermitian (residual {herm:.3e})")

    @property
    def m(self) -> int:
        return self.f.shape[0]

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.f - self.f.conj().transpose(0, 2, 1)),
                            initial=0.0))


def _mixing_matrix(model: MarkovModel, tau: float) -> np.ndarray:
    return heat_kernel(model, tau).K


def solve_scalar_averaged(g0: AveragedField, family: PotentialFamily,
                          model: MarkovModel, cfg: SolverConfig,
                          source=None) -> list[AveragedField]:
    """March the scalar averaged equation, sampling at cfg.sample_times.

    `source(grid, t)` returns the (m, n^d) inhomogeneity; it is injected at
    step midpoints with weight i*dt, like the per-path solver's source.
    """
    grid = g0.grid
    m = model.m
    if g0.m != m or family.m != m:
        raise ValueError("state counts of g0, family and model disagree")
    shape = (m,) + grid.shape
    axes = tuple(range(1, grid.dim + 1))
    sym = laplacian_symbol(grid).reshape(grid.shape)
    g = g0.g.reshape(shape).copy()
    dt = cfg.dt
    kin_full = np.exp(1j * dt * sym)
    kin_half = np.exp(1j * 0.5 * dt * sym)
    pot_full = np.exp(1j * dt * family.V).reshape(shape)
    mix_half = _mixing_matrix(model, 0.5 * dt)
    mix_full = _mixing_matrix(model, dt)

    def kinetic(a, phase):
        return np.fft.ifftn(phase[None] * np.fft.fftn(a, axes=axes), axes=axes)

    def mix(a, M):
        return np.tensordot(M, a, axes=(1, 0))

    t = 0.0
    out: list[AveragedField] = []

    def record(time: float) -> None:
        if not np.all(np.isfinite(g.view(np.float64))):
            raise RuntimeError(f"averaged field lost finiteness at t={time}")
        out.append(AveragedField(grid, g.reshape(m, grid.size).copy(), t=time))

    for target in cfg.sample_times:
        if target <= 1e-15:
            record(target)
            continue
        n_steps = int(round((target - t) / dt))
        for j in range(n_steps):
            t_mid = t + 0.5 * dt
            if cfg.order == 2:
                g = kinetic(g, kin_half)
                g = mix(g, mix_half)
                g = pot_full * g
                if source is not None:
                    g = g + 1j * dt * np.asarray(source(grid, t_mid)).reshape(shape)
                g = mix(g, mix_half)
                g = kinetic(g, kin_half)
            else:
                g = kinetic(g, kin_full)
                g = mix(g, mix_full)
                g = pot_full * g
                if source is not None:
                    g = g + 1j * dt * np.asarray(source(grid, t_mid)).reshape(shape)
            t = t + dt if j < n_steps - 1 else target
        record(target)
    return out


def solve_liouville_averaged(f0: AveragedDensityMatrix, family: PotentialFamily,
                             model: MarkovModel, cfg: SolverConfig,
                             source=None, n_cap: int = LIOUVILLE_N_CAP,
                             m_cap: int = LIOUVILLE_M_CAP) -> list[AveragedDensityMatrix]:
    """March the dissipative Liouville equation for the averaged kernels.

    All factors act as conjugations (kinetic, potential commutator) or as
    mixings with nonnegative weights, so Hermiticity and positive
    semidefiniteness are preserved structurally and the total trace is
    conserved.  `source(grid, t)` returns (m, n, n) kernels.
    """
    grid = f0.grid
    n = grid.points_per_axis
    m = model.m
    if n > n_cap or m > m_cap:
        raise ValueError(f"liouville solve capped at n <= {n_cap}, m <= {m_cap}")
    if f0.m != m or family.m != m:
        raise ValueError("state counts of f0, family and model disagree")
    sym = laplacian_symbol(grid)
    dt = cfg.dt
    kin_half = np.exp(1j * 0.5 * dt * sym)
    kin_full = np.exp(1j * dt * sym)
    pot_full = np.exp(1j * dt * family.V)  # (m, n) phases
    mix_half = _mixing_matrix(model, 0.5 * dt)
    mix_full = _mixing_matrix(model, dt)
    f = f0.f.copy()

    def apply_U(X, phase):
        # one-particle step operator on the left: U @ X
        return np.fft.ifft(phase[:, None] * np.fft.fft(X, axis=0), axis=0)

    def conjugate_kinetic(fy, phase):
        # U f U^H, via U @ (U @ f^H)^H
        inner = apply_U(fy.conj().T, phase)
        return apply_U(inner.conj().T, phase)

    t = 0.0
    out: list[AveragedDensityMatrix] = []

    def record(time: float) -> None:
        if not np.all(np.isfinite(f.view(np.float64))):
            raise RuntimeError(f"liouville kernels lost finiteness at t={time}")
        out.append(AveragedDensityMatrix(grid, f.copy(), t=time))

    for target in cfg.sample_times:
        if target <= 1e-15:
            record(target)
            continue
        n_steps = int(round((target - t) / dt))
        for j in range(n_steps):
            t_mid = t + 0.5 * dt
            if cfg.order == 2:
                for y in range(m):
                    f[y] = conjugate_kinetic(f[y], kin_half)
                f = np.tensordot(mix_half, f, axes=(1, 0))
                for y in range(m):
                    p = pot_full[y]
                    f[y] = p[:, None] * f[y] * p.conj()[None, :]
                if source is not None:
                    f = f + 1j * dt * np.asarray(source(grid, t_mid))
                f = np.tensordot(mix_half, f, axes=(1, 0))
                for y in range(m):
                    f[y] = conjugate_kinetic(f[y], kin_half)
            else:
                for y in range(m):
                    f[y] = conjugate_kinetic(f[y], kin_full)
                f = np.tensordot(mix_full, f, axes=(1, 0))
                for y in range(m):
                    p = pot_full[y]
                    f[y] = p[:, None] * f[y] * p.conj()[None, :]
                if source is not None:
                    f = f + 1j * dt * np.asarray(source(grid, t_mid))
            t = t + dt if j < n_steps - 1 else target
        record(target)
    return out


def density(f: AveragedDensityMatrix) -> np.ndarray:
    """Diagonal rho(x, y) = f(x, x, y) as real per-state fields."""
    diag = np.ascontiguousarray(np.diagonal(f.f, axis1=1, axis2=2))
    scale = max(1.0, float(np.max(np.abs(diag), initial=0.0)))
    if np.max(np.abs(diag.imag), initial=0.0) > 1e-10 * scale:
        raise ValueError("density has a non-negligible imaginary part")
    return diag.real


def trace(f: AveragedDensityMatrix) -> tuple[np.ndarray, float]:
    """Cell-weighted per-state traces and their total."""
    per_state = f.grid.cell_volume * density(f).sum(axis=1)
    return per_state, float(per_state.sum())


def psd_check(f: AveragedDensityMatrix) -> np.ndarray:
    """Minimum eigenvalue of each state's kernel (dense Hermitian solve)."""
    hermitized = 0.5 * (f.f + f.f.conj().transpose(0, 2, 1))
    return np.array([np.linalg.eigvalsh(hermitized[y])[0] for y in range(f.m)])


def write_density_csv(path, series: list[AveragedDensityMatrix]) -> None:
    """Rows (t, y, rho(x_0), ..., rho(x_{n-1})) for every state and time."""
    n = series[0].grid.points_per_axis
    with open(path, "w") as fh:
        fh.write("t,y," + ",".join(f"rho{i}" for i in range(n)) + "\n")
        for snap in series:
            rho = density(snap)
            for y in range(snap.m):
                row = ",".join(f"{v:.17g}" for v in rho[y])
                fh.write(f"{snap.t:.17g},{y},{row}\n")


def write_trace_csv(path, series: list[AveragedDensityMatrix]) -> None:
    """Trace / Hermiticity / positivity series for a Liouville solve."""
    m = series[0].m
    header = ["t"] + [f"trace{y}" for y in range(m)] + [
        "trace_total", "hermiticity_residual", "min_eigenvalue"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for snap in series:
            per_state, total = trace(snap)
            row = [snap.t, *per_state, total, snap.hermiticity_residual(),
                   float(psd_check(snap).min())]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
