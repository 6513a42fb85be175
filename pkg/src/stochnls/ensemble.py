"""Monte Carlo driver: many per-path solves, conditional averages, and the
stochastic sides of the identities.

Conditioning on the chain's position is exact set-membership binning per
sample time (the state space is finite).  Two weightings are exposed:

* conditional: bin mean E{psi | X_t = y}; empty bins are missing data.
* joint: bin sum / N, i.e. the conditional mean multiplied by the
  empirical bin probability.  This matches the bookkeeping of the
  deterministic averaged equations, whose unknowns carry the state
  probability, and is what the identity checks use.

Path i of an ensemble uses the seed pair (master_seed, i); accumulation
runs in fixed path order, so a (configs, master_seed) pair reproduces the
reduction bit-for-bit regardless of worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .averaged import AveragedDensityMatrix, AveragedField
from .grid import WaveField
from .markov import MarkovModel, sample_path
from .potential import HartreeKernel, PotentialFamily
from .propagator import SolverConfig, TrajectoryOutput, evolve_path

__all__ = [
    "EnsembleConfig",
    "ConditionalAverage",
    "PathScalarSeries",
    "FieldEstimate",
    "DensityMatrixEstimate",
    "run_ensemble",
    "estimate_g",
    "estimate_f",
    "feynman_kac_lhs",
    "weighted_mass_series",
    "weighted_energy_average",
    "strichartz_orders",
    "write_summary_json",
]


@dataclass
class EnsembleConfig:
    N: int
    master_seed: int
    horizon: float
    reduction_precision: str = "double"  # or "compensated"
    store_density_matrix: bool = False

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.reduction_precision not in ("double", "compensated"):
            raise ValueError("reduction_precision must be 'double' or 'compensated'")


class _Accumulator:
    """Fixed-order reducer, optionally with compensated (Kahan) summation."""

    def __init__(self, shape, dtype, compensated: bool):
        self.value = np.zeros(shape, dtype=dtype)
        self.comp = np.zeros(shape, dtype=dtype) if compensated else None

    def add(self, index, chunk) -> None:
        if self.comp is None:
            self.value[index] += chunk
            return
        y = chunk - self.comp[index]
        t = self.value[index] + y
        self.comp[index] = (t - self.value[index]) - y
        self.value[index] = t


@dataclass
class ConditionalAverage:
    """Per-(time, state) sums of the fields, their squared moduli, counts,
    and optionally outer products, over an ensemble of N paths."""

    grid: object
    sample_times: np.ndarray
    m: int
    N: int
    sums: np.ndarray = field(repr=False)          # (T, m, size) complex
    sums_sq: np.ndarray = field(repr=False)       # (T, m, size) real
    counts: np.ndarray = field(repr=False)        # (T, m) int
    outer_sums: np.ndarray | None = field(repr=False, default=None)

    @staticmethod
    def merged(parts: list["ConditionalAverage"]) -> "ConditionalAverage":
        """Union of disjoint sub-ensembles: the sums simply add."""
        first = parts[0]
        outer = None
        if all(p.outer_sums is not None for p in parts):
            outer = np.sum([p.outer_sums for p in parts], axis=0)
        return ConditionalAverage(
            grid=first.grid, sample_times=first.sample_times.copy(),
            m=first.m, N=sum(p.N for p in parts),
            sums=np.sum([p.sums for p in parts], axis=0),
            sums_sq=np.sum([p.sums_sq for p in parts], axis=0),
            counts=np.sum([p.counts for p in parts], axis=0),
            outer_sums=outer,
        )

    def missing_bins(self) -> list[tuple[int, int]]:
        return [(int(ti), int(y)) for ti, y in np.argwhere(self.counts == 0)]

    def conditional_mean(self, ti: int) -> np.ndarray:
        """Bin means at sample time index ti; empty bins come back NaN."""
        out = np.full((self.m, self.sums.shape[2]), np.nan + 0j)
        for y in range(self.m):
            c = self.counts[ti, y]
            if c > 0:
                out[y] = self.sums[ti, y] / c
        return out

    def joint_mean(self, ti: int) -> np.ndarray:
        return self.sums[ti] / self.N


@dataclass
class PathScalarSeries:
    """Per-path scalar series, shape (N, T) each, in path order."""

    sample_times: np.ndarray
    state: np.ndarray
    l2: np.ndarray
    suml2linf: np.ndarray
    energy_kinetic: np.ndarray
    energy_potential: np.ndarray
    energy_hartree: np.ndarray
    weighted_mass: np.ndarray  # int |V_omega(x,t)| |psi|^2 dx
    lorentz62: np.ndarray      # spatial L^{6,2} norm per path and time


def weighted_mass_series(output: TrajectoryOutput, family: PotentialFamily) -> np.ndarray:
    """int |V(x, X_t)| |psi(x,t)|^2 dx along one trajectory."""
    vol = output.grid.cell_volume
    vals = np.empty(output.sample_times.size)
    for j, snap in enumerate(output.snapshots):
        absV = np.abs(family.V[output.states[j]])
        vals[j] = vol * float(np.sum(absV * np.abs(snap.values) ** 2))
    return vals


def _resolve_initial(psi0_law, grid, state0: int) -> WaveField:
    if isinstance(psi0_law, WaveField):
        return psi0_law
    table = np.asarray(psi0_law, dtype=complex)
    if table.ndim != 2:
        raise ValueError("psi0_law must be a WaveField or an (m, size) table")
    return WaveField(grid, table[state0])


def _solve_one_path(i: int, psi0_law, family, model, kernel, cfg, ecfg):
    """Map-phase worker: everything one path contributes to the reduction."""
    from .grid import lorentz_norm

    grid = psi0_law.grid if isinstance(psi0_law, WaveField) else family.grid
    path = sample_path(model, ecfg.horizon, seed=(ecfg.master_seed, i))
    psi0 = _resolve_initial(psi0_law, grid, int(path.states[0]))
    out = evolve_path(psi0, family, path, kernel, cfg)
    fields = np.array([snap.values for snap in out.snapshots])
    scalars = {k: out.scalars[k] for k in
               ("l2", "suml2linf", "energy_kinetic", "energy_potential",
                "energy_hartree")}
    scalars["weighted_mass"] = weighted_mass_series(out, family)
    scalars["lorentz62"] = np.array([lorentz_norm(snap, 6.0, 2.0)
                                     for snap in out.snapshots])
    return out.states, fields, scalars


def run_ensemble(psi0_law, family: PotentialFamily, model: MarkovModel,
                 kernel: HartreeKernel | None, cfg: SolverConfig,
                 ecfg: EnsembleConfig,
                 workers: int = 1) -> tuple[ConditionalAverage, PathScalarSeries]:
    """Run N per-path solves and reduce them into conditional averages.

    The initial data is either one fixed field or an (m, size) table
    indexed by the path's initial state (data may depend on omega(0) only).
    With workers > 1 the map phase runs in a process pool; the reduce phase
    always consumes results in path-index order, so the output is identical
    to the serial run bit for bit.
    """
    grid = psi0_law.grid if isinstance(psi0_law, WaveField) else family.grid
    T_axis = cfg.sample_times.size
    m = model.m
    compensated = ecfg.reduction_precision == "compensated"
    sums = _Accumulator((T_axis, m, grid.size), np.complex128, compensated)
    sums_sq = _Accumulator((T_axis, m, grid.size), np.float64, compensated)
    counts = np.zeros((T_axis, m), dtype=np.int64)
    outer = None
    if ecfg.store_density_matrix:
        if grid.dim != 1:
            raise ValueError("density-matrix accumulation is restricted to d = 1")
        outer = _Accumulator((T_axis, m, grid.size, grid.size), np.complex128,
                             compensated)

    scalar_names = ("l2", "suml2linf", "energy_kinetic", "energy_potential",
                    "energy_hartree", "weighted_mass", "lorentz62")
    scalars = {k: np.empty((ecfg.N, T_axis)) for k in scalar_names}
    states = np.empty((ecfg.N, T_axis), dtype=np.int64)

    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        from functools import partial

        job = partial(_solve_one_path, psi0_law=psi0_law, family=family,
                      model=model, kernel=kernel, cfg=cfg, ecfg=ecfg)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            items = enumerate(pool.map(job, range(ecfg.N), chunksize=32))
            _reduce(items, sums, sums_sq, counts, outer, states, scalars,
                    scalar_names, T_axis)
    else:
        items = ((i, _solve_one_path(i, psi0_law, family, model, kernel, cfg,
                                     ecfg)) for i in range(ecfg.N))
        _reduce(items, sums, sums_sq, counts, outer, states, scalars,
                scalar_names, T_axis)

    avg = ConditionalAverage(
        grid=grid, sample_times=cfg.sample_times.copy(), m=m, N=ecfg.N,
        sums=sums.value, sums_sq=sums_sq.value, counts=counts,
        outer_sums=outer.value if outer is not None else None,
    )
    series = PathScalarSeries(sample_times=cfg.sample_times.copy(), state=states,
                              weighted_mass=scalars["weighted_mass"],
                              l2=scalars["l2"], suml2linf=scalars["suml2linf"],
                              energy_kinetic=scalars["energy_kinetic"],
                              energy_potential=scalars["energy_potential"],
                              energy_hartree=scalars["energy_hartree"],
                              lorentz62=scalars["lorentz62"])
    return avg, series


def _reduce(items, sums, sums_sq, counts, outer, states, scalars,
            scalar_names, T_axis) -> None:
    """Fixed-order reduction over (path index, worker payload) pairs."""
    for i, (path_states, fields, path_scalars) in items:
        for j in range(T_axis):
            y = int(path_states[j])
            vals = fields[j]
            sums.add((j, y), vals)
            sums_sq.add((j, y), np.abs(vals) ** 2)
            counts[j, y] += 1
            if outer is not None:
                outer.add((j, y), np.outer(vals, vals.conj()))
        states[i] = path_states
        for k in scalar_names:
            scalars[k][i] = path_scalars[k]


@dataclass
class FieldEstimate:
    fields: list[AveragedField]
    stderr: np.ndarray = field(repr=False)  # (T, m, size)
    counts: np.ndarray = field(repr=False)
    flags: list[str] = field(default_factory=list)


@dataclass
class DensityMatrixEstimate:
    matrices: list[AveragedDensityMatrix]
    stderr: np.ndarray = field(repr=False)  # (T, m) scale estimate per bin
    counts: np.ndarray = field(repr=False)
    flags: list[str] = field(default_factory=list)


MIN_BIN = 10


def _bin_flags(counts: np.ndarray) -> list[str]:
    flags = []
    for ti, y in np.argwhere(counts == 0):
        flags.append(f"missing-data: empty bin at (t_index={ti}, y={y})")
    for ti, y in np.argwhere((counts > 0) & (counts < MIN_BIN)):
        flags.append(f"insufficient paths ({counts[ti, y]}) at (t_index={ti}, y={y})")
    return flags


def estimate_g(avg: ConditionalAverage, weighting: str = "joint") -> FieldEstimate:
    """Package the ensemble mean of psi as per-time averaged fields.

    Per-entry standard errors come from the per-bin sample variances; with
    joint weighting the binned variable is psi * indicator(X_t = y), whose
    moments are exactly the bin sums over N.
    """
    if weighting not in ("joint", "conditional"):
        raise ValueError("weighting must be 'joint' or 'conditional'")
    T_axis = avg.sample_times.size
    fields = []
    stderr = np.empty((T_axis, avg.m, avg.sums.shape[2]))
    flags = _bin_flags(avg.counts)
    if weighting == "conditional" and avg.missing_bins():
        raise ValueError("conditional weighting with empty bins: " + "; ".join(flags))
    for ti in range(T_axis):
        if weighting == "joint":
            mean = avg.joint_mean(ti)
            second = avg.sums_sq[ti] / avg.N
            var = np.maximum(second - np.abs(mean) ** 2, 0.0)
            stderr[ti] = np.sqrt(var / avg.N)
        else:
            mean = avg.conditional_mean(ti)
            c = np.maximum(avg.counts[ti], 1)[:, None]
            second = avg.sums_sq[ti] / c
            var = np.maximum(second - np.abs(mean) ** 2, 0.0)
            stderr[ti] = np.sqrt(var / c)
        fields.append(AveragedField(avg.grid, mean, t=float(avg.sample_times[ti])))
    return FieldEstimate(fields=fields, stderr=stderr, counts=avg.counts.copy(),
                         flags=flags)


def estimate_f(avg: ConditionalAverage, weighting: str = "joint") -> DensityMatrixEstimate:
    """Ensemble estimate of the averaged density matrix (needs the outer
    products accumulated; d = 1)."""
    if avg.outer_sums is None:
        raise ValueError("run the ensemble with store_density_matrix=True")
    if weighting not in ("joint", "conditional"):
        raise ValueError("weighting must be 'joint' or 'conditional'")
    flags = _bin_flags(avg.counts)
    if weighting == "conditional" and avg.missing_bins():
        raise ValueError("conditional weighting with empty bins: " + "; ".join(flags))
    T_axis = avg.sample_times.size
    matrices = []
    stderr = np.empty((T_axis, avg.m))
    for ti in range(T_axis):
        if weighting == "joint":
            f = avg.outer_sums[ti] / avg.N
            denom = np.full(avg.m, float(avg.N))
        else:
            c = np.maximum(avg.counts[ti], 1).astype(float)
            f = avg.outer_sums[ti] / c[:, None, None]
            denom = c
        f = 0.5 * (f + f.conj().transpose(0, 2, 1))  # strip roundoff asymmetry
        matrices.append(AveragedDensityMatrix(avg.grid, f,
                                              t=float(avg.sample_times[ti])))
        # diagonal-scale standard error: sample std of |psi(x)|^2 via moments
        diag = np.ascontiguousarray(np.diagonal(avg.outer_sums[ti],
                                                axis1=1, axis2=2)).real
        mean_diag = diag / denom[:, None]
        stderr[ti] = np.sqrt(np.maximum(mean_diag.max(axis=1), 0.0) / denom)
    return DensityMatrixEstimate(matrices=matrices, stderr=stderr,
                                 counts=avg.counts.copy(), flags=flags)


def feynman_kac_lhs(series: PathScalarSeries | list[TrajectoryOutput],
                    family: PotentialFamily | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble mean and standard error of int |V_omega| |psi|^2 dx.

    Accepts either the scalar table from run_ensemble or an explicit list
    of per-path trajectories (then `family` must be given).
    """
    if isinstance(series, PathScalarSeries):
        table = series.weighted_mass
    else:
        if family is None:
            raise ValueError("family required when passing raw trajectories")
        table = np.array([weighted_mass_series(out, family) for out in series])
    mean = table.mean(axis=0)
    n = table.shape[0]
    se = table.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def strichartz_orders(series: PathScalarSeries) -> dict:
    """Both orderings of the mixed space-time norm, labeled.

    The ensemble-outside order sqrt(E ||psi||^2_{L2_t L^{6,2}_x}) and the
    mean of the per-path norms differ in general; identity checks at desk
    scale use per-path quantities, so both are reported side by side.
    """
    t = series.sample_times
    if t.size < 2:
        raise ValueError("need at least two sample times")
    dt = float(t[1] - t[0])
    if np.max(np.abs(np.diff(t) - dt)) > 1e-10 * dt:
        raise ValueError("strichartz orders need uniform sample times")
    w = np.full(t.size, dt)
    w[0] = w[-1] = 0.5 * dt
    per_path_sq = series.lorentz62**2 @ w  # (N,) squared L2_t L^{6,2}_x norms
    return {
        "l2_omega_l2_t_l62": float(np.sqrt(per_path_sq.mean())),
        "per_path_mean_l2_t_l62": float(np.mean(np.sqrt(per_path_sq))),
        "per_path_std_l2_t_l62": float(np.std(np.sqrt(per_path_sq))),
    }


def weighted_energy_average(series: PathScalarSeries, model: MarkovModel) \
        -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of h(X_t) * E[psi](t) over the ensemble."""
    h = model.ground_state()
    weights = h[series.state]
    energy = series.energy_kinetic + series.energy_potential + series.energy_hartree
    vals = weights * energy
    mean = vals.mean(axis=0)
    n = vals.shape[0]
    se = vals.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def write_summary_json(path, avg: ConditionalAverage, series: PathScalarSeries,
                       ecfg: EnsembleConfig, residuals: dict | None = None) -> None:
    """{N, seed, per-time: {counts, scalar means, standard errors, ...}}."""
    import json

    n = series.l2.shape[0]
    per_time = []
    for j, t in enumerate(avg.sample_times):
        entry = {
            "t": float(t),
            "counts": avg.counts[j].tolist(),
            "scalars": {},
        }
        for name in ("l2", "suml2linf", "energy_kinetic", "energy_potential",
                     "energy_hartree", "weighted_mass"):
            col = getattr(series, name)[:, j]
            entry["scalars"][name] = {
                "mean": float(col.mean()),
                "stderr": float(col.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
            }
        if residuals is not None:
            entry["identity_residuals"] = {
                k: (float(v[j]) if np.ndim(v) else float(v))
                for k, v in residuals.items()
            }
        per_time.append(entry)
    doc = {"N": ecfg.N, "seed": ecfg.master_seed, "horizon": ecfg.horizon,
           "per_time": per_time}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
