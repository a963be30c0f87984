"""Deterministic disorder-ensemble driver: maps an experiment over realization
indices (optionally across processes) and accumulates streaming statistics.

Reduction is a fixed-order pairwise (binary counter) merge over realization
indices, so the accumulated floating-point result is bit-identical for any
worker count. Realizations with a numerically degenerate spectrum are rejected
and replaced from a reserved index range above the primary streams.
"""

from __future__ import annotations

import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import closed, hsr, lattice

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "stationary_distribution",
    "closed_diffusivity",
    "open_diffusivity",
    "eigen_widths",
    "secular_diffusivity",
)

SWEEP_PARAMETERS = ("sigma", "gamma", "width_w")


class EnsembleFailure(RuntimeError):
    """Too many rejected realizations or a worker error."""


@dataclass(frozen=True)
class EnsembleConfig:
    spec: lattice.LatticeSpec
    n_realizations: int
    master_seed: int
    experiment: str
    gamma: float = 0.0
    initial_state: str = "site"
    width_w: float | None = None
    n0: int | None = None
    t_max: float = 20.0
    dt: float = 0.01
    bin_edges: tuple = tuple(lattice.default_width_bins())
    n_workers: int = 1
    edge_threshold: float | None = None
    ivp_rtol: float = 1e-8
    ivp_atol: float = 1e-8
    keep_raw: bool = False

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.t_max <= 0 or self.dt <= 0 or self.dt > self.t_max:
            raise ValueError("invalid time grid")

    def times(self) -> np.ndarray:
        return np.arange(0.0, self.t_max + 0.5 * self.dt, self.dt)

    def axis(self) -> np.ndarray:
        """Abscissa of the accumulated observable (time grid, offsets, or bin centers)."""
        if self.experiment == "stationary_distribution":
            n0 = self.spec.center if self.n0 is None else self.n0
            return np.arange(self.spec.n_sites, dtype=float) - n0
        if self.experiment == "eigen_widths":
            edges = np.asarray(self.bin_edges)
            return 0.5 * (edges[:-1] + edges[1:])
        return self.times()


@dataclass(frozen=True)
class EnsembleStats:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    m_effective: int
    rejected: tuple = ()
    raw: np.ndarray | None = None


class PairwiseMoments:
    """Streaming mean/variance with fixed-order pairwise merging (Chan's update).

    Pushing in index order makes the float result independent of how the inputs
    were produced; memory stays logarithmic in the number of samples.
    """

    def __init__(self):
        self._stack: list[tuple[int, np.ndarray, np.ndarray]] = []

    @staticmethod
    def _merge(a, b):
        na, ma, sa = a
        nb, mb, sb = b
        n = na + nb
        delta = mb - ma
        mean = ma + delta * (nb / n)
        m2 = sa + sb + delta**2 * (na * nb / n)
        return n, mean, m2

    def push(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        item = (1, x.copy(), np.zeros_like(x))
        while self._stack and self._stack[-1][0] == item[0]:
            item = self._merge(self._stack.pop(), item)
        self._stack.append(item)

    def finalize(self) -> tuple[int, np.ndarray, np.ndarray]:
        """(count, mean, stderr); stderr is zero for a single sample."""
        if not self._stack:
            raise ValueError("no samples accumulated")
        total = self._stack[0]
        for item in self._stack[1:]:
            total = self._merge(total, item)
        n, mean, m2 = total
        if n > 1:
            stderr = np.sqrt(m2 / (n - 1) / n)
        else:
            stderr = np.zeros_like(mean)
        return n, mean, stderr


class _Rejected(Exception):
    """Realization unusable (degenerate spectrum); carries the index."""


def realization_observable(config: EnsembleConfig, index: int) -> np.ndarray:
    """Observable vector for one realization; pure function of (config, index)."""
    spec = config.spec
    realization = lattice.sample_disorder(spec, config.master_seed, index)
    ham = lattice.build_hamiltonian(spec, realization)
    es = lattice.diagonalize(ham)
    if config.experiment == "eigen_widths":
        widths = lattice.eigenstate_widths(es)
        hist = lattice.width_histogram(widths, np.asarray(config.bin_edges))
        return hist.counts.astype(float)
    if lattice.degenerate(es):
        raise _Rejected(index)
    n0 = spec.center if config.n0 is None else config.n0
    if config.experiment == "stationary_distribution":
        return closed.time_averaged_distribution(es, n0)
    times = config.times()
    if config.experiment == "closed_diffusivity":
        psi0 = closed.make_initial_state(spec, config.initial_state, n0, config.width_w)
        trace = closed.diffusivity(es, psi0, times, edge_threshold=config.edge_threshold)
        return trace.d_values
    if config.experiment == "secular_diffusivity":
        pop0 = es.eigenvectors[:, n0] ** 2
        trace = hsr.secular_diffusivity(es, hsr.HsrParams(config.gamma), pop0,
                                        times, origin=n0)
        return trace.d_values
    if config.experiment == "open_diffusivity":
        psi0 = closed.make_initial_state(spec, config.initial_state, n0, config.width_w)
        rho0 = np.outer(psi0.amplitudes, psi0.amplitudes.conj())
        dm = hsr.lindblad_propagate(ham, hsr.HsrParams(config.gamma), rho0, times,
                                    rtol=config.ivp_rtol, atol=config.ivp_atol)
        trace = hsr.diffusivity_from_rho(dm, ham, origin=n0)
        return trace.d_values
    raise AssertionError(config.experiment)


def _worker(args) -> tuple[int, np.ndarray | None]:
    config, index = args
    try:
        return index, realization_observable(config, index)
    except _Rejected:
        return index, None


def run_ensemble(config: EnsembleConfig, progress: bool = False) -> EnsembleStats:
    """Run the configured experiment over n_realizations disorder realizations."""
    m = config.n_realizations
    reducer = PairwiseMoments()
    rejected: list[int] = []
    raw: list[np.ndarray] | None = [] if config.keep_raw else None
    max_rejections = max(1, m // 100)

    def resolve(index: int, value: np.ndarray | None) -> np.ndarray:
        # substitute indices come from the reserved range above the primary streams
        while value is None:
            rejected.append(index)
            if len(rejected) > max_rejections:
                raise EnsembleFailure(
                    f"{len(rejected)} rejected realizations out of {m} exceeds 1%"
                )
            log.warning("realization %d rejected (degenerate spectrum); resampling", index)
            index = m + len(rejected) - 1
            _, value = _worker((config, index))
        return value

    jobs = ((config, i) for i in range(m))
    done = 0
    if config.n_workers > 1:
        with ProcessPoolExecutor(max_workers=config.n_workers) as pool:
            for index, value in pool.map(_worker, jobs, chunksize=max(1, m // (8 * config.n_workers))):
                value = resolve(index, value)
                reducer.push(value)
                if raw is not None:
                    raw.append(value)
                done += 1
                if progress and (done % max(1, m // 20) == 0 or done == m):
                    print(f"\r{config.experiment}: {done}/{m}", end="", file=sys.stderr)
    else:
        for job in jobs:
            value = resolve(job[1], _worker(job)[1])
            reducer.push(value)
            if raw is not None:
                raw.append(value)
            done += 1
            if progress and (done % max(1, m // 20) == 0 or done == m):
                print(f"\r{config.experiment}: {done}/{m}", end="", file=sys.stderr)
    if progress:
        print(file=sys.stderr)
    count, mean, stderr = reducer.finalize()
    return EnsembleStats(
        times=config.axis(), mean=mean, stderr=stderr, m_effective=count,
        rejected=tuple(rejected),
        raw=np.array(raw) if raw is not None else None,
    )


_SWEEP_TAG = 0x53574545  # keeps sweep-derived seeds off the realization spawn keys


def derive_sweep_seed(master_seed: int, value_index: int) -> int:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(_SWEEP_TAG, value_index))
    return int(ss.generate_state(1, np.uint64)[0])


def sweep(config: EnsembleConfig, parameter: str, values) -> list[EnsembleStats]:
    """One ensemble per parameter value with per-value seeds derived from
    (master_seed, value_index), so sweeps are reproducible element by element."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"parameter must be one of {SWEEP_PARAMETERS}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    results = []
    for k, value in enumerate(values):
        seed = derive_sweep_seed(config.master_seed, k)
        if parameter == "sigma":
            spec = dataclasses.replace(config.spec, disorder_sigma=float(value))
            cfg = dataclasses.replace(config, spec=spec, master_seed=seed)
        elif parameter == "gamma":
            cfg = dataclasses.replace(config, gamma=float(value), master_seed=seed)
        else:
            cfg = dataclasses.replace(config, width_w=float(value),
                                      initial_state="gaussian", master_seed=seed)
        results.append(run_ensemble(cfg))
    return results
