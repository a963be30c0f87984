"""Disordered 1D tight-binding lattices: construction, diagonalization, eigenstate statistics.

Units: energies in |J|, times in 1/|J|, distances in the lattice constant a = 1.
Site energies are i.i.d. Gaussian with zero mean and standard deviation sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

ORTHOGONALITY_TOL = 1e-10
DEGENERACY_TOL = 1e-12


class DiagonalizationError(RuntimeError):
    """Eigensolver failed to converge."""


@dataclass(frozen=True)
class LatticeSpec:
    """Static problem definition: open chain of n_sites with hopping J and disorder sigma."""

    n_sites: int
    coupling: float = 1.0
    disorder_sigma: float = 0.0
    boundary: str = "open"

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError(f"n_sites must be >= 2, got {self.n_sites}")
        if self.coupling == 0:
            raise ValueError("coupling must be nonzero")
        if self.disorder_sigma < 0:
            raise ValueError(f"disorder_sigma must be >= 0, got {self.disorder_sigma}")
        if self.boundary != "open":
            raise ValueError("only open boundary conditions are supported")

    @property
    def center(self) -> int:
        return (self.n_sites - 1) // 2


@dataclass(frozen=True)
class DisorderRealization:
    """One sampled vector of site energies, reproducible from (master_seed, index)."""

    energies: np.ndarray
    seed: int
    index: int


@dataclass(frozen=True)
class Eigensystem:
    """Eigenvalues (ascending) and orthogonal eigenvector matrix U with eigenvectors as rows."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True)
class WidthHistogram:
    """Binned eigenstate widths; out-of-range values land in `overflow`."""

    bin_edges: np.ndarray
    counts: np.ndarray
    total: int
    overflow: int = 0

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def _seed_sequence(master_seed: int, index: int) -> np.random.SeedSequence:
    # spawn_key keys each realization off the master seed, so streams are
    # independent of sampling order and worker scheduling
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))


def sample_disorder(spec: LatticeSpec, master_seed: int, index: int = 0) -> DisorderRealization:
    """Draw one disorder realization; pure function of (master_seed, index)."""
    if index < 0:
        raise ValueError("index must be nonnegative")
    ss = _seed_sequence(master_seed, index)
    derived = int(ss.generate_state(1, np.uint64)[0])
    rng = np.random.Generator(np.random.Philox(ss))
    energies = rng.normal(0.0, spec.disorder_sigma, spec.n_sites)
    energies.setflags(write=False)
    return DisorderRealization(energies=energies, seed=derived, index=index)


def build_hamiltonian(spec: LatticeSpec, realization: DisorderRealization) -> np.ndarray:
    """Dense real symmetric tridiagonal Hamiltonian: diag = site energies, off-diag = J."""
    eps = np.asarray(realization.energies, dtype=float)
    if eps.shape != (spec.n_sites,):
        raise ValueError(
            f"realization has {eps.size} site energies, spec wants {spec.n_sites}"
        )
    h = np.diag(eps)
    off = np.full(spec.n_sites - 1, spec.coupling)
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


def _check_tridiagonal(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("Hamiltonian must be a square matrix")
    n = h.shape[0]
    d = np.diag(h).copy()
    e = np.diag(h, 1).copy()
    if not np.allclose(h, h.T, atol=1e-14):
        raise ValueError("Hamiltonian must be symmetric")
    rebuilt = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    if n > 2 and np.abs(h - rebuilt).max() != 0:
        raise ValueError("Hamiltonian must be tridiagonal")
    return d, e


def diagonalize(h: np.ndarray) -> Eigensystem:
    """Full eigensystem of a real symmetric tridiagonal matrix.

    Rows of the returned U are eigenvectors ordered by ascending eigenvalue;
    each row's first nonzero component is made nonnegative so U is deterministic.
    """
    d, e = _check_tridiagonal(h)
    try:
        w, v = eigh_tridiagonal(d, e)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare LAPACK failure
        raise DiagonalizationError(f"tridiagonal eigensolver failed: {exc}") from exc
    u = np.ascontiguousarray(v.T)
    # sign fix: first component with non-negligible magnitude per row
    scale = np.abs(u).max(axis=1, keepdims=True)
    significant = np.abs(u) > 1e-12 * scale
    first = significant.argmax(axis=1)
    signs = np.sign(u[np.arange(u.shape[0]), first])
    u *= signs[:, None]
    return Eigensystem(eigenvalues=w, eigenvectors=u)


def degenerate(es: Eigensystem, tol: float = DEGENERACY_TOL) -> bool:
    """True if any adjacent eigenvalue pair is closer than tol."""
    return bool(np.min(np.diff(es.eigenvalues)) < tol) if es.n_sites > 1 else False


def eigenstate_widths(es: Eigensystem) -> np.ndarray:
    """Standard deviation (in units of a) of each eigenstate's probability density."""
    u2 = es.eigenvectors**2
    n = np.arange(es.n_sites, dtype=float)
    mean = u2 @ n
    second = u2 @ n**2
    var = second - mean**2
    bad = var < -1e-12
    if np.any(bad):
        raise FloatingPointError(
            f"eigenstate variance below round-off floor: min {var.min():.3e}"
        )
    return np.sqrt(np.clip(var, 0.0, None))


def default_width_bins(n_bins: int = 100, w_max: float = 3.0) -> np.ndarray:
    return np.linspace(0.0, w_max, n_bins + 1)


def width_histogram(widths: np.ndarray, bin_edges: np.ndarray) -> WidthHistogram:
    """Histogram a flattened ensemble of eigenstate widths."""
    bin_edges = np.asarray(bin_edges, dtype=float)
    if bin_edges.ndim != 1 or bin_edges.size < 2:
        raise ValueError("bin_edges must be a 1D array with at least two edges")
    if np.any(np.diff(bin_edges) <= 0):
        raise ValueError("bin_edges must be strictly ascending")
    widths = np.asarray(widths, dtype=float).ravel()
    counts, _ = np.histogram(widths, bins=bin_edges)
    total = int(counts.sum())
    return WidthHistogram(
        bin_edges=bin_edges,
        counts=counts,
        total=total,
        overflow=int(widths.size - total),
    )
