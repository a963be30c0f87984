"""Closed-system dynamics by spectral decomposition: populations, stationary
distributions, and the time-dependent diffusivity D(t) = (1/2) d/dt var(n).

All time derivatives are evaluated analytically through expectation-value
identities (d<A>/dt = 2 Im <psi|A H|psi> for real H), never by finite
differencing; finite differences appear only as test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import Eigensystem, LatticeSpec


class EdgeContactError(RuntimeError):
    """Wave packet reached the chain boundary above the configured threshold."""


@dataclass(frozen=True)
class InitialState:
    kind: str              # "site" or "gaussian"
    n0: int
    width: float | None
    amplitudes: np.ndarray  # complex, unit norm


@dataclass(frozen=True)
class PopulationTrace:
    times: np.ndarray
    populations: np.ndarray  # (T, N), rows sum to 1


@dataclass(frozen=True)
class DiffusivityTrace:
    times: np.ndarray
    d_values: np.ndarray   # units a^2 |J|
    msd: np.ndarray        # <n^2> - <n>^2, units a^2


def make_initial_state(spec: LatticeSpec, kind: str, n0: int | None = None,
                       width: float | None = None) -> InitialState:
    """Site state delta_{n,n0} or a normalized Gaussian of probability width ~ w."""
    n = spec.n_sites
    if n0 is None:
        n0 = spec.center
    if not 0 <= n0 < n:
        raise ValueError(f"n0 = {n0} outside lattice of {n} sites")
    if kind == "site":
        amp = np.zeros(n, dtype=complex)
        amp[n0] = 1.0
        return InitialState(kind="site", n0=n0, width=None, amplitudes=amp)
    if kind == "gaussian":
        if width is None or width <= 0:
            raise ValueError("gaussian initial state requires width > 0")
        sites = np.arange(n, dtype=float)
        amp = np.exp(-((sites - n0) ** 2) / (4.0 * width**2)).astype(complex)
        amp /= np.linalg.norm(amp)
        return InitialState(kind="gaussian", n0=n0, width=width, amplitudes=amp)
    raise ValueError(f"unknown initial state kind {kind!r}")


def _check_times(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1D array")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be ascending and start at t >= 0")
    return times


def _spectral_amplitudes(es: Eigensystem, psi0: InitialState,
                         times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """psi(t) and H psi(t) on the time grid, both (T, N) complex."""
    u = es.eigenvectors
    lam = es.eigenvalues
    if psi0.amplitudes.size != es.n_sites:
        raise ValueError("initial state dimension does not match eigensystem")
    c = u @ psi0.amplitudes                      # overlaps <v_k|psi0>
    phases = np.exp(-1j * np.outer(times, lam)) * c
    psi_t = phases @ u
    hpsi_t = (phases * lam) @ u
    return psi_t, hpsi_t


def propagate_populations(es: Eigensystem, psi0: InitialState,
                          times: np.ndarray) -> PopulationTrace:
    """Exact site populations P(n,t); no time-stepping error beyond the eigensolver."""
    times = _check_times(times)
    psi_t, _ = _spectral_amplitudes(es, psi0, times)
    return PopulationTrace(times=times, populations=np.abs(psi_t) ** 2)


def time_averaged_distribution(es: Eigensystem, n0: int) -> np.ndarray:
    """Infinite-time-averaged population profile sum_k |U_{k,n0}|^2 |U_{k,n}|^2."""
    if not 0 <= n0 < es.n_sites:
        raise ValueError(f"n0 = {n0} outside lattice of {es.n_sites} sites")
    u2 = es.eigenvectors**2
    return u2[:, n0] @ u2


def stationary_width(distribution: np.ndarray, origin: int | None = None) -> float:
    """Standard-deviation width W = sqrt(sum_m m^2 P(m)) about the origin index."""
    p = np.asarray(distribution, dtype=float)
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"distribution is not normalized: sum = {total!r}")
    if origin is None:
        origin = (p.size - 1) // 2
    m = np.arange(p.size, dtype=float) - origin
    return float(np.sqrt(np.sum(m**2 * p)))


def diffusivity(es: Eigensystem, psi0: InitialState, times: np.ndarray,
                edge_threshold: float | None = None) -> DiffusivityTrace:
    """D(t) and msd(t) about the initial site, via the spectral representation.

    Site indices enter relative to n0, which avoids large-number cancellation
    in <n^2> - <n>^2 on long chains. With edge_threshold set, raises
    EdgeContactError if either end site ever exceeds that population.
    """
    times = _check_times(times)
    psi_t, hpsi_t = _spectral_amplitudes(es, psi0, times)
    m = np.arange(es.n_sites, dtype=float) - psi0.n0
    pop = np.abs(psi_t) ** 2
    if edge_threshold is not None:
        edge = max(pop[:, 0].max(), pop[:, -1].max())
        if edge > edge_threshold:
            raise EdgeContactError(
                f"edge population {edge:.3e} exceeds monitor threshold {edge_threshold:.1e}"
            )
    mean_m = pop @ m
    msd = pop @ m**2 - mean_m**2
    # d<A>/dt = 2 Im <psi|A H|psi>; D = (1/2)(d<m^2>/dt - d<m>^2/dt)
    im_mh = np.einsum("tn,tn->t", (psi_t.conj() * m), hpsi_t).imag
    im_m2h = np.einsum("tn,tn->t", (psi_t.conj() * m**2), hpsi_t).imag
    d_values = im_m2h - 2.0 * mean_m * im_mh
    return DiffusivityTrace(times=times, d_values=d_values, msd=msd)
