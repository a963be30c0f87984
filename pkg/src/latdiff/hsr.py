"""Pure-dephasing (Lindblad) dynamics of the disordered chain: density-matrix
propagation, open-system diffusivity, eigenbasis equations of motion with the
eigenstate-overlap coupling tensor, and the secular hopping rate equation.

The site-projector dissipator is applied in its hollow-matrix form,
rho_dot = -i[H, rho] - gamma * (rho - diag(rho)), which is algebraically
identical to the double-commutator sum over projectors but costs O(N^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .closed import DiffusivityTrace, PopulationTrace
from .dimer import detuning_average
from .lattice import Eigensystem

SUPEROPERATOR_MAX_SITES = 8


class IntegrationError(RuntimeError):
    """Adaptive integrator failed or the solution degraded past tolerance."""


@dataclass(frozen=True)
class HsrParams:
    gamma: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"dephasing rate must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class DensityMatrixTrace:
    times: np.ndarray
    matrices: np.ndarray  # (T, N, N) complex Hermitian

    def trace_deviation(self) -> float:
        return float(np.abs(np.einsum("tii->t", self.matrices) - 1.0).max())

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.matrices - self.matrices.conj().transpose(0, 2, 1)).max())

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.matrices + self.matrices.conj().transpose(0, 2, 1))
        return float(np.linalg.eigvalsh(herm).min())

    def populations(self) -> np.ndarray:
        return np.einsum("tii->ti", self.matrices).real


@dataclass(frozen=True)
class KappaTensor:
    """Eigenstate-overlap coupling coefficients; only the N x N diagonal block
    K_ij = sum_m |U_im|^2 |U_jm|^2 is materialized, full elements on demand."""

    diagonal_block: np.ndarray
    eigenvectors: np.ndarray

    def element(self, i: int, j: int, k: int, l: int) -> float:
        u = self.eigenvectors
        return float(np.sum(u[i] * u[j] * u[k] * u[l]))

    def block(self, i: int, j: int) -> np.ndarray:
        u = self.eigenvectors
        return (u * (u[i] * u[j])) @ u.T


def _hollow(rho: np.ndarray) -> np.ndarray:
    out = rho.copy()
    np.fill_diagonal(out, 0.0)
    return out


def _validate_rho0(rho0: np.ndarray, n: int) -> np.ndarray:
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (n, n):
        raise ValueError(f"rho0 must be {n}x{n}")
    if np.abs(rho0 - rho0.conj().T).max() > 1e-10:
        raise ValueError("rho0 must be Hermitian")
    if abs(np.trace(rho0).real - 1.0) > 1e-8:
        raise ValueError("rho0 must have unit trace")
    if np.linalg.eigvalsh(0.5 * (rho0 + rho0.conj().T)).min() < -1e-10:
        raise ValueError("rho0 must be positive semidefinite")
    return rho0


def _validate_trace(trace: DensityMatrixTrace) -> DensityMatrixTrace:
    dev = trace.trace_deviation()
    if dev > 1e-8:
        raise IntegrationError(f"trace conservation degraded to {dev:.3e} (limit 1e-8)")
    herm = trace.hermiticity_defect()
    if herm > 1e-10:
        raise IntegrationError(f"hermiticity degraded to {herm:.3e} (limit 1e-10)")
    return trace


def _commutator_applier(h: np.ndarray):
    """[H, rho] evaluator; O(N^2) when H is tridiagonal, dense fallback otherwise."""
    h = np.asarray(h)
    n = h.shape[0]
    d = np.diag(h).astype(complex)
    e = np.diag(h, 1).astype(complex)
    banded = np.abs(h - np.diag(np.diag(h)) - np.diag(np.diag(h, 1), 1)
                    - np.diag(np.diag(h, -1), -1)).max() == 0
    symmetric = np.abs(np.diag(h, 1) - np.diag(h, -1)).max() == 0 if n > 1 else True
    if banded and symmetric:
        def commutator(rho):
            hr = d[:, None] * rho
            hr[:-1] += e[:, None] * rho[1:]
            hr[1:] += e[:, None] * rho[:-1]
            rh = rho * d[None, :]
            rh[:, :-1] += rho[:, 1:] * e[None, :]
            rh[:, 1:] += rho[:, :-1] * e[None, :]
            return hr - rh
        return commutator
    hc = h.astype(complex)
    return lambda rho: hc @ rho - rho @ hc


def lindblad_propagate(h: np.ndarray, params: HsrParams, rho0: np.ndarray,
                       times: np.ndarray, rtol: float = 1e-9, atol: float = 1e-9,
                       method: str = "DOP853") -> DensityMatrixTrace:
    """Integrate rho_dot = -i[H, rho] - gamma * rho_hollow with adaptive stepping."""
    times = np.asarray(times, dtype=float)
    n = h.shape[0]
    rho0 = _validate_rho0(rho0, n)
    gamma = params.gamma
    commutator = _commutator_applier(h)
    idx = np.arange(n)

    def rhs(_t, y):
        rho = y.reshape(n, n)
        drho = -1j * commutator(rho)
        if gamma:
            drho -= gamma * rho
            drho[idx, idx] += gamma * rho[idx, idx]
        return drho.ravel()

    sol = solve_ivp(rhs, (times[0], times[-1]), rho0.ravel(), t_eval=times,
                    method=method, rtol=rtol, atol=atol, dense_output=False)
    if not sol.success:
        raise IntegrationError(f"solve_ivp failed: {sol.message}")
    matrices = np.ascontiguousarray(sol.y.T.reshape(-1, n, n))
    return _validate_trace(DensityMatrixTrace(times=times, matrices=matrices))


def superoperator_propagate(h: np.ndarray, params: HsrParams, rho0: np.ndarray,
                            times: np.ndarray) -> DensityMatrixTrace:
    """Exact propagation through the dense N^2 x N^2 Liouvillian; test oracle for N <= 8."""
    n = h.shape[0]
    if n > SUPEROPERATOR_MAX_SITES:
        raise ValueError(f"superoperator path limited to N <= {SUPEROPERATOR_MAX_SITES}")
    times = np.asarray(times, dtype=float)
    rho0 = _validate_rho0(rho0, n)
    liou = _liouvillian(h.astype(complex), params.gamma)
    w, v = np.linalg.eig(liou)
    c = np.linalg.solve(v, rho0.ravel())
    vec_t = (np.exp(np.outer(times, w)) * c) @ v.T
    matrices = vec_t.reshape(-1, n, n)
    return _validate_trace(DensityMatrixTrace(times=times, matrices=matrices))


def _liouvillian(h: np.ndarray, gamma: float) -> np.ndarray:
    # row-major vec: vec(A rho B) = (A kron B^T) vec(rho)
    n = h.shape[0]
    eye = np.eye(n)
    liou = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    if gamma:
        hollow_mask = 1.0 - np.eye(n)
        liou -= gamma * np.diag(hollow_mask.ravel())
    return liou


def diffusivity_from_rho(trace: DensityMatrixTrace, h: np.ndarray,
                         params: HsrParams | None = None,
                         origin: int | None = None) -> DiffusivityTrace:
    """Open-system D(t) = (1/2) d/dt var(n), with rho_dot inserted analytically.

    The dephasing term is traceless against site-diagonal observables, so only
    the commutator contributes to the moment derivatives.
    """
    rho = trace.matrices
    n = rho.shape[1]
    pops = trace.populations()
    if origin is None:
        origin = int(np.argmax(pops[0]))
    m = np.arange(n, dtype=float) - origin
    hc = np.asarray(h, dtype=complex)
    # diag(rho_dot) = -i diag(H rho - rho H)
    pdot = (-1j * (np.einsum("ik,tki->ti", hc, rho)
                   - np.einsum("tik,ki->ti", rho, hc))).real
    mean_m = pops @ m
    msd = pops @ m**2 - mean_m**2
    d_values = 0.5 * (pdot @ m**2) - mean_m * (pdot @ m)
    return DiffusivityTrace(times=trace.times, d_values=d_values, msd=msd)


def kappa_tensor(es: Eigensystem) -> KappaTensor:
    """Overlap tensor of eigenstate probability densities."""
    u2 = es.eigenvectors**2
    return KappaTensor(diagonal_block=u2 @ u2.T, eigenvectors=es.eigenvectors)


def eigenbasis_propagate(es: Eigensystem, params: HsrParams, rho0_eigen: np.ndarray,
                         times: np.ndarray, rtol: float = 1e-9, atol: float = 1e-9,
                         method: str = "DOP853") -> DensityMatrixTrace:
    """Integrate the eigenbasis equations of motion.

    The four-index coupling contraction is evaluated as a round trip through the
    site basis (transform, take the diagonal, transform back), which is
    algebraically identical to the explicit tensor sum but O(N^3).
    """
    times = np.asarray(times, dtype=float)
    u = es.eigenvectors
    n = es.n_sites
    rho0_eigen = _validate_rho0(rho0_eigen, n)
    omega = es.eigenvalues[:, None] - es.eigenvalues[None, :]
    gamma = params.gamma

    def rhs(_t, y):
        rho = y.reshape(n, n)
        drho = -1j * omega * rho
        if gamma:
            site_pops = np.einsum("km,kl,lm->m", u, rho, u, optimize=True)
            drho += gamma * ((u * site_pops) @ u.T - rho)
        return drho.ravel()

    sol = solve_ivp(rhs, (times[0], times[-1]), rho0_eigen.ravel(), t_eval=times,
                    method=method, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"solve_ivp failed: {sol.message}")
    matrices = np.ascontiguousarray(sol.y.T.reshape(-1, n, n))
    return _validate_trace(DensityMatrixTrace(times=times, matrices=matrices))


def secular_rate_matrix(es: Eigensystem, params: HsrParams) -> np.ndarray:
    """Generator gamma (K - I) of the eigenstate population rate equation;
    the hopping rate from eigenstate i to j is gamma K_ij."""
    kappa = kappa_tensor(es)
    n = es.n_sites
    return params.gamma * (kappa.diagonal_block - np.eye(n))


def secular_propagate(es: Eigensystem, params: HsrParams, pop0: np.ndarray,
                      times: np.ndarray) -> PopulationTrace:
    """Solve the secular rate equation exactly via eigendecomposition of the
    symmetric rate matrix; populations remain in [0, 1] and conserve total."""
    times = np.asarray(times, dtype=float)
    pop0 = np.asarray(pop0, dtype=float)
    if np.any(pop0 < 0):
        raise ValueError("initial eigenstate populations must be nonnegative")
    if abs(pop0.sum() - 1.0) > 1e-8:
        raise ValueError("initial eigenstate populations must sum to 1")
    rate = secular_rate_matrix(es, params)
    w, v = np.linalg.eigh(rate)
    coeff = v.T @ pop0
    pops = (np.exp(np.outer(times, w)) * coeff) @ v.T
    low = pops.min()
    if low < -1e-8:
        raise FloatingPointError(f"secular populations dipped to {low:.3e}")
    return PopulationTrace(times=times, populations=np.clip(pops, 0.0, None))


def secular_site_populations(es: Eigensystem, pops: PopulationTrace) -> np.ndarray:
    """P(n,t) = sum_i |U_in|^2 p_i(t)."""
    return pops.populations @ es.eigenvectors**2


def secular_diffusivity(es: Eigensystem, params: HsrParams, pop0: np.ndarray,
                        times: np.ndarray, origin: int | None = None) -> DiffusivityTrace:
    """D(t) from the secular rate dynamics, with d/dt inserted analytically."""
    trace = secular_propagate(es, params, pop0, times)
    u2 = es.eigenvectors**2
    rate = secular_rate_matrix(es, params)
    site_p = trace.populations @ u2
    site_pdot = (trace.populations @ rate) @ u2    # rate is symmetric
    if origin is None:
        origin = int(np.argmax(site_p[0]))
    m = np.arange(es.n_sites, dtype=float) - origin
    mean_m = site_p @ m
    msd = site_p @ m**2 - mean_m**2
    d_values = 0.5 * (site_pdot @ m**2) - mean_m * (site_pdot @ m)
    return DiffusivityTrace(times=times, d_values=d_values, msd=msd)


def hsr_dimer_asymptotic(coupling: float, sigma: float, gamma: float,
                         t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Asymptotic dephasing-dimer diffusivity: slowly decaying baseline plus a
    damped oscillation; returns (total, baseline, oscillation)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("asymptotic form needs t > 0")
    absj = abs(coupling)
    j2 = coupling**2
    baseline = absj / (2.0 * sigma) * np.sqrt(gamma / t) - j2 * gamma / sigma**2
    phase = 2.0 * absj * t - 0.5 * np.arctan2(-2.0 * absj, gamma)
    envelope = (np.sqrt(2.0) * j2 * np.exp(-gamma * t / 2.0)
                / (sigma * np.sqrt(t) * (gamma**2 + 4.0 * j2) ** 0.25))
    oscillation = envelope * np.sin(phase)
    if gamma == 0:
        baseline = np.zeros_like(t)
    return baseline + oscillation, baseline, oscillation


def hsr_dimer_exact(coupling: float, sigma: float, gamma: float, t,
                    tol: float = 1e-9, method: str = "auto") -> np.ndarray:
    """Disorder-averaged diffusivity of the dephasing dimer: exact Lindblad
    propagation of every two-site system (via its 4x4 Liouvillian) averaged
    over the Gaussian detuning by adaptive quadrature."""

    def rate_block(eps, tt):
        eps = np.asarray(eps, dtype=float).ravel()
        tt = np.asarray(tt, dtype=float).ravel()
        nb = eps.size
        ham = np.zeros((nb, 2, 2), dtype=complex)
        ham[:, 0, 0] = 0.5 * eps
        ham[:, 1, 1] = -0.5 * eps
        ham[:, 0, 1] = ham[:, 1, 0] = coupling
        eye = np.eye(2)
        liou = -1j * (np.einsum("bij,kl->bikjl", ham, eye)
                      - np.einsum("ij,bkl->bikjl", eye, ham.transpose(0, 2, 1))
                      ).reshape(nb, 4, 4)
        if gamma:
            liou[:, 1, 1] -= gamma
            liou[:, 2, 2] -= gamma
        w, v = np.linalg.eig(liou)
        y0 = np.zeros((nb, 4, 1), dtype=complex)
        y0[:, 0, 0] = 1.0
        c = np.linalg.solve(v, y0)[..., 0]
        out = np.empty((nb, tt.size))
        row01 = v[:, 1, :] * c                                  # -> rho_01 component
        for start in range(0, tt.size, 512):
            sl = slice(start, min(start + 512, tt.size))
            phases = np.exp(w[:, None, :] * tt[None, sl, None])  # (nb, Ts, 4)
            out[:, sl] = 2.0 * coupling * np.einsum(
                "nk,ntk->nt", row01, phases).imag
        return out

    return detuning_average(rate_block, sigma, coupling, t, tol=tol, method=method)
