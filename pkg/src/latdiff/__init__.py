"""Transport in strongly disordered 1D quantum lattices.

Closed-system spectral dynamics, pure-dephasing (Lindblad) dynamics, the
random dimer model's analytic diffusivity, and deterministic disorder
ensembles, with a CLI that emits CSV data for the plotting layer.
"""

from .closed import (
    DiffusivityTrace,
    InitialState,
    PopulationTrace,
    diffusivity,
    make_initial_state,
    propagate_populations,
    stationary_width,
    time_averaged_distribution,
)
from .dimer import (
    DimerParams,
    dimer_diffusivity_asymptotic,
    dimer_diffusivity_exact,
    dimer_population,
    turnover_diffusivity,
    turnover_time,
)
from .ensemble import EnsembleConfig, EnsembleStats, run_ensemble, sweep
from .hsr import (
    DensityMatrixTrace,
    HsrParams,
    KappaTensor,
    diffusivity_from_rho,
    eigenbasis_propagate,
    hsr_dimer_asymptotic,
    hsr_dimer_exact,
    kappa_tensor,
    lindblad_propagate,
    secular_diffusivity,
    secular_propagate,
    superoperator_propagate,
)
from .lattice import (
    DisorderRealization,
    Eigensystem,
    LatticeSpec,
    WidthHistogram,
    build_hamiltonian,
    diagonalize,
    eigenstate_widths,
    sample_disorder,
    width_histogram,
)

__all__ = [name for name in dir() if not name.startswith("_")]
