"""Misanthrope-class lattice gases: simulation and numerical verification."""

__version__ = "0.1.0"

from .model import (RateModel, SpinBounds, catalog, derive_r,
                    validate_conditions)
from .equilibrium import EquilibriumFamily, build_family, flux_curve
from .profiles import Profile, TrigPoly
from .burgers import (CharacteristicsSolution, shock_time,
                      solve_characteristics, solve_godunov)
from .simulate import (Configuration, ExperimentConfig, RateIndex,
                       measure_density, run_replicas, run_until,
                       sample_initial)
from .blockstats import (corollary_statistic, entropy_between_profiles,
                         kurschak_probe, theta_profile)
from .spectral import (BlockEnsemble, build_operator, canonical_expectation,
                       check_dirsum_convex, check_gappert, dirichlet,
                       enumerate_sector, sigma_bar, spectral_gap)

__all__ = [
    "RateModel", "SpinBounds", "catalog", "derive_r", "validate_conditions",
    "EquilibriumFamily", "build_family", "flux_curve",
    "Profile", "TrigPoly",
    "CharacteristicsSolution", "shock_time", "solve_characteristics",
    "solve_godunov",
    "Configuration", "ExperimentConfig", "RateIndex", "measure_density",
    "run_replicas", "run_until", "sample_initial",
    "corollary_statistic", "entropy_between_profiles", "kurschak_probe",
    "theta_profile",
    "BlockEnsemble", "build_operator", "canonical_expectation",
    "check_dirsum_convex", "check_gappert", "dirichlet", "enumerate_sector",
    "sigma_bar", "spectral_gap",
]
