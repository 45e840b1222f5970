"""Wideband fluid-antenna lab: space-frequency channel estimation and spatial equalization."""
from .model import PathSet, SpaceFrequencyGrid, SystemConfig, draw_paths, synthesize_sfg
from .operators import Dictionary, MeasurementOperator, Observation, SamplingPlan, observe
from .recovery import dc_gomp, gomp_uniform, ls_baseline, omp, relative_error
from .leakage import LeakageParams, gamma_tau, gamma_wavenumber, lemma1_bound
from .equalization import EqualizationProblem, branch_and_bound, equal_spaced, grsip, random_baseline
from .linklevel import LinkConfig, ber_analytic, ber_monte_carlo

__version__ = "0.1.0"

__all__ = [
    "SystemConfig", "PathSet", "SpaceFrequencyGrid", "draw_paths", "synthesize_sfg",
    "Dictionary", "MeasurementOperator", "Observation", "SamplingPlan", "observe",
    "dc_gomp", "omp", "gomp_uniform", "ls_baseline", "relative_error",
    "LeakageParams", "gamma_tau", "gamma_wavenumber", "lemma1_bound",
    "EqualizationProblem", "branch_and_bound", "equal_spaced", "grsip", "random_baseline",
    "LinkConfig", "ber_analytic", "ber_monte_carlo",
]
