"""Continuous-time Feynman-Kac particle systems with genealogies, their frozen-line
duals, the particle Gibbs-Glauber chain, and an exact finite-state oracle."""

from .catalog import ModelBundle, ModelSpecError, list_builtin_models, load_model, m2
from .conditional import DualSystem, dual_generator_identity_check, dual_weight, simulate_conditional
from .errors import (
    DegenerateSemigroupError,
    DomainError,
    FkpathError,
    FunctionalError,
    ModelConsistencyError,
    ModelEvaluationError,
    NumericError,
)
from .estimators import (
    DualityReport,
    MonteCarloEstimate,
    bias_sweep,
    default_duality_battery,
    duality_check,
    estimate_gamma,
    jarzynski_experiment,
)
from .gibbs import (
    gibbs_chain,
    gibbs_step,
    integrated_autocorrelation_time,
    reversibility_check,
    symmetry_gap,
)
from .mean_field import (
    GenealogySystem,
    many_body_weight,
    occupation_measure,
    sample_ancestral_line,
    simulate_mean_field,
)
from .models import (
    FiniteCtmcModel,
    InitialLaw,
    StateSpace,
    TorusDiffusionModel,
    check_h0_doeblin,
    check_h2_q,
    potential,
    sample_free_motion,
)
from .oracle import OracleSolution, free_energy_identity_check, semigroup_matrix, smoothing_integral, solve_gamma
from .paths import CadlagPath, Indicator, JumpCount, StateAt, Terminal, TimeIntegral, integrate_potential, splice_adopt

__version__ = "0.1.0"
