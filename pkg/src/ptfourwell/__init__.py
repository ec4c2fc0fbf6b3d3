"""Hermitian four-well chain emulating balanced gain and loss.

The two outer wells of a four-well Bose-Einstein condensate act as particle
reservoirs whose couplings and on-site energies are adjusted in time by a
feedback controller.  The middle pair then follows the dynamics of an open
two-mode system with gain/loss strength gamma, exactly in the linear case
and approximately with a mean-field interaction.  A companion module maps
the chain parameters onto depths, positions and widths of Gaussian optical
traps for rubidium-87.
"""

from .four_mode import (
    ConditionResiduals,
    FourModeObservables,
    FourModeParams,
    InitialConditionViolated,
    NearSingularController,
    TrajectoryRecord,
    condition_residuals,
    run_trajectory,
)
from .prepare import (
    BrokenPhase,
    EmbeddingSpec,
    GainLossSchedule,
    NoEmbedding,
    auto_control_scale,
    embed_pt_state,
    hermitian_ground_state,
    oscillatory_middle_state,
    rescale_to_middle,
    stationary_middle_state,
)
from .two_mode import TwoModeParams, eigensystem, pt_symmetry_residual
from .cli import RunReport, ScenarioConfig, parse_config, run_scenario

__all__ = [
    "BrokenPhase",
    "ConditionResiduals",
    "EmbeddingSpec",
    "FourModeObservables",
    "FourModeParams",
    "GainLossSchedule",
    "InitialConditionViolated",
    "NearSingularController",
    "NoEmbedding",
    "RunReport",
    "ScenarioConfig",
    "TrajectoryRecord",
    "TwoModeParams",
    "auto_control_scale",
    "condition_residuals",
    "eigensystem",
    "embed_pt_state",
    "hermitian_ground_state",
    "oscillatory_middle_state",
    "parse_config",
    "pt_symmetry_residual",
    "rescale_to_middle",
    "run_scenario",
    "stationary_middle_state",
    "run_trajectory",
]

__version__ = "0.1.0"
