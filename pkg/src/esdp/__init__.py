__all__ = [
    'EconomicEnvironment',
    'RewardModel',
    'Constant',
    'Exponential',
    'Lognormal',
    'Empirical',
    'Bounded',
    'MarkovOU',
    'Scenario',
    'ThresholdReport',
    'validate_scenario',
    'MomentBounds',
    'ParameterIntervals',
    'esdp',
    'GridSpec',
    'ValueGrid',
    'PolicyGrid',
    'solve',
    'EquilibriumResult',
    'equilibrium_attack_probability',
    'SimConfig',
    'ProfitEstimate',
    'CaseStudyOutput',
    'EsdpError',
    'ValidationError',
    'ParseError',
    'UnsupportedModelError',
    'StructureError',
]

import importlib.metadata

try:
    __version__ = importlib.metadata.version(__name__)
except importlib.metadata.PackageNotFoundError:
    __version__ = '0.0.0'

from .casestudies import CaseStudyOutput
from .core import (
    Bounded,
    Constant,
    EconomicEnvironment,
    Empirical,
    Exponential,
    Lognormal,
    MarkovOU,
    RewardModel,
    Scenario,
    ThresholdReport,
    validate_scenario,
)
from .equilibrium import EquilibriumResult, equilibrium_attack_probability
from .exceptions import (
    EsdpError,
    ParseError,
    StructureError,
    UnsupportedModelError,
    ValidationError,
)
from .montecarlo import ProfitEstimate, SimConfig
from .stopping import GridSpec, PolicyGrid, ValueGrid, solve
from .thresholds import MomentBounds, ParameterIntervals, esdp
