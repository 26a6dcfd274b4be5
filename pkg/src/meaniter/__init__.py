"""High-precision means, residua and Gauss iteration of mean-type mappings."""

from .errors import (
    AxiomError,
    BracketError,
    ConfigError,
    ConvergenceError,
    DivisionByZero,
    DomainError,
    ExtrapolationError,
    InsufficientRatiosError,
    MeanIterError,
    ResiduumError,
)
from .precision import *  # noqa: F401,F403
from .means import *  # noqa: F401,F403
from .catalog import *  # noqa: F401,F403
from .residuum import *  # noqa: F401,F403
from .gauss import *  # noqa: F401,F403

__version__ = "0.1.0"
