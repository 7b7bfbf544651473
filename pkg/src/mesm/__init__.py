"""Multi-output extreme spatial modeling.

Fits generalized extreme value marginals over a continuous control
space, links outputs through a max-stable dependence model estimated by
a graph-truncated composite likelihood, and supports sampling of joint
extreme scenarios, return levels, and dependence diagnostics.
"""

from .errors import DataValidationError, MesmError, NumericalError
from .gev import BlockMaximaConfig, GevParams
from .marginal import DesignMatrix, ExtremeDataset, MarginalField
from .pipeline import FittedMesm, ToleranceSpec, fit_mesm, load_model, save_model
from .space import CliqueGraph, CriticalPointSpace
from .brownresnick import BrownResnickModel

__version__ = "0.1.0"

__all__ = [
    "BlockMaximaConfig",
    "BrownResnickModel",
    "CliqueGraph",
    "CriticalPointSpace",
    "DataValidationError",
    "DesignMatrix",
    "ExtremeDataset",
    "FittedMesm",
    "GevParams",
    "MarginalField",
    "MesmError",
    "NumericalError",
    "ToleranceSpec",
    "fit_mesm",
    "load_model",
    "save_model",
    "__version__",
]
