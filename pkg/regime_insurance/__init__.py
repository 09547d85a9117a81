"""Optimal consumption, investment and insurance under regime switching.

Besides the library API, the package is a Sphinx extension: add
``"regime_insurance"`` to ``extensions`` to get the ``regime-table`` and
``regime-value`` directives.
"""

from sphinx.application import Sphinx
from sphinx.util import logging

from ._version import __version__
from .chain import GeneratorMatrix, RegimePath, sample_regime_path, stationary_distribution
from .config import dump_config, load_config, save_config
from .errors import RegimeInsuranceError, SolverError, ValidationError
from .market import LossModel, MarketModel, RegimeParams, UtilitySpec, parameter_set
from .policy import PolicyBundle, ValueFunction, WealthState, policy_at, policy_bundle
from .simulate import SimulationConfig, analytic_value, estimate_value
from .solvers import CoefficientSet, hjb_residual, solve

logger = logging.getLogger(__name__)

__all__ = [
    "CoefficientSet",
    "GeneratorMatrix",
    "LossModel",
    "MarketModel",
    "PolicyBundle",
    "RegimeInsuranceError",
    "RegimeParams",
    "RegimePath",
    "SimulationConfig",
    "SolverError",
    "UtilitySpec",
    "ValidationError",
    "ValueFunction",
    "WealthState",
    "__version__",
    "analytic_value",
    "dump_config",
    "estimate_value",
    "hjb_residual",
    "load_config",
    "parameter_set",
    "policy_at",
    "policy_bundle",
    "sample_regime_path",
    "save_config",
    "solve",
    "stationary_distribution",
]


##############################################################################
# Main setup
def setup(app: Sphinx):
    from .directives import RegimeTable, RegimeValue

    # Directive config files resolve against this directory when set,
    # otherwise against the including document.
    app.add_config_value("regime_insurance_config_dir", None, "env")
    app.add_config_value("regime_insurance_precision", 10, "env")

    app.add_directive("regime-table", RegimeTable)
    app.add_directive("regime-value", RegimeValue)

    return {"version": __version__, "parallel_read_safe": True}
