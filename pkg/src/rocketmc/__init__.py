"""Strategic verification of ballistic flight models built from telemetry.

The package turns telemetry ensembles into stochastic game models and
checks alternating-time properties on them: plain ATL on the projected
nondeterministic structure, and probabilistic ATL via strategy search and
extremal probability computation on the induced decision processes.
"""

from .formula import (
    And,
    Atom,
    Eventually,
    Globally,
    Implies,
    Next,
    Not,
    Or,
    ProbabilityBound,
    Release,
    StrategicPlain,
    StrategicProb,
    Until,
    normalize,
    parse,
    to_text,
)
from .model import (
    ICGS,
    MDP,
    Distribution,
    InvalidModelError,
    MarkovChain,
    ModelError,
    NondetCGS,
    StrategyProfile,
    enumerate_strategies,
    induce_mdp,
    load_model,
    model_from_json,
    model_to_json,
    dump_model,
    project_nondeterministic,
    strategy_count,
    validate,
)
from .atl import AtlIIResult, CheckError, UnknownAtomError, check_atl_ii, check_atl_perfect, cpre
from .patl import (
    CheckSettings,
    NextEvent,
    ProbVector,
    ReleaseEvent,
    UntilEvent,
    VerificationResult,
    check_patl,
    check_pctl,
    mdp_extremal,
)

__version__ = "0.1.0"
