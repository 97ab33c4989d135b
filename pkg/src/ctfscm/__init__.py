"""Exact counterfactual reasoning over finite structural causal models.

The package evaluates observational, interventional, and counterfactual
probabilities by exhaustive enumeration with exact rational arithmetic,
computes optimal bounds on counterfactual queries from an observational
distribution plus a causal diagram, generates labeled synthetic datasets,
and checks counterfactual-editing proxies for consistency with those
bounds.
"""

__version__ = "0.1.0"

from .bounds import (  # noqa: F401
    AnalyticPatternError,
    BoundResult,
    analytic_bounds,
    optimal_bounds,
    oracle_inner_bounds,
)
from .canonical import (  # noqa: F401
    BoundsInputError,
    ObsIncompatibleError,
    UnidentifiedCFactorError,
    build_constraints,
    c_components,
    project_relevant_cells,
    response_types,
)
from .core import (  # noqa: F401
    CausalDiagram,
    EndogenousVar,
    ExogenousFactor,
    FiniteDomain,
    Scm,
    induce_diagram,
    mutilate,
    solve,
    validate,
)
from .consistency import (  # noqa: F401
    ConsistencyReport,
    SampleRecord,
    check_ctf_consistency,
    empirical_distribution,
    proxy_conditional,
    proxy_markovian,
    proxy_preserve,
)
from .datasets import (  # noqa: F401
    BuiltinModel,
    ImageGrid,
    NuisanceFactors,
    builtin_names,
    export,
    get_builtin,
    label,
    render,
    sample_labels,
)
from .dsl import DslError, ParseError, format_model, parse_model, parse_query  # noqa: F401
from .engine import (  # noqa: F401
    CtfEvent,
    CtfQuery,
    Distribution,
    ZeroConditioningError,
    compare_models,
    conditional_ctf,
    counterfactual_joint,
    feature_ctf,
    interventional,
    observational,
)
