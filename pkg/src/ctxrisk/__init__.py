"""Context-dependent risk preference mixtures: simulation and recovery.

Agents choose between two insurance-style options in two decision contexts,
evaluated in isolation. Some always rank options by CARA expected utility,
some always by a loading-distorted actuarial value, and the rest switch
families with the context. The package computes exact bundle-choice
probabilities for such populations (optionally under limited attention),
simulates datasets, and recovers the type weights, index distributions, and
the switchers' dependence structure from price variation alone.
"""

from .choice import (
    Bundle,
    BundleDistribution,
    Scenario,
    bundle_distribution,
    draw_choices,
    prob_11_limited,
    prob_11_three_type,
    prob_11_two_type,
    region_classify,
)
from .identify import (
    GapEstimate,
    IdentificationResult,
    KinkOptions,
    MatchedPricePair,
    SideRecovery,
    kink_gap,
    match_prices_matched,
    match_prices_matched_dual,
    match_prices_ordered,
    recover_side,
    run_identification,
)
from .population import (
    ConsiderationMeasure,
    Copula,
    MarginalDist,
    MixtureSpec,
)
from .preferences import (
    ContextMenu,
    PricePair,
    ThresholdSystem,
    check_single_crossing,
    dual_cutoff,
    eu_cutoff,
    invert_cutoff,
)

__version__ = "0.1.0"

__all__ = [
    "Bundle",
    "BundleDistribution",
    "ConsiderationMeasure",
    "ContextMenu",
    "Copula",
    "GapEstimate",
    "IdentificationResult",
    "KinkOptions",
    "MarginalDist",
    "MatchedPricePair",
    "MixtureSpec",
    "PricePair",
    "Scenario",
    "SideRecovery",
    "ThresholdSystem",
    "__version__",
    "bundle_distribution",
    "check_single_crossing",
    "draw_choices",
    "dual_cutoff",
    "eu_cutoff",
    "invert_cutoff",
    "kink_gap",
    "match_prices_matched",
    "match_prices_matched_dual",
    "match_prices_ordered",
    "prob_11_limited",
    "prob_11_three_type",
    "prob_11_two_type",
    "recover_side",
    "region_classify",
    "run_identification",
]
