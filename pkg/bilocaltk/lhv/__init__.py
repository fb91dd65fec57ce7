from .models import (
    BilocalModel,
    LocalModel,
    STRATEGIES,
    enumerate_deterministic_bilocal,
    eval_bilocal,
    eval_local,
    sample_b_values,
    sample_bilocal,
    sample_local,
    two_strategy_witness,
)
from .search import (
    fit_bilocal,
    golden_section,
    maximize_b_bilocal,
    maximize_b_local,
    model_b,
    simplex_projection,
)

__all__ = [
    "BilocalModel",
    "LocalModel",
    "STRATEGIES",
    "enumerate_deterministic_bilocal",
    "eval_bilocal",
    "eval_local",
    "sample_b_values",
    "sample_bilocal",
    "sample_local",
    "two_strategy_witness",
    "fit_bilocal",
    "golden_section",
    "maximize_b_bilocal",
    "maximize_b_local",
    "model_b",
    "simplex_projection",
]
