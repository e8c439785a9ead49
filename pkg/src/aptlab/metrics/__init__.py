from src.aptlab.metrics.cil import EvalMatrix, avg_accuracy, forgetting
from src.aptlab.metrics.flops import (
    FlopsReport,
    MethodKind,
    MethodSpec,
    ParamReport,
    block_macs,
    count_trainable_params,
    empirical_macs,
    flops_csv,
    flops_forward,
    flops_table,
    method_spec_for,
    RUN_METHODS,
)

__all__ = [
    "EvalMatrix", "FlopsReport", "MethodKind", "MethodSpec", "ParamReport",
    "avg_accuracy", "block_macs", "count_trainable_params", "empirical_macs",
    "RUN_METHODS", "flops_csv", "flops_forward", "flops_table", "forgetting",
    "method_spec_for",
]
