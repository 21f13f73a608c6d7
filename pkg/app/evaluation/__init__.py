from .metrics import (
    average_precision,
    mean_average_precision,
    precision_recall,
    paired_t_test,
    ranking_stability,
)
from .timing import time_explainer
from .experiment import Experiment, load_dataset, split_dataset, prepare_experiment
from .protocol import ProtocolInputs, ProtocolResult, run_protocol
from .report import render_table
from .charts import render_relevance_chart

__all__ = [
    "average_precision",
    "mean_average_precision",
    "precision_recall",
    "paired_t_test",
    "ranking_stability",
    "time_explainer",
    "Experiment",
    "load_dataset",
    "split_dataset",
    "prepare_experiment",
    "ProtocolInputs",
    "ProtocolResult",
    "run_protocol",
    "render_table",
    "render_relevance_chart",
]
