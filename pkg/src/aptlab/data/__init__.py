from src.aptlab.data.io import read_dataset, write_dataset
from src.aptlab.data.stream import AccessAudit, TaskStream, TaskView, split_stream
from src.aptlab.data.synth import (
    Dataset,
    SynthSpec,
    generate,
    make_template,
    nearest_template_accuracy,
    templates,
)

__all__ = [
    "AccessAudit", "Dataset", "SynthSpec", "TaskStream", "TaskView", "generate",
    "make_template", "nearest_template_accuracy", "read_dataset",
    "split_stream", "templates", "write_dataset",
]
