"""Stratified parameter-efficient fine-tuning on a minimal autodiff encoder."""

from .errors import (
    CheckpointError,
    CompatibilityError,
    GraphError,
    InputError,
    ManifestError,
    OptimizerError,
    PlanError,
    ShapeError,
    SpafitError,
    TaskSpecError,
    TrainingDivergedError,
)
from .model import (
    LoraPair,
    ModelConfig,
    ParamStatus,
    ParamStore,
    build_model,
    encoder_layer_forward,
    model_forward,
    param_shapes,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .plan import (
    FinetunePlan,
    Group3Mode,
    PlanKind,
    PlanSpec,
    attach_lora,
    closed_form_count,
    compile_plan,
    count_trainable,
    export_adapter,
    lora_delta,
    merge_lora,
    parse_plan_spec,
    swap_adapter,
)
from .optim import AdamW, TrainConfig
from .metrics import accuracy, f1_binary, matthews_corr, pearson_corr
from .tasks import DatasetRecord, TaskSpec, generate_task, load_dataset, save_dataset
from .harness import ComparisonTable, RunResult, compare_configs, evaluate, train_run
from .tensor import Tensor, backward

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "CheckpointError",
    "CompatibilityError",
    "ComparisonTable",
    "DatasetRecord",
    "FinetunePlan",
    "GraphError",
    "Group3Mode",
    "InputError",
    "LoraPair",
    "ManifestError",
    "ModelConfig",
    "OptimizerError",
    "ParamStatus",
    "ParamStore",
    "PlanError",
    "PlanKind",
    "PlanSpec",
    "RunResult",
    "ShapeError",
    "SpafitError",
    "TaskSpec",
    "TaskSpecError",
    "Tensor",
    "TrainConfig",
    "TrainingDivergedError",
    "accuracy",
    "attach_lora",
    "backward",
    "build_model",
    "closed_form_count",
    "compare_configs",
    "compile_plan",
    "count_trainable",
    "encoder_layer_forward",
    "evaluate",
    "export_adapter",
    "f1_binary",
    "generate_task",
    "load_checkpoint",
    "load_dataset",
    "lora_delta",
    "matthews_corr",
    "merge_lora",
    "model_forward",
    "param_shapes",
    "parse_plan_spec",
    "pearson_corr",
    "save_checkpoint",
    "save_dataset",
    "swap_adapter",
    "train_run",
]
