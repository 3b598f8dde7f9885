"""Prior-free continual learning: engine, baselines, and benchmark harness."""

from .errors import ConfigError, DomainError, FormatError, PfclError, ShapeError
from .evaluation import (
    EvalMatrix,
    accuracy,
    avg_accuracy,
    evaluate_all,
    forgetting,
    load_matrix_csv,
    save_matrix_csv,
)
from .linalg import Matrix, Rng, elementwise, init_uniform_scaled, make_rng, matmul
from .losses import Hyperparams, LossOutput, combined_loss, cross_entropy, kd_loss, soften
from .nn import (
    Gradients,
    MlpModel,
    backward,
    forward,
    load_model,
    save_model,
    sgd_step,
    snapshot,
)
from .selection import DiscrepancyScore, l1_discrepancy, select_top_k
from .tasks import (
    AuxiliaryPool,
    AuxiliarySampler,
    Dataset,
    Task,
    TaskStream,
    load_csv_dataset,
    load_csv_pool,
    load_idx,
    make_gaussian_dataset,
    make_glyph_dataset,
    make_glyph_pool,
    rotate_image,
    rotated_stream,
    sample_auxiliary,
    split_class_stream,
)
from .trainer import (
    MemoryBuffer,
    RunResult,
    TrainConfig,
    lr_at,
    reservoir_update,
    run_continual,
    run_continual_full,
    train_first_task,
    train_task_kd_only,
    train_task_pfcl,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
