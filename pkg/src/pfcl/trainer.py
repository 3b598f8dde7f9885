"""Continual training loops.

Methods:

* ``ft``      fine-tuning lower bound: plain cross-entropy per task.
* ``jt``      joint-training upper bound: one run over the pooled tasks.
* ``kd_only`` cross-entropy plus distillation against the previous task's
              frozen snapshot, on current-task rows only.
* ``pfcl``    distillation on a concatenated batch of current and
              auxiliary rows, keeping only the top-k rows by L1 logit
              discrepancy between new and old model.
* ``er``      experience replay from a reservoir-sampled buffer, joint
              cross-entropy on current plus replayed rows.

Each task ends with a model snapshot that becomes the next task's frozen
old model; distillation is dropped for the last few mini-batches of each
task so the classifier converges cleanly on the new classes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError
from .evaluation import EvalMatrix, evaluate_all
from .linalg import Matrix, Rng, spawn_rngs
from .losses import Hyperparams, combined_loss, cross_entropy
from .nn import MlpModel, backward, forward, sgd_step, snapshot
from .selection import l1_discrepancy, select_top_k
from .tasks import AuxiliaryPool, AuxiliarySampler, Dataset, Task, TaskStream, concat_datasets

logger = logging.getLogger(__name__)

METHODS = ("pfcl", "kd_only", "ft", "jt", "er")

# callback(task_index, epoch, batch_index, kd_active, rows) used by tests
BatchHook = Callable[[int, int, int, bool, int], None]


@dataclass
class TrainConfig:
    epochs_per_task: int = 20
    batch_n: int = 32
    lr: float = 0.03
    lr_drop_epochs: frozenset = frozenset()
    hp: Hyperparams = field(default_factory=Hyperparams)
    k_select: Optional[int] = None  # None means batch_n
    kd_stop_last_batches: int = 5
    method: str = "pfcl"
    er_buffer: int = 0
    seed: int = 0
    hidden_dims: tuple = (100, 100)
    regularize_all_current: bool = False

    def __post_init__(self):
        self.lr_drop_epochs = frozenset(int(e) for e in self.lr_drop_epochs)
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; valid: {', '.join(METHODS)}")
        if self.epochs_per_task < 0:
            raise ConfigError(f"epochs_per_task must be >= 0, got {self.epochs_per_task}")
        if self.batch_n < 1:
            raise ConfigError(f"batch_n must be >= 1, got {self.batch_n}")
        if not (self.lr > 0.0):
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.kd_stop_last_batches < 0:
            raise ConfigError("kd_stop_last_batches must be >= 0")
        if self.k_select is not None and not (1 <= self.k_select <= 2 * self.batch_n):
            raise ConfigError(
                f"k_select must lie in [1, {2 * self.batch_n}], got {self.k_select}"
            )
        if self.method == "er" and self.er_buffer < 1:
            raise ConfigError("method 'er' needs er_buffer >= 1")
        if not all(h >= 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden dims must be >= 1, got {self.hidden_dims}")

    @property
    def resolved_k(self) -> int:
        return self.batch_n if self.k_select is None else self.k_select


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Base rate divided by 10 once for each drop epoch <= epoch."""
    drops = sum(1 for d in cfg.lr_drop_epochs if d <= epoch)
    return cfg.lr / (10.0 ** drops)


@dataclass
class MemoryBuffer:
    """Bounded (x, y) store fed by reservoir sampling."""

    capacity: int
    xs: list = field(default_factory=list)
    ys: list = field(default_factory=list)
    seen: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigError(f"buffer capacity must be >= 1, got {self.capacity}")

    def __len__(self) -> int:
        return len(self.xs)


def reservoir_update(buffer: MemoryBuffer, x_row: Matrix, y: int, rng: Rng) -> None:
    """Classic reservoir step: item i lands in the buffer with probability
    capacity / i, replacing a uniformly random slot."""
    buffer.seen += 1
    if len(buffer.xs) < buffer.capacity:
        buffer.xs.append(np.array(x_row, copy=True))
        buffer.ys.append(int(y))
        return
    slot = int(rng.integers(0, buffer.seen))
    if slot < buffer.capacity:
        buffer.xs[slot] = np.array(x_row, copy=True)
        buffer.ys[slot] = int(y)


def _epoch_batches(n: int, batch_n: int, rng: Rng) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[s:s + batch_n] for s in range(0, n, batch_n)]


def _log_epoch(task_i: int, epoch: int, losses: list[float], lr: float) -> None:
    mean = float(np.mean(losses)) if losses else float("nan")
    logger.info("task=%d epoch=%d mean_loss=%.6f lr=%g", task_i, epoch, mean, lr)


def train_first_task(model: MlpModel, task: Task, cfg: TrainConfig,
                     rng: Optional[Rng] = None, task_index: int = 0) -> MlpModel:
    """Plain cross-entropy SGD over one task (no old model involved)."""
    data = task.train
    if data.n == 0:
        raise DomainError("task has no training data")
    if rng is None:
        rng = spawn_rngs(cfg.seed, 4)[1]
    for epoch in range(cfg.epochs_per_task):
        lr = lr_at(epoch, cfg)
        losses = []
        for idx in _epoch_batches(data.n, cfg.batch_n, rng):
            z, cache = forward(model, data.x[idx])
            out = cross_entropy(z, data.y[idx])
            sgd_step(model, backward(model, cache, out.dlogits_new), lr)
            losses.append(out.value)
        _log_epoch(task_index, epoch, losses, lr)
    return model


def train_task_kd_only(model: MlpModel, old_model: MlpModel, task: Task,
                       cfg: TrainConfig, rng: Optional[Rng] = None,
                       task_index: int = 0, on_batch: Optional[BatchHook] = None) -> MlpModel:
    """Cross-entropy plus distillation against the frozen old model,
    computed over all current-task rows (no auxiliary data, no selection).

    The distillation term is dropped for the final ``kd_stop_last_batches``
    mini-batches of the task's last epoch.
    """
    data = task.train
    if data.n == 0:
        raise DomainError("task has no training data")
    if rng is None:
        rng = spawn_rngs(cfg.seed, 4)[1]
    for epoch in range(cfg.epochs_per_task):
        lr = lr_at(epoch, cfg)
        batches = _epoch_batches(data.n, cfg.batch_n, rng)
        losses = []
        for bi, idx in enumerate(batches):
            kd_active = _kd_active(epoch, bi, cfg, len(batches))
            xb, yb = data.x[idx], data.y[idx]
            z_new, cache = forward(model, xb)
            if kd_active:
                z_old, _ = forward(old_model, xb)
                out = combined_loss(z_new, z_old, yb, z_new, z_old, cfg.hp,
                                    sel_rows=range(len(idx)), total_rows=len(idx))
            else:
                out = cross_entropy(z_new, yb)
            sgd_step(model, backward(model, cache, out.dlogits_new), lr)
            losses.append(out.value)
            if on_batch is not None:
                on_batch(task_index, epoch, bi, kd_active, len(idx))
        _log_epoch(task_index, epoch, losses, lr)
    return model


def train_task_pfcl(model: MlpModel, old_model: MlpModel, task: Task,
                    aux: AuxiliarySampler, cfg: TrainConfig,
                    rng: Optional[Rng] = None, task_index: int = 0,
                    on_batch: Optional[BatchHook] = None) -> MlpModel:
    """One task of distillation-regularized training with auxiliary data.

    Per mini-batch: draw N labeled and N auxiliary rows, push the
    concatenated batch through both models, rank all rows by L1 logit
    discrepancy, and regularize only the top ``cfg.resolved_k`` rows. The
    labeled rows always carry the classification loss; the old model is
    never touched.
    """
    data = task.train
    if data.n == 0:
        raise DomainError("task has no training data")
    if aux is None:
        raise DomainError("pfcl training needs an auxiliary pool")
    if rng is None:
        rng = spawn_rngs(cfg.seed, 4)[1]
    for epoch in range(cfg.epochs_per_task):
        lr = lr_at(epoch, cfg)
        batches = _epoch_batches(data.n, cfg.batch_n, rng)
        losses = []
        for bi, idx in enumerate(batches):
            kd_active = _kd_active(epoch, bi, cfg, len(batches))
            nb = len(idx)
            xb, yb = data.x[idx], data.y[idx]
            x_aux = aux.next_batch(nb)
            x_cat = np.vstack([xb, x_aux])
            z_new, cache = forward(model, x_cat)
            if kd_active:
                z_old, _ = forward(old_model, x_cat)
                sel = select_top_k(l1_discrepancy(z_new, z_old),
                                   min(cfg.resolved_k, 2 * nb))
                if cfg.regularize_all_current:
                    sel = sorted(set(sel) | set(range(nb)))
                out = combined_loss(z_new[:nb], z_old[:nb], yb,
                                    z_new[sel], z_old[sel], cfg.hp,
                                    sel_rows=sel, total_rows=2 * nb)
            else:
                out = combined_loss(z_new[:nb], None, yb, None, None, cfg.hp,
                                    total_rows=2 * nb)
            sgd_step(model, backward(model, cache, out.dlogits_new), lr)
            losses.append(out.value)
            if on_batch is not None:
                on_batch(task_index, epoch, bi, kd_active, 2 * nb)
        _log_epoch(task_index, epoch, losses, lr)
    return model


def _kd_active(epoch: int, batch_index: int, cfg: TrainConfig, n_batches: int) -> bool:
    if epoch != cfg.epochs_per_task - 1:
        return True
    return batch_index < n_batches - cfg.kd_stop_last_batches


def _train_er_task(model: MlpModel, task: Task, buffer: MemoryBuffer,
                   cfg: TrainConfig, rng: Rng, rng_buffer: Rng,
                   task_index: int) -> MlpModel:
    """Cross-entropy over the current batch joined with up to batch_n
    replayed rows; the buffer is refreshed from this task at its end."""
    data = task.train
    if data.n == 0:
        raise DomainError("task has no training data")
    for epoch in range(cfg.epochs_per_task):
        lr = lr_at(epoch, cfg)
        losses = []
        for idx in _epoch_batches(data.n, cfg.batch_n, rng):
            xb, yb = data.x[idx], data.y[idx]
            if len(buffer) > 0:
                replace = len(buffer) < cfg.batch_n
                picks = rng_buffer.choice(len(buffer), size=cfg.batch_n, replace=replace)
                xb = np.vstack([xb, np.array([buffer.xs[i] for i in picks])])
                yb = np.concatenate([yb, np.array([buffer.ys[i] for i in picks], dtype=np.intp)])
            z, cache = forward(model, xb)
            out = cross_entropy(z, yb)
            sgd_step(model, backward(model, cache, out.dlogits_new), lr)
            losses.append(out.value)
        _log_epoch(task_index, epoch, losses, lr)
    for i in range(data.n):
        reservoir_update(buffer, data.x[i], int(data.y[i]), rng_buffer)
    return model


@dataclass
class RunResult:
    """Accuracy matrices per protocol plus the final model."""

    matrices: dict
    model: MlpModel


def primary_protocol(stream: TaskStream) -> str:
    return "class_il" if stream.scenario == "class_il" else "domain_il"


def run_continual(stream: TaskStream, aux: Optional[AuxiliaryPool],
                  cfg: TrainConfig) -> tuple[EvalMatrix, MlpModel]:
    """Train through the stream and record the T x T accuracy matrix for
    the stream's own scenario (class_il or domain_il)."""
    result = run_continual_full(stream, aux, cfg)
    return result.matrices[primary_protocol(stream)], result.model


def run_continual_full(stream: TaskStream, aux: Optional[AuxiliaryPool],
                       cfg: TrainConfig, on_batch: Optional[BatchHook] = None) -> RunResult:
    """As ``run_continual`` but, on class_il streams, also fills the
    task_il matrix from the same trained models.

    Joint training ignores the sequence: it trains once on the pooled
    training sets and fills only the last matrix row.
    """
    if len(stream) == 0:
        raise DomainError("task stream is empty")
    if cfg.method == "pfcl":
        if aux is None or aux.n == 0:
            raise DomainError("pfcl needs a non-empty auxiliary pool")
        if aux.dim != stream.tasks[0].train.dim:
            raise DomainError(
                f"auxiliary dim {aux.dim} != stream dim {stream.tasks[0].train.dim}"
            )

    rng_init, rng_batches, rng_aux, rng_buffer = spawn_rngs(cfg.seed, 4)
    dims = (stream.tasks[0].train.dim, *cfg.hidden_dims, stream.total_classes)
    model = MlpModel.init(dims, rng_init)

    t_count = len(stream)
    protocols = [primary_protocol(stream)]
    if stream.scenario == "class_il":
        protocols.append("task_il")
    mats = {p: np.zeros((t_count, t_count)) for p in protocols}

    if cfg.method == "jt":
        pooled = concat_datasets([t.train for t in stream.tasks])
        joint = Task(train=pooled, test=stream.tasks[-1].test,
                     class_subset=frozenset(range(stream.total_classes)))
        train_first_task(model, joint, cfg, rng_batches, task_index=t_count - 1)
        for p in protocols:
            mats[p][t_count - 1] = evaluate_all(model, stream, p)
        return RunResult(matrices={p: EvalMatrix(a=m) for p, m in mats.items()}, model=model)

    sampler = AuxiliarySampler(aux, rng_aux) if cfg.method == "pfcl" else None
    buffer = MemoryBuffer(capacity=cfg.er_buffer) if cfg.method == "er" else None
    old_model: Optional[MlpModel] = None

    for ti, task in enumerate(stream.tasks):
        if cfg.method == "ft" or (old_model is None and cfg.method in ("pfcl", "kd_only")):
            train_first_task(model, task, cfg, rng_batches, task_index=ti)
        elif cfg.method == "pfcl":
            train_task_pfcl(model, old_model, task, sampler, cfg, rng_batches,
                            task_index=ti, on_batch=on_batch)
        elif cfg.method == "kd_only":
            train_task_kd_only(model, old_model, task, cfg, rng_batches,
                               task_index=ti, on_batch=on_batch)
        elif cfg.method == "er":
            _train_er_task(model, task, buffer, cfg, rng_batches, rng_buffer,
                           task_index=ti)
        if cfg.method in ("pfcl", "kd_only"):
            old_model = snapshot(model)
        for p in protocols:
            mats[p][ti] = evaluate_all(model, stream, p)

    return RunResult(matrices={p: EvalMatrix(a=m) for p, m in mats.items()}, model=model)
