"""Accuracy protocols and the two summary metrics.

The accuracy matrix a[i][t] records accuracy on task t's test set after
training through task i. The final average accuracy is the mean of the
last row; forgetting averages, over all but the last task, the drop from
each task's best earlier accuracy to its final one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ConfigError, DomainError
from .nn import MlpModel, forward
from .tasks import Dataset, TaskStream


@dataclass
class EvalMatrix:
    """T x T accuracy matrix; entries above the diagonal (t > i) are
    diagnostics from evaluating tasks not yet trained on."""

    a: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        if self.a.ndim != 2 or self.a.shape[0] != self.a.shape[1]:
            raise DomainError(f"accuracy matrix must be square, got {self.a.shape}")
        if self.a.size and (self.a.min() < -1e-12 or self.a.max() > 1 + 1e-12):
            raise DomainError("accuracies must lie in [0, 1]")

    @property
    def t_count(self) -> int:
        return self.a.shape[0]


def accuracy(model: MlpModel, test: Dataset, mask: Optional[Iterable[int]] = None) -> float:
    """Fraction of test samples whose (optionally masked) argmax matches.

    With a mask, only the listed class logits compete in the argmax; ties
    resolve to the lowest class index either way.
    """
    if test.n == 0:
        raise DomainError("cannot evaluate on an empty test set")
    logits, _ = forward(model, test.x)
    if mask is None:
        pred = logits.argmax(axis=1)
    else:
        cols = np.array(sorted(mask), dtype=np.intp)
        if cols.size == 0:
            raise DomainError("mask must contain at least one class")
        if not np.isin(test.y, cols).all():
            raise DomainError("test labels outside the evaluation mask")
        pred = cols[logits[:, cols].argmax(axis=1)]
    return float((pred == test.y).mean())


def evaluate_all(model: MlpModel, stream: TaskStream, protocol: str) -> list[float]:
    """Accuracy on every task's test set under one evaluation protocol.

    class_il and domain_il use the unmasked head; task_il masks each task's
    logits to that task's class subset (class_il streams only).
    """
    if protocol not in ("class_il", "task_il", "domain_il"):
        raise ConfigError(f"unknown protocol {protocol!r}")
    if protocol == "task_il" and stream.scenario != "class_il":
        raise ConfigError("task_il evaluation requires a class_il stream")
    if protocol in ("class_il", "domain_il") and protocol != stream.scenario:
        raise ConfigError(
            f"protocol {protocol!r} does not match stream scenario {stream.scenario!r}"
        )
    out = []
    for task in stream.tasks:
        mask = task.class_subset if protocol == "task_il" else None
        out.append(accuracy(model, task.test, mask))
    return out


def avg_accuracy(m: EvalMatrix) -> float:
    """Mean of the last row: final accuracy averaged over all tasks."""
    if m.t_count < 1:
        raise DomainError("empty accuracy matrix")
    return float(m.a[-1].mean())


def forgetting(m: EvalMatrix) -> float:
    """Average over tasks t < T of max_{i<T} a[i][t] - a[T][t].

    The maximum deliberately excludes the final row; a single-task matrix
    has no forgetting to measure.
    """
    t = m.t_count
    if t < 2:
        raise DomainError("forgetting needs at least 2 tasks")
    peak = m.a[: t - 1, : t - 1].max(axis=0)
    return float((peak - m.a[-1, : t - 1]).mean())


def save_matrix_csv(m: EvalMatrix, path) -> None:
    """Write the matrix with a header row; repr round-trips every float."""
    t = m.t_count
    lines = ["trained_through," + ",".join(f"task_{j}" for j in range(t))]
    for i in range(t):
        lines.append(str(i + 1) + "," + ",".join(repr(float(v)) for v in m.a[i]))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_matrix_csv(path) -> EvalMatrix:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
        if not header.startswith("trained_through"):
            raise DomainError(f"not an accuracy matrix file: {path}")
        rows = [list(map(float, line.strip().split(",")[1:]))
                for line in f if line.strip()]
    return EvalMatrix(a=np.array(rows))
