"""Training losses and their logit-space gradients.

Every loss returns its scalar value (mean over contributing samples)
together with the gradient with respect to the new model's logits, so the
training loop only ever backpropagates one assembled gradient matrix.

The distillation term is the soft cross-entropy -tau^2 * sum(p_old * log
p_new) on temperature-softened probabilities. Full KL divergence would add
the constant entropy of p_old; gradients are identical, so the printed
values differ from KL by that constant only. Old-model logits are always
treated as constants: no gradient flows to the frozen model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ShapeError
from .linalg import Matrix


@dataclass(frozen=True)
class Hyperparams:
    """Regularization weight and distillation temperature.

    alpha = 0 is allowed and switches the distillation term off entirely
    (used by the fine-tuning reductions); tau must be positive.
    """

    alpha: float = 0.5
    tau: float = 2.0

    def __post_init__(self):
        if not (self.alpha >= 0.0):
            raise DomainError(f"alpha must be >= 0, got {self.alpha}")
        if not (self.tau > 0.0):
            raise DomainError(f"tau must be > 0, got {self.tau}")


@dataclass
class LossOutput:
    """Scalar loss plus gradient w.r.t. the new-model logits.

    Rows of ``dlogits_new`` for samples that do not contribute to the loss
    are exactly zero.
    """

    value: float
    dlogits_new: Matrix


def _log_softmax(z: Matrix) -> Matrix:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def soften(logits: Matrix, tau: float) -> Matrix:
    """Row-wise softmax of logits / tau; rows sum to 1."""
    if not (tau > 0.0):
        raise DomainError(f"temperature must be > 0, got {tau}")
    scaled = logits / tau
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: Matrix, labels: Sequence[int]) -> LossOutput:
    """Mean negative log-likelihood of the labels under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.intp)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if n < 1:
        raise DomainError("cross entropy needs at least one sample")
    if labels.min() < 0 or labels.max() >= c:
        raise DomainError(
            f"label out of range [0, {c}): min={labels.min()}, max={labels.max()}"
        )
    log_p = _log_softmax(logits)
    value = -log_p[np.arange(n), labels].mean()
    dlogits = np.exp(log_p)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return LossOutput(value=float(value), dlogits_new=dlogits)


def kd_loss(z_new: Matrix, z_old: Matrix, tau: float) -> LossOutput:
    """Distillation loss between new and old logits.

    value = mean_i [ -tau^2 * sum_c p_old[i,c] * log p_new[i,c] ] with
    p = soften(z, tau); the gradient w.r.t. z_new is (tau / N) *
    (p_new - p_old) per row. z_old is a constant.
    """
    if z_new.shape != z_old.shape:
        raise ShapeError(f"logit shape mismatch: {z_new.shape} vs {z_old.shape}")
    n = z_new.shape[0]
    if n < 1:
        raise DomainError("distillation needs at least one sample")
    p_old = soften(z_old, tau)
    p_new = soften(z_new, tau)
    log_p_new = _log_softmax(z_new / tau)
    value = float((-(tau * tau) * (p_old * log_p_new).sum(axis=1)).mean())
    dlogits = (tau / n) * (p_new - p_old)
    return LossOutput(value=value, dlogits_new=dlogits)


def combined_loss(
    logits_new_t: Matrix,
    logits_old_t: Optional[Matrix],
    labels_t: Sequence[int],
    logits_new_sel: Optional[Matrix],
    logits_old_sel: Optional[Matrix],
    hp: Hyperparams,
    sel_rows: Optional[Sequence[int]] = None,
    total_rows: Optional[int] = None,
) -> LossOutput:
    """Classification loss on the labeled block plus weighted distillation
    on the selected block.

    value = cross_entropy(logits_new_t, labels_t)
            + alpha * kd_loss(logits_new_sel, logits_old_sel, tau)

    The gradient matrix covers ``total_rows`` rows of one concatenated
    batch: the labeled block occupies rows [0, N), the selected block the
    rows listed in ``sel_rows`` (gradients add where the blocks overlap),
    and every other row is exactly zero. Defaults place the selected block
    right after the labeled one, which matches a batch laid out as
    [current | selected]. Passing no selected logits reduces everything to
    plain cross-entropy (the first task has no old model to distill from).

    ``logits_old_t`` is accepted for call-site symmetry with the selected
    pair; the classification term does not read it.
    """
    ce = cross_entropy(logits_new_t, labels_t)
    n = logits_new_t.shape[0]
    c = logits_new_t.shape[1]

    if logits_new_sel is None or logits_old_sel is None:
        rows = total_rows if total_rows is not None else n
        if rows < n:
            raise ShapeError(f"total_rows={rows} smaller than labeled block {n}")
        dlogits = np.zeros((rows, c))
        dlogits[:n] = ce.dlogits_new
        return LossOutput(value=ce.value, dlogits_new=dlogits)

    kd = kd_loss(logits_new_sel, logits_old_sel, hp.tau)
    k = logits_new_sel.shape[0]
    if sel_rows is None:
        sel_rows = range(n, n + k)
    sel_rows = np.asarray(list(sel_rows), dtype=np.intp)
    if sel_rows.shape != (k,):
        raise ShapeError(f"sel_rows has {sel_rows.shape[0]} entries for {k} selected rows")
    rows = total_rows if total_rows is not None else max(n, int(sel_rows.max()) + 1)
    if rows < n or (k > 0 and int(sel_rows.max()) >= rows):
        raise ShapeError(f"gradient rows {rows} cannot hold both loss blocks")

    dlogits = np.zeros((rows, c))
    dlogits[:n] = ce.dlogits_new
    np.add.at(dlogits, sel_rows, hp.alpha * kd.dlogits_new)
    return LossOutput(value=ce.value + hp.alpha * kd.value, dlogits_new=dlogits)
