"""Multi-channel distillation objective and the student training loop.

Per teacher there are two channels: a tempered-softmax KL between the logits
(student distribution written first; kd_reverse_kl flips the order) and a
contrastive alignment of the hidden representations, where the matched news
pair is scored against every other news in the batch. The contrastive
quantity is an average log-likelihood to maximize, so it enters the total
negated. Teacher outputs are constants during training; the optional
teacher-side gradients exist only for finite-difference verification of the
full objective.

All channel losses and the classification loss are computed on the training
indices only; teachers still produce outputs for every news so evaluation
stays transductive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Split
from .errors import ConfigError, NumericsError
from .metrics import accuracy, macro_f1, predict_labels
from .numcore import (
    Adam,
    KL_CLAMP,
    cross_entropy,
    cross_entropy_grad,
    restore,
    snapshot,
    softmax_rows,
    zero_grads,
)
from .student import LocalContext, StudentModel, StudentOutput
from .teachers import TeacherOutput


@dataclass
class MkdConfig:
    lam: float = 0.9        # weight of the propagation-teacher KL channel
    beta: float = 0.9       # weight of the propagation-teacher contrastive channel
    rho: float = 2.0        # softmax temperature
    use_ct: bool = True
    use_pt: bool = True
    use_sup: bool = True
    use_tar: bool = True
    use_lgpi: bool = True

    def validate(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0,1], got {self.lam}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0,1], got {self.beta}")
        if not self.rho > 0:
            raise ConfigError(f"rho must be > 0, got {self.rho}")


@dataclass
class LossBreakdown:
    cls: float = 0.0
    sup_pt: float = 0.0
    tar_pt: float = 0.0
    sup_ct: float = 0.0
    tar_ct: float = 0.0
    total: float = 0.0


def sup_loss(z_s: np.ndarray, z_t: np.ndarray, rho: float) -> float:
    loss, _, _ = sup_loss_grad(z_s, z_t, rho)
    return loss


def sup_loss_grad(z_s: np.ndarray, z_t: np.ndarray, rho: float, grad_to_teacher: bool = False):
    """Mean-over-rows KL(softmax(z_s/rho) || softmax(z_t/rho)) and gradients.

    Returns (loss, d_z_s, d_z_t); d_z_t is None unless grad_to_teacher.
    """
    if z_s.shape != z_t.shape:
        raise ValueError(f"sup_loss shape mismatch: {z_s.shape} vs {z_t.shape}")
    n = z_s.shape[0]
    p = softmax_rows(z_s, rho)
    q = softmax_rows(z_t, rho)
    qc = np.maximum(q, KL_CLAMP)
    log_ratio = np.log(np.maximum(p, 1e-300)) - np.log(qc)
    row_kl = (p * log_ratio).sum(axis=1)
    loss = float(row_kl.mean())
    d_z_s = p * (log_ratio - row_kl[:, None]) / (n * rho)
    d_z_t = None
    if grad_to_teacher:
        w = p * (q / qc)  # clamp-aware: entries at the floor stop the gradient
        d_z_t = (q * w.sum(axis=1, keepdims=True) - w) / (n * rho)
    return loss, d_z_s, d_z_t


def tar_loss(h_s: np.ndarray, h_t: np.ndarray) -> float:
    loss, _, _ = tar_loss_grad(h_s, h_t)
    return loss


def tar_loss_grad(h_s: np.ndarray, h_t: np.ndarray, grad_to_teacher: bool = False):
    """Contrastive alignment of matched rows against all other rows.

    loss = -(1/N) sum_i log( exp<h_s_i, h_t_i> / sum_j exp<h_s_i, h_t_j> ),
    computed with log-sum-exp stabilization. Returns (loss, d_h_s, d_h_t);
    d_h_t is None unless grad_to_teacher.
    """
    if h_s.shape != h_t.shape:
        raise ValueError(f"tar_loss shape mismatch: {h_s.shape} vs {h_t.shape}")
    n = h_s.shape[0]
    sim = h_s @ h_t.T
    mx = sim.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(sim - mx).sum(axis=1))
    loss = float(np.mean(lse - np.diag(sim)))
    soft = np.exp(sim - lse[:, None])
    d_h_s = (soft @ h_t - h_t) / n
    d_h_t = None
    if grad_to_teacher:
        d_h_t = (soft.T @ h_s - h_s) / n
    return loss, d_h_s, d_h_t


def _sup_value(z_s: np.ndarray, z_t: np.ndarray, rho: float) -> float:
    p = softmax_rows(z_s, rho)
    q = softmax_rows(z_t, rho)
    qc = np.maximum(q, KL_CLAMP)
    log_ratio = np.log(np.maximum(p, 1e-300)) - np.log(qc)
    return float((p * log_ratio).sum(axis=1).mean())


def _tar_value(h_s: np.ndarray, h_t: np.ndarray) -> float:
    sim = h_s @ h_t.T
    mx = sim.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(sim - mx).sum(axis=1))
    return float(np.mean(lse - np.diag(sim)))


def active_channels(mkd: MkdConfig) -> dict[str, float]:
    """Channel name -> coefficient, dropping any channel whose coefficient is
    exactly zero so disabled and zero-weighted paths are bitwise identical."""
    mkd.validate()
    coeffs = {
        "sup_pt": mkd.lam if (mkd.use_sup and mkd.use_pt) else 0.0,
        "tar_pt": mkd.beta if (mkd.use_tar and mkd.use_pt) else 0.0,
        "sup_ct": (1.0 - mkd.lam) if (mkd.use_sup and mkd.use_ct) else 0.0,
        "tar_ct": (1.0 - mkd.beta) if (mkd.use_tar and mkd.use_ct) else 0.0,
    }
    return {k: v for k, v in coeffs.items() if v != 0.0}


def mkd_total(out: StudentOutput, teacher_outs: dict[str, TeacherOutput | None],
              labels: np.ndarray, train_idx: np.ndarray, mkd: MkdConfig,
              kd_reverse_kl: bool = False, mkd_idx: np.ndarray | None = None) -> LossBreakdown:
    """Loss values only; same composition as mkd_objective without gradients."""
    if mkd_idx is None:
        mkd_idx = np.arange(out.logits.shape[0], dtype=np.int64)
    cls = cross_entropy(out.logits, labels, train_idx)
    breakdown = LossBreakdown(cls=cls, total=cls)
    z_s = out.logits[mkd_idx]
    h_s = out.h_s[mkd_idx]
    for channel, coeff in active_channels(mkd).items():
        kind, teacher = channel.split("_")
        t_out = teacher_outs.get(teacher)
        if t_out is None:
            raise ConfigError(f"{channel} channel enabled but no {teacher} teacher output provided")
        if kind == "sup":
            z_t = t_out.logits[mkd_idx]
            loss = _sup_value(z_t, z_s, mkd.rho) if kd_reverse_kl else _sup_value(z_s, z_t, mkd.rho)
        else:
            loss = _tar_value(h_s, t_out.hidden[mkd_idx])
        setattr(breakdown, channel, loss)
        breakdown.total += coeff * loss
    return breakdown


def mkd_objective(out: StudentOutput, teacher_outs: dict[str, TeacherOutput | None],
                  labels: np.ndarray, train_idx: np.ndarray, mkd: MkdConfig,
                  kd_reverse_kl: bool = False, grad_to_teachers: bool = False,
                  mkd_idx: np.ndarray | None = None):
    """Total student objective and its gradients.

    The classification loss is always masked to the training rows; the
    distillation channels run over mkd_idx, by default every row (the
    alignment sums average over the whole node set), with a train-only mask
    available for the stricter protocol.

    Returns (breakdown, d_logits, d_h_s, teacher_grads) where teacher_grads
    maps teacher name to (d_logits_t, d_hidden_t) and is empty unless
    grad_to_teachers.
    """
    if mkd_idx is None:
        mkd_idx = np.arange(out.logits.shape[0], dtype=np.int64)
    cls, d_logits = cross_entropy_grad(out.logits, labels, train_idx)
    d_h_s = np.zeros_like(out.h_s)
    breakdown = LossBreakdown(cls=cls, total=cls)
    teacher_grads: dict[str, list] = {}

    def teacher_out(name: str) -> TeacherOutput:
        t = teacher_outs.get(name)
        if t is None:
            raise ConfigError(f"{name} channel enabled but no {name} teacher output provided")
        return t

    def t_grads(name: str) -> list:
        if name not in teacher_grads:
            shape_l = out.logits.shape
            shape_h = out.h_s.shape
            teacher_grads[name] = [np.zeros(shape_l), np.zeros(shape_h)]
        return teacher_grads[name]

    z_s = out.logits[mkd_idx]
    h_s = out.h_s[mkd_idx]
    for channel, coeff in active_channels(mkd).items():
        kind, teacher = channel.split("_")
        t_out = teacher_out(teacher)
        if kind == "sup":
            z_t = t_out.logits[mkd_idx]
            if kd_reverse_kl:
                loss, d_t, d_s = sup_loss_grad(z_t, z_s, mkd.rho, grad_to_teacher=True)
            else:
                loss, d_s, d_t = sup_loss_grad(z_s, z_t, mkd.rho, grad_to_teacher=grad_to_teachers)
            d_logits[mkd_idx] += coeff * d_s
            if grad_to_teachers:
                t_grads(teacher)[0][mkd_idx] += coeff * d_t
            setattr(breakdown, channel, loss)
        else:
            h_t = t_out.hidden[mkd_idx]
            loss, d_s, d_t = tar_loss_grad(h_s, h_t, grad_to_teacher=grad_to_teachers)
            d_h_s[mkd_idx] += coeff * d_s
            if grad_to_teachers:
                t_grads(teacher)[1][mkd_idx] += coeff * d_t
            setattr(breakdown, channel, loss)
        breakdown.total += coeff * loss
    grads = {k: (v[0], v[1]) for k, v in teacher_grads.items()}
    return breakdown, d_logits, d_h_s, grads


@dataclass
class StudentEpoch:
    epoch: int
    breakdown: LossBreakdown
    val_acc: float
    val_macro_f1: float


def train_student(student: StudentModel, ctx: LocalContext, a_rownorm: np.ndarray,
                  teacher_outs: dict[str, TeacherOutput | None], labels: np.ndarray,
                  split: Split, mkd: MkdConfig, lr: float, max_epochs: int = 200,
                  patience: int = 10, kd_reverse_kl: bool = False,
                  mkd_mask: str = "all") -> list[StudentEpoch]:
    """Full-batch Adam on the distillation objective with frozen teachers,
    early stopped on val macro-F1; leaves the best-val parameters in place."""
    params = student.params()
    adam = Adam(params, lr)
    train_idx = np.asarray(split.train, dtype=np.int64)
    val_idx = np.asarray(split.val, dtype=np.int64)
    if mkd_mask not in ("all", "train"):
        raise ConfigError(f"mkd_mask must be all|train, got {mkd_mask!r}")
    mkd_idx = None if mkd_mask == "all" else train_idx
    best_snap = snapshot(params)
    best_f1 = -1.0
    patience_left = patience
    history: list[StudentEpoch] = []
    for epoch in range(1, max_epochs + 1):
        out = student.forward(ctx, a_rownorm)
        breakdown, d_logits, d_h_s, _ = mkd_objective(
            out, teacher_outs, labels, train_idx, mkd,
            kd_reverse_kl=kd_reverse_kl, mkd_idx=mkd_idx
        )
        if not np.isfinite(breakdown.total):
            raise NumericsError(f"student loss diverged at epoch {epoch}: {breakdown}")
        zero_grads(params)
        student.backward(out.cache, d_logits, d_h_s)
        adam.step()
        val_out = student.forward(ctx, a_rownorm)
        preds = predict_labels(val_out.logits[val_idx])
        acc = accuracy(preds, labels[val_idx])
        f1 = macro_f1(preds, labels[val_idx])
        history.append(StudentEpoch(epoch, breakdown, acc, f1))
        if f1 > best_f1:
            best_f1 = f1
            best_snap = snapshot(params)
            patience_left = patience
        else:
            patience_left -= 1
            if patience_left == 0:
                break
    restore(params, best_snap)
    return history
