"""End-to-end experiment pipeline.

One run is: seeded 7:1:2 split, optional noise injection, global-graph
construction, teacher pre-training (each teacher trained on cross-entropy
and then frozen), student training on the distillation objective, and test
evaluation. Each stage draws from its own seed-derived stream, so disabling
a teacher or injecting zero noise never shifts another stage's randomness.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from .config import RunConfig
from .data import Dataset, Split, load_dataset, split_dataset
from .distill import StudentEpoch, mkd_objective, mkd_total, train_student
from .errors import ConfigError
from .graph import build_engagement_matrix, build_global_graph, node_degrees, row_normalize
from .metrics import accuracy, macro_f1, predict_labels
from .noise import NoiseSpec, apply_noise
from .numcore import Param, grad_check, zero_grads
from .rng import Rng
from .student import LocalContext, StudentModel
from .teachers import ContentTeacher, PropagationTeacher, TeacherEpoch, TeacherOutput, train_teacher


@dataclass
class GraphInputs:
    """Everything derived from a (possibly noised) dataset that models consume."""

    x_news: np.ndarray
    a_news: np.ndarray
    degrees: np.ndarray
    a_rownorm: np.ndarray
    local: LocalContext
    labels: np.ndarray

    @classmethod
    def build(cls, ds: Dataset) -> "GraphInputs":
        e = build_engagement_matrix(ds)
        a_news = build_global_graph(e)
        return cls(
            x_news=np.vstack([s.news_feature for s in ds.samples]),
            a_news=a_news,
            degrees=node_degrees(a_news),
            a_rownorm=row_normalize(a_news),
            local=LocalContext.build(ds),
            labels=ds.labels(),
        )


@dataclass
class RunResult:
    config_hash: str
    seed: int
    val_acc: float
    val_macro_f1: float
    test_acc: float
    test_macro_f1: float
    split: Split
    student: StudentModel
    content_teacher: ContentTeacher | None
    propagation_teacher: PropagationTeacher | None
    student_history: list[StudentEpoch]
    ct_history: list[TeacherEpoch] = field(default_factory=list)
    pt_history: list[TeacherEpoch] = field(default_factory=list)


def noise_spec(cfg: RunConfig) -> NoiseSpec | None:
    if cfg.noise_kind == "none" or cfg.noise_ratio == 0.0:
        return None
    return NoiseSpec(cfg.noise_kind, cfg.noise_ratio, cfg.noise_scope, cfg.seed)


def build_models(ds_dim: int, n_news: int, cfg: RunConfig, rng: Rng):
    ct = pt = None
    if cfg.use_ct:
        ct = ContentTeacher(ds_dim, cfg.hidden_dim, rng.derive("init-ct"), cfg.final_relu)
    if cfg.use_pt:
        pt = PropagationTeacher(n_news, cfg.pe_dim, cfg.hidden_dim, cfg.refiner_hidden,
                                rng.derive("init-pt"), cfg.final_relu)
    student = StudentModel(ds_dim, cfg.hidden_dim, rng.derive("init-student"),
                           final_relu=cfg.final_relu, pooling=cfg.pooling,
                           use_lgpi=cfg.use_lgpi)
    return ct, pt, student


def run_single(ds: Dataset, cfg: RunConfig) -> RunResult:
    cfg.validate()
    rng = Rng(cfg.seed)
    split = split_dataset(ds, rng.derive("split").seed)
    ds_run = apply_noise(ds, noise_spec(cfg), test_indices=split.test)
    inp = GraphInputs.build(ds_run)
    ct, pt, student = build_models(ds.feature_dim, len(ds.samples), cfg, rng)

    teacher_outs: dict[str, TeacherOutput | None] = {"ct": None, "pt": None}
    ct_history: list[TeacherEpoch] = []
    pt_history: list[TeacherEpoch] = []
    if ct is not None:
        ct_history = train_teacher(ct, (inp.x_news,), inp.labels, split,
                                   cfg.lr_ct, cfg.max_epochs, cfg.patience)
        teacher_outs["ct"] = ct.forward(inp.x_news)
    if pt is not None:
        pt_history = train_teacher(pt, (inp.a_news, inp.degrees), inp.labels, split,
                                   cfg.lr_pt, cfg.max_epochs, cfg.patience)
        teacher_outs["pt"] = pt.forward(inp.a_news, inp.degrees)

    student_history = train_student(student, inp.local, inp.a_rownorm, teacher_outs,
                                    inp.labels, split, cfg.mkd(), cfg.lr_student,
                                    cfg.max_epochs, cfg.patience, cfg.kd_reverse_kl,
                                    cfg.mkd_mask)

    out = student.forward(inp.local, inp.a_rownorm)
    val_idx = np.asarray(split.val)
    test_idx = np.asarray(split.test)
    val_preds = predict_labels(out.logits[val_idx])
    test_preds = predict_labels(out.logits[test_idx])
    return RunResult(
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
        val_acc=accuracy(val_preds, inp.labels[val_idx]),
        val_macro_f1=macro_f1(val_preds, inp.labels[val_idx]),
        test_acc=accuracy(test_preds, inp.labels[test_idx]),
        test_macro_f1=macro_f1(test_preds, inp.labels[test_idx]),
        split=split,
        student=student,
        content_teacher=ct,
        propagation_teacher=pt,
        student_history=student_history,
        ct_history=ct_history,
        pt_history=pt_history,
    )


# ---------------------------------------------------------------- persistence

def save_checkpoint(path, model_kind: str, config_hash: str, seed: int, params: list[Param]) -> None:
    doc = {
        "model": model_kind,
        "config_hash": config_hash,
        "seed": seed,
        "params": {
            p.name: {"shape": [int(p.value.shape[0]), int(p.value.shape[1])],
                     "data": [float(x) for x in p.value.reshape(-1)]}
            for p in params
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(jsonio.dumps(doc) + "\n")


def load_checkpoint(path) -> dict:
    import json

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    for name, entry in doc["params"].items():
        rows, cols = entry["shape"]
        doc["params"][name] = np.asarray(entry["data"], dtype=np.float64).reshape(rows, cols)
    return doc


def load_params_into(model, checkpoint: dict) -> None:
    for p in model.params():
        if p.name not in checkpoint["params"]:
            raise ConfigError(f"checkpoint missing parameter '{p.name}'")
        stored = checkpoint["params"][p.name]
        if stored.shape != p.value.shape:
            raise ConfigError(f"checkpoint shape mismatch for '{p.name}': "
                              f"{stored.shape} vs {p.value.shape}")
        p.value[...] = stored


def write_teacher_history_csv(path, history: list[TeacherEpoch]) -> None:
    lines = ["epoch,train_loss,val_acc,val_macro_f1"]
    for row in history:
        lines.append(f"{row.epoch},{row.train_loss:.17g},{row.val_acc:.6f},{row.val_macro_f1:.6f}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_student_history_csv(path, history: list[StudentEpoch]) -> None:
    lines = ["epoch,cls,sup_pt,tar_pt,sup_ct,tar_ct,total,val_acc,val_macro_f1"]
    for row in history:
        b = row.breakdown
        lines.append(
            f"{row.epoch},{b.cls:.17g},{b.sup_pt:.17g},{b.tar_pt:.17g},"
            f"{b.sup_ct:.17g},{b.tar_ct:.17g},{b.total:.17g},"
            f"{row.val_acc:.6f},{row.val_macro_f1:.6f}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def save_run_artifacts(out_dir, cfg: RunConfig, result: RunResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    from .config import save_config

    save_config(cfg, os.path.join(out_dir, "config.json"))
    h = result.config_hash
    if result.content_teacher is not None:
        save_checkpoint(os.path.join(out_dir, "content_teacher.json"), "content",
                        h, cfg.seed, result.content_teacher.params())
        write_teacher_history_csv(os.path.join(out_dir, "ct_history.csv"), result.ct_history)
    if result.propagation_teacher is not None:
        save_checkpoint(os.path.join(out_dir, "propagation_teacher.json"), "propagation",
                        h, cfg.seed, result.propagation_teacher.params())
        write_teacher_history_csv(os.path.join(out_dir, "pt_history.csv"), result.pt_history)
    save_checkpoint(os.path.join(out_dir, "student.json"), "student",
                    h, cfg.seed, result.student.params())
    write_student_history_csv(os.path.join(out_dir, "history.csv"), result.student_history)


def dump_graph_csvs(out_dir, ds: Dataset, result: RunResult) -> None:
    """Debug dump of the raw graph plus the trained retention and refinement."""
    inp = GraphInputs.build(ds)
    matrices = {"a_news": inp.a_news}
    if result.propagation_teacher is not None:
        m, _ = result.propagation_teacher.refiner.retention(inp.a_news, inp.degrees)
        matrices["retention"] = m
        matrices["refined"] = inp.a_news * m + np.eye(len(ds.samples))
    for name, mat in matrices.items():
        lines = [",".join(f"{x:.17g}" for x in row) for row in mat]
        with open(os.path.join(out_dir, f"{name}.csv"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def evaluate_checkpoint(run_dir, data_path: str | None = None):
    """Rebuild the run's inputs from its saved config and score the saved
    student on the test split. Returns (test_acc, test_macro_f1, cfg)."""
    from .config import parse_config

    cfg = parse_config(os.path.join(run_dir, "config.json"))
    if data_path:
        cfg = cfg.replace(data=data_path)
    ds = load_dataset(cfg.data)
    rng = Rng(cfg.seed)
    split = split_dataset(ds, rng.derive("split").seed)
    ds_run = apply_noise(ds, noise_spec(cfg), test_indices=split.test)
    inp = GraphInputs.build(ds_run)
    student = StudentModel(ds.feature_dim, cfg.hidden_dim, rng.derive("init-student"),
                           final_relu=cfg.final_relu, pooling=cfg.pooling,
                           use_lgpi=cfg.use_lgpi)
    load_params_into(student, load_checkpoint(os.path.join(run_dir, "student.json")))
    out = student.forward(inp.local, inp.a_rownorm)
    test_idx = np.asarray(split.test)
    preds = predict_labels(out.logits[test_idx])
    return accuracy(preds, inp.labels[test_idx]), macro_f1(preds, inp.labels[test_idx]), cfg


# ------------------------------------------------------------- gradient check

def _relu_margin(caches: list[dict]) -> float:
    """Smallest |pre-activation| over every ReLU input in the given caches;
    kinks this close to zero would corrupt a finite-difference probe."""
    margin = np.inf
    for cache in caches:
        for key in ("pre1", "pre2", "pre_all", "pre_head"):
            if key in cache:
                margin = min(margin, float(np.min(np.abs(cache[key]))))
        if "ret" in cache and "pre1" in cache["ret"]:
            margin = min(margin, float(np.min(np.abs(cache["ret"]["pre1"]))))
    return margin


def full_gradient_check(ds: Dataset, cfg: RunConfig, h: float = 1e-5) -> float:
    """Finite-difference check of the complete training objective.

    Builds freshly initialized teachers and student on ds, forms the total
    student objective with gradients flowing through the teacher outputs as
    well, and compares every analytic gradient coordinate against central
    differences.

    A +-h probe moves pre-activations by well under 50h, so initializations
    with a ReLU pre-activation inside that margin are re-drawn from the next
    derived stream to keep the probes kink-free. Central differences in
    float64 resolve this loss only to about 1e-11, so coordinates whose
    analytic and numeric gradients both sit below 3e-7 are excluded from
    sampling as sub-resolution (see grad_check).
    """
    cfg = cfg.replace(use_ct=True, use_pt=True, use_sup=True, use_tar=True)
    inp = GraphInputs.build(ds)
    # supervise every row so the check covers the whole output surface
    train_idx = np.arange(len(ds.samples), dtype=np.int64)
    mkd = cfg.mkd()
    teacher_outs = {}

    def forward_all():
        teacher_outs["ct"] = ct.forward(inp.x_news)
        teacher_outs["pt"] = pt.forward(inp.a_news, inp.degrees)
        return student.forward(inp.local, inp.a_rownorm)

    def loss_and_grad() -> float:
        zero_grads(params)
        st_out = forward_all()
        breakdown, d_logits, d_h_s, tgrads = mkd_objective(
            st_out, teacher_outs, inp.labels, train_idx, mkd,
            kd_reverse_kl=cfg.kd_reverse_kl, grad_to_teachers=True)
        student.backward(st_out.cache, d_logits, d_h_s)
        if "ct" in tgrads:
            ct.backward(teacher_outs["ct"].cache, *tgrads["ct"])
        if "pt" in tgrads:
            pt.backward(teacher_outs["pt"].cache, *tgrads["pt"])
        return breakdown.total

    rng = Rng(cfg.seed)
    margin = 50.0 * h
    for attempt in range(1000):
        ct, pt, student = build_models(ds.feature_dim, len(ds.samples), cfg,
                                       rng.derive(f"gradcheck-{attempt}"))
        params = ct.params() + pt.params() + student.params()
        st_out = forward_all()
        caches = [teacher_outs["ct"].cache, teacher_outs["pt"].cache, st_out.cache]
        if _relu_margin(caches) > margin:
            break
    else:
        raise RuntimeError("could not find a kink-free initialization")

    # cache the unperturbed outputs so each model group's probe loop only
    # re-runs the forward pass that its parameters can influence
    st0 = forward_all()
    ct0, pt0 = teacher_outs["ct"], teacher_outs["pt"]

    def total(ct_out, pt_out, st_out) -> float:
        return mkd_total(st_out, {"ct": ct_out, "pt": pt_out}, inp.labels,
                         train_idx, mkd, kd_reverse_kl=cfg.kd_reverse_kl).total

    worst = 0.0
    for group, loss_only in (
        (ct.params(), lambda: total(ct.forward(inp.x_news), pt0, st0)),
        (pt.params(), lambda: total(ct0, pt.forward(inp.a_news, inp.degrees), st0)),
        (student.params(), lambda: total(ct0, pt0, student.forward(inp.local, inp.a_rownorm))),
    ):
        worst = max(worst, grad_check(loss_and_grad, group, h=h,
                                      loss_only=loss_only, min_resolved=3e-7))
    return worst
