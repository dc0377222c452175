"""Robustness, ablation, and hyperparameter sweep harnesses.

Every harness returns MetricRow lists; rows are sorted before writing so the
CSV is independent of execution order. Each cell runs the full pipeline
(teacher training included) under its own seed.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import RunConfig
from .data import Dataset
from .pipeline import RunResult, run_single

CSV_HEADER = "run_id,seed,config_hash,noise_kind,ratio,lambda,beta,rho,accuracy,macro_f1"

# ablation name -> config overrides, full model first
ABLATIONS: dict[str, dict] = {
    "full": {},
    "wo_content_teacher": {"use_ct": False},
    "wo_propagation_teacher": {"use_pt": False},
    "wo_tar": {"use_tar": False},
    "wo_sup": {"use_sup": False},
    "wo_lgpi": {"use_lgpi": False},
}


@dataclass
class MetricRow:
    run_id: str
    seed: int
    config_hash: str
    noise_kind: str
    ratio: float
    lam: float
    beta: float
    rho: float
    accuracy: float
    macro_f1: float

    def to_csv(self) -> str:
        return (
            f"{self.run_id},{self.seed},{self.config_hash},{self.noise_kind},"
            f"{self.ratio:.6f},{self.lam:.6f},{self.beta:.6f},{self.rho:.6f},"
            f"{self.accuracy:.6f},{self.macro_f1:.6f}"
        )

    def sort_key(self):
        return (self.run_id, self.seed)


def metric_row(run_id: str, cfg: RunConfig, result: RunResult) -> MetricRow:
    return MetricRow(
        run_id=run_id,
        seed=cfg.seed,
        config_hash=result.config_hash,
        noise_kind=cfg.noise_kind,
        ratio=cfg.noise_ratio,
        lam=cfg.lam,
        beta=cfg.beta,
        rho=cfg.rho,
        accuracy=result.test_acc,
        macro_f1=result.test_macro_f1,
    )


def write_metrics_csv(path, rows: list[MetricRow]) -> None:
    lines = [CSV_HEADER] + [r.to_csv() for r in sorted(rows, key=MetricRow.sort_key)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def robustness_sweep(ds: Dataset, base: RunConfig, ratios, kinds, seeds) -> list[MetricRow]:
    """Full pipeline per (kind, ratio, seed); ratio 0 cells reduce to the
    clean run for that seed regardless of kind."""
    rows = []
    for kind in kinds:
        for ratio in ratios:
            for seed in seeds:
                cfg = base.replace(noise_kind=kind, noise_ratio=float(ratio), seed=int(seed))
                result = run_single(ds, cfg)
                rows.append(metric_row(f"noise-{kind}-r{float(ratio):.6f}-s{seed}", cfg, result))
    return sorted(rows, key=MetricRow.sort_key)


def ablation_suite(ds: Dataset, base: RunConfig, seeds) -> list[MetricRow]:
    rows = []
    for name, overrides in ABLATIONS.items():
        for seed in seeds:
            cfg = base.replace(seed=int(seed), **overrides)
            result = run_single(ds, cfg)
            rows.append(metric_row(f"ablate-{name}-s{seed}", cfg, result))
    return sorted(rows, key=MetricRow.sort_key)


def param_sweep(ds: Dataset, base: RunConfig, lambdas, betas, rhos, seeds):
    """Factorial over (lambda, beta) at the base rho, then a rho sweep at the
    best pair by mean val macro-F1 (ties to smaller lambda, then beta).

    Returns (rows, best_lambda, best_beta).
    """
    rows = []
    means: dict[tuple[float, float], float] = {}
    for lam in lambdas:
        for beta in betas:
            scores = []
            for seed in seeds:
                cfg = base.replace(lam=float(lam), beta=float(beta), seed=int(seed))
                result = run_single(ds, cfg)
                scores.append(result.val_macro_f1)
                rows.append(metric_row(f"grid-l{float(lam):.6f}-b{float(beta):.6f}-s{seed}",
                                       cfg, result))
            means[(float(lam), float(beta))] = sum(scores) / len(scores)
    best_lam, best_beta = min(means, key=lambda k: (-means[k], k[0], k[1]))
    for rho in rhos:
        for seed in seeds:
            cfg = base.replace(lam=best_lam, beta=best_beta, rho=float(rho), seed=int(seed))
            result = run_single(ds, cfg)
            rows.append(metric_row(f"rho-{float(rho):.6f}-s{seed}", cfg, result))
    return sorted(rows, key=MetricRow.sort_key), best_lam, best_beta
