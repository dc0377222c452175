"""Dual-teacher knowledge distillation for robust fake-news detection on
propagation graphs: synthetic benchmarks, noise-injection robustness
protocol, ablations, and hyperparameter sweeps, reproducible from a seed."""

__version__ = "0.1.0"
