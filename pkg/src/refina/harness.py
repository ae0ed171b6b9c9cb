"""Experiment orchestration: noisy-copy benchmarks, external refinement, scaling probes.

Per-cell seeds are derived from ``(trial seed, stream, noise level)`` via
:class:`numpy.random.SeedSequence`; both the permutation and the noise mask
are redrawn for every trial seed.  Apart from wall-clock columns, every file
written here is a deterministic function of the configuration.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import os
import statistics
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .alignment import save_alignment
from .graph import Graph, NoiseSpec, load_edge_list, load_permutation, noisy_permuted_copy, random_graph
from .initialization import InitSpec, corrupted_truth, make_initial
from .metrics import evaluate
from .refine import RefineConfig, refine
from .validation import check_truth

logger = logging.getLogger(__name__)

WORKERS_ENV = "REFINA_WORKERS"

SWEEP_AXES = {
    "p": None,
    "epsilon": "epsilon",
    "alpha": "alpha",
    "K": "iterations",
    "mode": "mode",
    "normalization": "normalization",
}

SUMMARY_METRICS = (
    "initial_accuracy",
    "final_accuracy",
    "initial_avg_mnc",
    "final_avg_mnc",
    "n_ov",
    "lccc_edges",
)


class ConfigError(ValueError):
    """The experiment configuration is malformed."""


@dataclass
class ExperimentConfig:
    """Declarative description of a benchmark sweep.

    ``graph`` holds either ``{"path": ...}`` or generator parameters
    ``{"n": ..., "avg_degree": ..., "seed": ...}``.  ``refine`` gives the
    base refinement settings and ``sweep`` maps axis names (``p``,
    ``epsilon``, ``alpha``, ``K``, ``mode``, ``normalization``) to value lists.
    """

    graph: dict
    out: str
    noise: list = field(default_factory=lambda: [0.05])
    noise_kind: str = "remove_edges"
    seeds: list = field(default_factory=lambda: [0])
    init: dict = field(default_factory=lambda: {"kind": "corrupted_truth", "corruption_fraction": 0.3})
    refine: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    topk: list = field(default_factory=lambda: [1, 5, 10])
    workers: Optional[int] = None

    def __post_init__(self):
        if not isinstance(self.graph, dict) or not ("path" in self.graph or "n" in self.graph):
            raise ConfigError("graph must give either 'path' or generator parameters 'n' and 'avg_degree'")
        if "p" in self.sweep:
            self.noise = list(self.sweep["p"])
        if not self.noise:
            raise ConfigError("noise list must not be empty")
        if not self.seeds:
            raise ConfigError("seeds list must not be empty")
        for axis, values in self.sweep.items():
            if axis not in SWEEP_AXES:
                raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}")
            if not isinstance(values, (list, tuple)) or not values:
                raise ConfigError(f"sweep axis {axis!r} needs at least one value")
        for p in self.noise:
            if not 0.0 <= float(p) <= 1.0:
                raise ConfigError(f"noise level {p} outside [0, 1]")
        try:
            self.variants()
            InitSpec(**{k: v for k, v in self.init.items() if k != "seed"})
            NoiseSpec(self.noise_kind, 0.0, 0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """Load YAML or JSON; non-None ``overrides`` replace top-level keys."""
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def variants(self) -> list:
        """Cartesian product of the non-noise sweep axes over the base refine settings."""
        axes = [(a, v) for a, v in self.sweep.items() if a != "p"]
        variants = []
        for combo in itertools.product(*(v for _, v in axes)):
            kw = dict(self.refine)
            kw.update({SWEEP_AXES[a]: val for (a, _), val in zip(axes, combo)})
            variants.append(RefineConfig(**kw))
        return variants


def derive_seed(*key) -> int:
    """Stable 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


def _noise_key(p: float) -> int:
    return int(round(float(p) * 1_000_000))


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _trace_csv_text(trace) -> str:
    fd, tmp = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        trace.to_csv(tmp)
        with open(tmp, encoding="utf-8") as fh:
            return fh.read()
    finally:
        os.unlink(tmp)


def build_base_graph(spec: dict) -> Graph:
    if "path" in spec:
        return load_edge_list(spec["path"])
    return random_graph(int(spec["n"]), float(spec["avg_degree"]), spec.get("seed", 0))


def _variant_label(idx: int) -> str:
    return f"v{idx:02d}"


def _run_cell(task) -> dict:
    g1, p, seed, noise_kind, init, cfg, idx, out, topk = task
    noise = NoiseSpec(noise_kind, float(p), derive_seed(seed, 1, _noise_key(p)))
    g2, truth = noisy_permuted_copy(g1, noise, perm_seed=derive_seed(seed, 0, _noise_key(p)))
    init_spec = InitSpec(**{**init, "seed": derive_seed(seed, 2, _noise_key(p))})
    m0 = make_initial(init_spec, g1, g2, truth)
    m, trace = refine(g1, g2, m0, cfg, truth)
    initial = evaluate(g1, g2, m0, truth, ks=topk)
    final = evaluate(g1, g2, m, truth, ks=topk)
    cell = Path(out) / "cells" / f"p{p:g}" / f"seed{seed}" / _variant_label(idx)
    _write_atomic(cell / "trace.csv", _trace_csv_text(trace))
    _write_atomic(cell / "metrics.json", final.to_json() + "\n")
    _write_atomic(cell / "initial_metrics.json", initial.to_json() + "\n")
    return {
        "noise": float(p),
        "seed": int(seed),
        "variant": idx,
        "initial_accuracy": initial.accuracy,
        "final_accuracy": final.accuracy,
        "initial_avg_mnc": initial.avg_mnc,
        "final_avg_mnc": final.avg_mnc,
        "n_ov": final.n_ov,
        "lccc_edges": final.lccc_edges,
        "iterations_run": trace.records[-1].iter if trace.records else 0,
    }


def _mean_std(values):
    values = [float(v) for v in values]
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def summarize(rows: list, variants: list) -> list:
    """Mean and sample standard deviation across seeds for every (noise, variant) cell."""
    out = []
    keyed = sorted({(r["noise"], r["variant"]) for r in rows})
    for noise, idx in keyed:
        group = sorted((r for r in rows if r["noise"] == noise and r["variant"] == idx), key=lambda r: r["seed"])
        cfg = variants[idx]
        rec = {
            "noise": noise,
            "variant": _variant_label(idx),
            "mode": cfg.mode,
            "epsilon": cfg.epsilon,
            "alpha": cfg.alpha,
            "iterations": cfg.iterations,
            "normalization": cfg.normalization,
            "n_seeds": len(group),
        }
        for name in SUMMARY_METRICS:
            mean, std = _mean_std(r[name] for r in group)
            rec[f"{name}_mean"] = mean
            rec[f"{name}_std"] = std
        rec["improved_seeds"] = sum(r["final_accuracy"] > r["initial_accuracy"] for r in group)
        out.append(rec)
    return out


def _csv_text(rows: list, header: list) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_fmt(r[h]) for h in header))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _workers(cfg_workers: Optional[int]) -> int:
    if cfg_workers:
        return int(cfg_workers)
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def run_benchmark(cfg: ExperimentConfig) -> dict:
    """Run every (noise, seed, variant) cell and write traces, metrics and a summary.

    Returns ``{"rows": per-cell results, "summary": per-(noise, variant) stats}``.
    """
    g1 = build_base_graph(cfg.graph)
    variants = cfg.variants()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [
        (g1, p, s, cfg.noise_kind, cfg.init, v, idx, str(out), tuple(cfg.topk))
        for p in cfg.noise
        for s in cfg.seeds
        for idx, v in enumerate(variants)
    ]
    n_workers = _workers(cfg.workers)
    logger.info("benchmark: %d cells, %d workers", len(tasks), n_workers)
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            rows = list(pool.map(_run_cell, tasks))
    else:
        rows = [_run_cell(t) for t in tasks]
    summary = summarize(rows, variants)
    _write_atomic(out / "variants.json", json.dumps(
        {_variant_label(i): asdict(v) for i, v in enumerate(variants)}, indent=2, sort_keys=True) + "\n")
    _write_atomic(out / "cells.csv", _csv_text(rows, list(rows[0])))
    _write_atomic(out / "summary.csv", _csv_text(summary, list(summary[0])))
    return {"rows": rows, "summary": summary}


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def run_external(g1_path, g2_path, m0_path, cfg: RefineConfig, out, truth_path=None,
                 topk=(1, 5, 10), top_out: Optional[int] = None):
    """Refine an aligner's output read from disk.

    Writes ``alignment.txt`` (``i j v`` lines), ``metrics.json``,
    ``initial_metrics.json`` and ``trace.csv`` under ``out``.  Without a truth
    file the reports omit the accuracy fields.
    """
    from .alignment import load_alignment

    g1, g2 = load_edge_list(g1_path), load_edge_list(g2_path)
    m0 = load_alignment(m0_path, g1.n, g2.n)
    truth = None
    if truth_path is not None:
        truth = check_truth(load_permutation(truth_path, g1.n), g1.n, g2.n)
    m, trace = refine(g1, g2, m0, cfg, truth)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    final = evaluate(g1, g2, m, truth, ks=topk)
    save_alignment(m, out / "alignment.txt", top_k=top_out)
    _write_atomic(out / "metrics.json", final.to_json() + "\n")
    _write_atomic(out / "initial_metrics.json", evaluate(g1, g2, m0, truth, ks=topk).to_json() + "\n")
    _write_atomic(out / "trace.csv", _trace_csv_text(trace))
    return m, trace, final


SCALE_HEADER = ("n", "mode", "ms_per_iter")


def scaling_probe(sizes, avg_degree: float = 10.0, iterations: int = 3, noise: float = 0.05,
                  modes=("dense", "sparse"), alpha: int = 10, seed: int = 0, repeats: int = 3,
                  out=None) -> list:
    """Per-iteration wall time of each mode at each graph size.

    Inputs follow the benchmark protocol (noisy permuted copy, 30% corrupted
    truth as the initial matrix).  Each run is repeated ``repeats`` times;
    the reported value is the median over iterations of the fastest repeat
    of that iteration.  Metric logging is excluded from the timings.
    """
    sizes = [int(n) for n in sizes]
    if len(sizes) < 3:
        raise ValueError("scaling probe needs at least 3 sizes")
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rows = []
    for n in sizes:
        g1 = random_graph(n, avg_degree, derive_seed(seed, 10, n))
        g2, truth = noisy_permuted_copy(g1, NoiseSpec("remove_edges", noise, derive_seed(seed, 11, n)),
                                        perm_seed=derive_seed(seed, 12, n))
        m0 = corrupted_truth(truth, 0.3, g2.n, derive_seed(seed, 13, n))
        for mode in modes:
            cfg = RefineConfig(iterations=iterations, mode=mode, alpha=alpha, log_every=iterations)
            runs = [refine(g1, g2, m0, cfg)[1].iteration_ms for _ in range(repeats)]
            best = np.min(np.asarray(runs, dtype=float), axis=0)
            rows.append({"n": n, "mode": mode, "ms_per_iter": float(np.median(best))})
            logger.info("scale n=%d mode=%s %.1f ms/iter", n, mode, rows[-1]["ms_per_iter"])
    if out is not None:
        _write_atomic(Path(out), _csv_text(rows, list(SCALE_HEADER)))
    return rows


def doubling_ratios(rows: list, mode: str) -> list:
    """Per-doubling time ratios, normalized to an exact factor of 2 in ``n``."""
    pts = sorted((r["n"], r["ms_per_iter"]) for r in rows if r["mode"] == mode)
    out = []
    for (n0, t0), (n1, t1) in zip(pts, pts[1:]):
        exponent = np.log(t1 / t0) / np.log(n1 / n0)
        out.append(float(2.0 ** exponent))
    return out


def doubling_ratio_fit(rows: list, mode: str) -> float:
    """``2 ** b`` for the least-squares slope ``b`` of log time against log ``n``."""
    pts = sorted((r["n"], r["ms_per_iter"]) for r in rows if r["mode"] == mode)
    if len(pts) < 2:
        raise ValueError(f"need at least two sizes for mode {mode!r}")
    x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    slope = np.polyfit(x, y, 1)[0]
    return float(2.0 ** slope)
