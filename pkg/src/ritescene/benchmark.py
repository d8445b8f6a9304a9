"""Seeded end-to-end run on the synthetic dataset: generate, train, evaluate."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import pipeline, synth
from .config import PipelineConfig

logger = logging.getLogger(__name__)


@dataclass
class BenchmarkResult:
    seed: int
    accuracy: dict[str, float]  # kind -> test accuracy, percent
    train_accuracy: dict[str, float]
    artifacts: dict[str, bytes] = field(default_factory=dict)  # file name -> bytes
    seconds: dict[str, float] = field(default_factory=dict)


def run_seed(seed: int, workdir: str | Path, workers: int = 1, kinds=("knn", "svm"),
             train_n: int = 10, test_n: int = 5, frames: int = 60, height: int = 120, width: int = 160,
             overrides: dict | None = None) -> BenchmarkResult:
    workdir = Path(workdir)
    data = workdir / f"data_{seed}"
    t0 = time.perf_counter()
    if not (data / "test").is_dir():
        synth.generate_synthetic(data, seed, len(synth.CLASSES), 0, frames, height, width,
                                 {"train": train_n, "test": test_n})
    t1 = time.perf_counter()
    cfg = PipelineConfig.from_flat({"run.seed": seed, "run.workers": workers, **(overrides or {})})
    trained = pipeline.train_from_samples(pipeline.discover_samples(data / "train"), cfg, kinds)
    t2 = time.perf_counter()
    bundles = [pipeline.parse_bundle(pipeline.dump_bundle(b)) for b in trained.bundles.values()]
    result = pipeline.evaluate_bundles(bundles, pipeline.discover_samples(data / "test"), workers)
    t3 = time.perf_counter()

    out = workdir / f"out_{seed}_w{workers}"
    pipeline.write_eval(result, out)
    artifacts = {f"bundle_{k}.json": pipeline.dump_bundle(b).encode() for k, b in trained.bundles.items()}
    artifacts.update({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    acc = {k: r.accuracy for k, r in result.reports.items()}
    logger.info("seed %d: %s", seed, acc)
    return BenchmarkResult(seed, acc, trained.train_accuracy, artifacts,
                           {"generate": t1 - t0, "train": t2 - t1, "evaluate": t3 - t2})
