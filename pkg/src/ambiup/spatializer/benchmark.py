"""Comparative benchmark: trained spatializer variants against the spatial prior.

One order-2 dataset serves every comparison: mono->FOA models see the
first-order truncation of the ground truth and the FOA->SOA model sees the
same scenes at full order.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..metrics import MetricReport
from ..scenes import DatasetManifest, gen_dataset
from .evaluation import evaluate_model, evaluate_prior
from .prior import prior_fit
from .training import TrainConfig, load_training_scenes, train

DEFAULT_MODELS = {
    "full": dict(variant="full"),
    "nosep": dict(variant="nosep"),
    "nohints": dict(variant="nohints"),
    "foa2soa": dict(variant="full", order_in=1, order_out=2),
}


@dataclass
class BenchmarkConfig:
    scenes: int = 80  # 60 train / 20 test
    seed: int = 2024
    duration: float = 10.0
    sample_rate: int = 16000
    min_sources: int = 1
    max_sources: int = 2
    train: TrainConfig = field(default_factory=lambda: TrainConfig(iterations=1000))
    models: dict = field(default_factory=lambda: dict(DEFAULT_MODELS))


@dataclass
class BenchmarkResult:
    reports: dict[str, MetricReport]
    train_seconds: dict[str, float]
    histories: dict[str, list[float]]

    def summary(self) -> dict:
        return {name: {"stft": r.stft_mse, "env": r.env, "emd": r.emd,
                       "train_seconds": self.train_seconds.get(name, 0.0)}
                for name, r in self.reports.items()}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def run_benchmark(workdir, cfg: BenchmarkConfig | None = None, log=print) -> BenchmarkResult:
    cfg = cfg or BenchmarkConfig()
    workdir = Path(workdir)
    manifest_path = workdir / "data" / "manifest.json"
    if manifest_path.exists():
        manifest = DatasetManifest.load(manifest_path)
    else:
        manifest = gen_dataset(cfg.scenes, cfg.seed, 2, workdir / "data", cfg.duration, cfg.sample_rate,
                               cfg.min_sources, cfg.max_sources)
    reports, seconds, histories = {}, {}, {}
    t0 = time.perf_counter()
    reports["prior"] = evaluate_prior(prior_fit(manifest), manifest)
    seconds["prior"] = time.perf_counter() - t0
    log(f"prior: {reports['prior'].emd:.5f} EMD")
    for name, overrides in cfg.models.items():
        tcfg = replace(cfg.train, **overrides)
        scenes = load_training_scenes(manifest, tcfg)
        result = train(scenes, tcfg, out_dir=workdir / name, sample_rate=cfg.sample_rate)
        seconds[name], histories[name] = result.seconds, result.history
        reports[name] = evaluate_model(result.params, result.model, manifest)
        log(f"{name}: {reports[name].emd:.5f} EMD, {reports[name].stft_mse:.1f} STFT, "
            f"trained in {result.seconds:.0f} s")
    out = BenchmarkResult(reports, seconds, histories)
    out.save(workdir / "benchmark.json")
    return out
