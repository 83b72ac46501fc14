"""Self-supervised training loop: predict the discarded ambisonic channels from the mono mix."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import autodiff as ad
from ..audio import AmbisonicSignal, rotation_matrix_z
from ..hints import HintFeatures
from ..optim import AdamHyper, AdamState, adam_step, load_checkpoint, save_checkpoint
from ..scenes import DatasetManifest
from .model import (SpatializerConfig, as_tensors, channel_weights, forward, forward_batch, front_end,
                    init_params, stft_loss)


@dataclass
class TrainConfig:
    k: int = 8
    order_in: int = 0
    order_out: int = 1
    variant: str = "full"
    bands: int = 32
    hidden: int = 64
    lr: float = 1e-4
    weight_decay: float = 5e-4
    iterations: int = 1000
    batch: int = 32
    seed: int = 0
    augment: bool = True
    window: float = 0.6  # seconds of input per sample
    target: float = 0.1  # seconds predicted at the window center
    checkpoint_every: int = 0

    def model_config(self, sample_rate: int) -> SpatializerConfig:
        return SpatializerConfig(k=self.k, order_in=self.order_in, order_out=self.order_out, bands=self.bands,
                                 hidden=self.hidden, variant=self.variant, sample_rate=sample_rate)

    def hyper(self) -> AdamHyper:
        return AdamHyper(lr=self.lr, weight_decay=self.weight_decay)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed training config ({exc})") from exc


@dataclass
class Scene:
    inputs: np.ndarray  # (C_in, T)
    target: np.ndarray  # (C_out_total, T), SN3D up to order_out
    hints: HintFeatures
    z_present: bool


def load_training_scenes(manifest: DatasetManifest, cfg: TrainConfig, split: str = "train") -> list[Scene]:
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"dataset has no {split} scenes")
    scenes = []
    for e in entries:
        _, hints, gt = manifest.load_scene(e)
        scenes.append(scene_from_signal(gt, hints, cfg))
    return scenes


def scene_from_signal(gt: AmbisonicSignal, hints: HintFeatures, cfg: TrainConfig) -> Scene:
    if gt.order < cfg.order_out:
        raise ValueError(f"ground truth is order {gt.order}, training needs order {cfg.order_out}")
    gt = gt.to("SN3D").truncate_order(cfg.order_out)
    n_in = (cfg.order_in + 1) ** 2
    return Scene(gt.channels[:n_in], gt.channels, hints, gt.z_present)


@dataclass
class Batch:
    inputs: np.ndarray  # (B, C_in, T_crop)
    targets: np.ndarray  # (B, C_gen, T_crop)
    hints: list[HintFeatures]
    offsets: np.ndarray  # crop start times (s) on each hint timeline
    z_present: np.ndarray
    region: slice  # central target region inside the crop


def sample_batch(scenes: list[Scene], cfg: TrainConfig, model: SpatializerConfig, rng: np.random.Generator
                 ) -> Batch:
    """Draw windows with random rotations about the vertical axis.

    The network is frame-local, so only the central target region plus one
    analysis window of context on each side is materialized; every frame that
    touches the target lies inside this crop, as it would inside the full window.
    """
    fs = model.sample_rate
    half_window = int(round(cfg.window * fs / 2))
    n_target = int(round(cfg.target * fs))
    margin = model.stft.window_len
    crop_len = n_target + 2 * margin
    cols = model.grid[1]
    n_in = model.in_channels
    gen = model.generated
    inputs, targets, hints, offsets, zs = [], [], [], [], []
    for _ in range(cfg.batch):
        scene = scenes[int(rng.integers(len(scenes)))]
        T = scene.target.shape[1]
        if T < 2 * half_window:
            raise ValueError("scene is shorter than the training window")
        center = int(rng.integers(half_window, T - half_window + 1))
        start = center - n_target // 2 - margin
        seg = scene.target[:, start: start + crop_len]
        h = scene.hints
        if cfg.augment:
            shift = int(rng.integers(cols))
            R = rotation_matrix_z(model.order_out, 2 * np.pi * shift / cols)
            seg = R @ seg
            h = h.rolled(shift)
        inputs.append(seg[:n_in])
        targets.append(seg[gen])
        hints.append(h)
        offsets.append(start / fs)
        zs.append(scene.z_present)
    return Batch(np.stack(inputs), np.stack(targets), hints, np.array(offsets), np.array(zs),
                 slice(margin, margin + n_target))


def batch_loss(params: dict[str, ad.Tensor], batch: Batch, model: SpatializerConfig) -> ad.Tensor:
    """Mean over the batch of the total squared STFT error on the central region."""
    fe = front_end(model, batch.inputs, batch.hints if model.uses_hints else None, batch.offsets)
    res = forward_batch(params, fe)
    total = stft_loss(res.generated, batch.targets, model, batch.region, channel_weights(model, batch.z_present))
    return ad.mul(total, 1.0 / len(batch.hints))


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[float]
    config: TrainConfig
    model: SpatializerConfig
    seconds: float = 0.0
    checkpoints: list[Path] = field(default_factory=list)


def train(dataset: DatasetManifest | list[Scene], cfg: TrainConfig, params: dict[str, np.ndarray] | None = None,
          out_dir=None, sample_rate: int | None = None,
          progress: Callable[[int, float], None] | None = None) -> TrainResult:
    """Adam on randomly sampled, randomly rotated windows; deterministic for a fixed seed."""
    scenes = load_training_scenes(dataset, cfg) if isinstance(dataset, DatasetManifest) else list(dataset)
    if not scenes:
        raise ValueError("dataset is empty")
    if sample_rate is None:
        sample_rate = _infer_rate(dataset)
    model = cfg.model_config(sample_rate)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(model, cfg.seed) if params is None else {k: np.array(v) for k, v in params.items()}
    names = sorted(params)
    hyper, state = cfg.hyper(), AdamState()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    history, checkpoints = [], []
    t0 = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        batch = sample_batch(scenes, cfg, model, rng)
        tensors = as_tensors(params, requires_grad=True)
        loss = batch_loss(tensors, batch, model)
        grads = dict(zip(names, ad.grad(loss, [tensors[n] for n in names])))
        params, state = adam_step(params, grads, state, hyper)
        history.append(float(loss.value))
        if progress is not None:
            progress(it, history[-1])
        if out is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            path = out / f"checkpoint_{it:06d}.afg"
            save_checkpoint(path, params, _metadata(cfg, model, it, history))
            checkpoints.append(path)
    result = TrainResult(params, history, cfg, model, time.perf_counter() - t0, checkpoints)
    if out is not None:
        save_model(out / "model.afg", result)
        write_history(out / "loss.csv", history)
    return result


def _infer_rate(dataset) -> int:
    if isinstance(dataset, DatasetManifest):
        from ..wavio import read_wav

        return read_wav(dataset.resolve(dataset.scenes[0].gt)).sample_rate
    return 16000


def _metadata(cfg: TrainConfig, model: SpatializerConfig, iteration: int, history: list[float]) -> dict:
    return {"model": model.to_dict(), "train": cfg.to_dict(), "iteration": iteration,
            "loss": history[-1] if history else None}


def save_model(path, result: TrainResult) -> None:
    save_checkpoint(path, result.params, _metadata(result.config, result.model, len(result.history),
                                                  result.history))


def load_model(path) -> tuple[dict[str, np.ndarray], SpatializerConfig]:
    params, meta = load_checkpoint(path)
    if "model" not in meta:
        raise ValueError(f"{path}: checkpoint metadata lacks a model configuration")
    return params, SpatializerConfig.from_dict(meta["model"])


def write_history(path, history: list[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss"])
        for i, v in enumerate(history, 1):
            w.writerow([i, repr(v)])


def spatialize_scene(params, model: SpatializerConfig, scene_input, hints: HintFeatures | None) -> AmbisonicSignal:
    """Full-length inference for one test scene."""
    return forward(params, model, scene_input, hints if model.uses_hints else None)[2]
