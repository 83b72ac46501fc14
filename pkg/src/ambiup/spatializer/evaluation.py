"""Scoring trained models and the prior on a dataset split."""

from __future__ import annotations

import numpy as np

from ..audio import AmbisonicSignal
from ..metrics import EvalConfig, MetricReport, evaluate_pair
from ..scenes import DatasetManifest
from .model import SpatializerConfig, forward
from .prior import PriorCoefficients, prior_apply


def model_input(model: SpatializerConfig, mono, gt: AmbisonicSignal):
    if model.order_in == 0:
        return mono
    return gt.to("SN3D").truncate_order(model.order_in)


def reference(model_order: int, gt: AmbisonicSignal) -> AmbisonicSignal:
    return gt.to("SN3D").truncate_order(model_order)


def evaluate_model(params, model: SpatializerConfig, manifest: DatasetManifest, split: str = "test",
                   cfg: EvalConfig | None = None) -> MetricReport:
    """Mean metrics of the model's predictions over the scenes of ``split``."""
    reports = []
    for entry in manifest.split(split):
        mono, hints, gt = manifest.load_scene(entry)
        pred = forward(params, model, model_input(model, mono, gt), hints if model.uses_hints else None)[2]
        reports.append(evaluate_pair(pred, reference(model.order_out, gt), cfg))
    if not reports:
        raise ValueError(f"dataset has no {split} scenes")
    return MetricReport.mean(reports)


def evaluate_prior(coeffs: PriorCoefficients, manifest: DatasetManifest, split: str = "test",
                   cfg: EvalConfig | None = None) -> MetricReport:
    reports = []
    for entry in manifest.split(split):
        mono, _, gt = manifest.load_scene(entry)
        reports.append(evaluate_pair(prior_apply(mono, coeffs), reference(1, gt), cfg))
    if not reports:
        raise ValueError(f"dataset has no {split} scenes")
    return MetricReport.mean(reports)


def relative(a: MetricReport, b: MetricReport) -> dict[str, float]:
    """Ratios ``a / b`` per metric."""
    return {k: float(getattr(a, k) / getattr(b, k)) if getattr(b, k) > 0 else np.inf
            for k in ("stft_mse", "env", "emd")}
