"""Quantitative scoring against synthetic oracles, the loss-variant
ablation harness, and qualitative strip exports.

Translation error is the mean L1 distance between a generator's output and
the oracle's exact map, measured on held-out images; the identity map's
error on the same set serves as the baseline any real translator must beat.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image

from .data import SyntheticOracle, unit_to_bytes
from .networks import ModelState, forward
from .tensor import Tensor, no_grad
from .trainer import (
    NumericalDivergence,
    TrainingConfig,
    VARIANTS,
    init_state,
    train,
)


@dataclass
class MetricsReport:
    """Held-out errors for one trained model; None marks unavailable fields."""

    translation_error_xy: float | None
    translation_error_yx: float | None
    cycle_error_x: float
    cycle_error_y: float
    identity_baseline: float | None
    n_eval: int
    variant: str


def _samples_of(dataset) -> np.ndarray:
    arr = np.asarray(getattr(dataset, "samples", dataset), dtype=np.float32)
    if arr.ndim != 4:
        raise ValueError(f"expected [N,C,H,W] samples, got shape {arr.shape}")
    return arr


def _mean_l1(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(a - b)))


def evaluate(model: ModelState, eval_x, eval_y, oracle: SyntheticOracle | None = None,
             variant: str = "full") -> MetricsReport:
    """Score both directions in inference mode; the model is not modified.

    Without an oracle (real-photo domains) the translation errors and the
    identity baseline are omitted; cycle errors never need ground truth.
    """
    xs = _samples_of(eval_x)
    ys = _samples_of(eval_y)
    if len(xs) == 0 or len(ys) == 0:
        raise ValueError("evaluation sets must be non-empty")

    t_xy, t_yx, cyc_x, cyc_y, base = [], [], [], [], []
    with no_grad():
        for i in range(len(xs)):
            x = xs[i : i + 1]
            gx = forward(model.g_spec, model.g_params, Tensor(x))
            fgx = forward(model.f_spec, model.f_params, gx)
            cyc_x.append(_mean_l1(fgx.data, x))
            if oracle is not None:
                tx = oracle.apply(x)
                t_xy.append(_mean_l1(gx.data, tx))
                base.append(_mean_l1(x, tx))
        for j in range(len(ys)):
            y = ys[j : j + 1]
            fy = forward(model.f_spec, model.f_params, Tensor(y))
            gfy = forward(model.g_spec, model.g_params, fy)
            cyc_y.append(_mean_l1(gfy.data, y))
            if oracle is not None:
                t_yx.append(_mean_l1(fy.data, oracle.invert(y)))

    return MetricsReport(
        translation_error_xy=float(np.mean(t_xy)) if t_xy else None,
        translation_error_yx=float(np.mean(t_yx)) if t_yx else None,
        cycle_error_x=float(np.mean(cyc_x)),
        cycle_error_y=float(np.mean(cyc_y)),
        identity_baseline=float(np.mean(base)) if base else None,
        n_eval=len(xs) + len(ys),
        variant=variant,
    )


@dataclass
class AblationTable:
    """One row per loss variant; failed runs keep their row with the error."""

    rows: dict  # variant -> MetricsReport | None
    failed: dict  # variant -> error message, only for rows that are None
    models: dict | None = None  # variant -> trained ModelState, when kept


def run_ablation(base_cfg: TrainingConfig, train_x, train_y, eval_x, eval_y,
                 oracle: SyntheticOracle | None = None,
                 variants: tuple = VARIANTS, workers: int = 1,
                 keep_models: bool = False) -> AblationTable:
    """Train every variant from the same seed (bit-identical initial weights
    and data order) and score each on the shared held-out sets.

    A variant whose run diverges is recorded as a failed row; the remaining
    variants still run. With keep_models the trained networks ride along
    for later sample export.
    """
    rows: dict = {}
    failed: dict = {}
    models: dict = {}

    def run_one(variant: str):
        cfg = replace(base_cfg, variant=variant)
        state = init_state(cfg)
        train(state, train_x, train_y)
        if keep_models:
            models[variant] = state.model
        return evaluate(state.model, eval_x, eval_y, oracle, variant=variant)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {v: pool.submit(run_one, v) for v in variants}
            for v, fut in futures.items():
                try:
                    rows[v] = fut.result()
                except NumericalDivergence as e:
                    rows[v] = None
                    failed[v] = str(e)
    else:
        for v in variants:
            try:
                rows[v] = run_one(v)
            except NumericalDivergence as e:
                rows[v] = None
                failed[v] = str(e)
    return AblationTable(rows=rows, failed=failed, models=models if keep_models else None)


_REPORT_FIELDS = (
    "translation_error_xy", "translation_error_yx",
    "cycle_error_x", "cycle_error_y", "identity_baseline",
)


def _fmt(v) -> str:
    return "" if v is None else f"{v:.10g}"


def report_text(report: MetricsReport) -> str:
    """Flat `key = value` block; unavailable fields are omitted."""
    lines = [f"variant = {report.variant}", f"n_eval = {report.n_eval}"]
    for name in _REPORT_FIELDS:
        v = getattr(report, name)
        if v is not None:
            lines.append(f"{name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def report_csv(report: MetricsReport) -> str:
    """Header plus one data row; oracle-only columns drop out when absent."""
    fields = ["variant", "n_eval"] + [f for f in _REPORT_FIELDS if getattr(report, f) is not None]
    values = [report.variant, str(report.n_eval)] + [
        _fmt(getattr(report, f)) for f in _REPORT_FIELDS if getattr(report, f) is not None
    ]
    return ",".join(fields) + "\n" + ",".join(values) + "\n"


def ablation_csv(table: AblationTable) -> str:
    """Five data rows, one per variant; failed rows carry the status column."""
    header = ["variant", "status"] + list(_REPORT_FIELDS) + ["n_eval"]
    lines = [",".join(header)]
    for variant, report in table.rows.items():
        if report is None:
            lines.append(",".join([variant, "failed"] + [""] * len(_REPORT_FIELDS) + [""]))
        else:
            lines.append(",".join(
                [variant, "ok"] + [_fmt(getattr(report, f)) for f in _REPORT_FIELDS] + [str(report.n_eval)]
            ))
    return "\n".join(lines) + "\n"


def export_triptychs(model: ModelState, samples, out_dir: str, prefix: str = "triptych") -> list[str]:
    """Per sample, write a horizontal [input | translated | reconstructed]
    strip, plus one combined grid with a row per sample. Returns the paths."""
    xs = _samples_of(samples)
    if len(xs) == 0:
        raise ValueError("need at least one sample")
    os.makedirs(out_dir, exist_ok=True)

    def save_png(img_chw: np.ndarray, path: str):
        # write-then-rename so a crash never leaves a half-written image
        tmp = path + ".tmp"
        Image.fromarray(unit_to_bytes(img_chw).transpose(1, 2, 0), mode="RGB").save(tmp, format="PNG")
        os.replace(tmp, path)

    paths = []
    strips = []
    with no_grad():
        for i in range(len(xs)):
            x = xs[i : i + 1]
            gx = forward(model.g_spec, model.g_params, Tensor(x))
            fgx = forward(model.f_spec, model.f_params, gx)
            strip = np.concatenate([x[0], gx.data[0], fgx.data[0]], axis=2)  # [C, H, 3W]
            strips.append(strip)
            path = os.path.join(out_dir, f"{prefix}_{i:04d}.png")
            save_png(strip, path)
            paths.append(path)
    grid = np.concatenate(strips, axis=1)  # [C, n*H, 3W]
    grid_path = os.path.join(out_dir, f"{prefix}_grid.png")
    save_png(grid, grid_path)
    paths.append(grid_path)
    return paths
