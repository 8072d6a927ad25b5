"""Displacement-error metrics, best-of-N evaluation, and result export.

All metrics are computed in hectometers on local-frame arrays of shape
(F, V, T_pred). GeoJSON export maps coordinates back to lat/lon through the
scene's local frame.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stgdpm.data_pipeline import to_latlon


@dataclass
class Prediction:
    """Sampled futures for one scene plus its ground truth."""

    scene_id: str
    samples: np.ndarray  # (N, F, V, T_pred)
    truth: np.ndarray  # (F, V, T_pred)
    origin: tuple = (0.0, 0.0)
    vessel_ids: list = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


@dataclass
class MetricReport:
    """Aggregated ADE/FDE per horizon, averaged over all vessels."""

    per_horizon: dict  # t_pred -> {"ade": float, "fde": float}
    n_scenes: int
    n_samples: int
    config_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "horizons": {str(k): v for k, v in sorted(self.per_horizon.items())},
            "n_scenes": self.n_scenes,
            "n_samples": self.n_samples,
            "config_hash": self.config_hash,
        }


def ade(pred, truth):
    """Per-vessel mean displacement over all predicted steps, hm. Shape (V,)."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    d = np.sqrt(((pred - truth) ** 2).sum(axis=0))  # (V, T)
    return d.mean(axis=1)


def fde(pred, truth):
    """Per-vessel displacement at the final predicted step, hm. Shape (V,)."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    d = np.sqrt(((pred[:, :, -1] - truth[:, :, -1]) ** 2).sum(axis=0))
    return d


def best_of_n_evaluate(predictions, config_hash="", joint_best=False):
    """Best-of-N ADE/FDE averaged over every vessel in every scene.

    By default ADE and FDE are minimized independently over the samples;
    with ``joint_best`` the single sample minimizing ADE supplies both.
    """
    if not predictions:
        raise ValueError("no predictions to evaluate")
    per_h = {}
    for p in predictions:
        if p.n_samples < 1:
            raise ValueError(f"prediction {p.scene_id} has no samples")
        t_pred = p.truth.shape[2]
        ades = np.stack([ade(s, p.truth) for s in p.samples])  # (N, V)
        fdes = np.stack([fde(s, p.truth) for s in p.samples])
        if joint_best:
            pick = ades.argmin(axis=0)
            best_a = ades[pick, np.arange(ades.shape[1])]
            best_f = fdes[pick, np.arange(fdes.shape[1])]
        else:
            best_a = ades.min(axis=0)
            best_f = fdes.min(axis=0)
        bucket = per_h.setdefault(t_pred, {"ade": [], "fde": []})
        bucket["ade"].extend(best_a.tolist())
        bucket["fde"].extend(best_f.tolist())

    report = {
        h: {"ade": float(np.mean(v["ade"])), "fde": float(np.mean(v["fde"]))}
        for h, v in per_h.items()
    }
    return MetricReport(
        per_horizon=report,
        n_scenes=len(predictions),
        n_samples=max(p.n_samples for p in predictions),
        config_hash=config_hash,
    )


def constant_velocity_baseline(scene):
    """Extrapolate each vessel linearly from its last two observed points."""
    x = scene.x
    if x.shape[2] < 2:
        raise ValueError("need T_obs >= 2 for the constant-velocity baseline")
    last = x[:, :, -1]
    vel = x[:, :, -1] - x[:, :, -2]
    steps = np.arange(1, scene.t_pred + 1)
    return last[:, :, None] + vel[:, :, None] * steps[None, None, :]


# ---------------------------------------------------------------------------
# Export

CSV_HEADER = ["scene_id", "vessel", "horizon", "ade", "fde"]


def _linestring(coords_xy, origin):
    lat, lon = to_latlon(coords_xy[0], coords_xy[1], origin)
    return {
        "type": "LineString",
        "coordinates": [[float(lo), float(la)] for lo, la in zip(lon, lat)],
    }


def export_geojson(prediction, path):
    """Write one scene's samples and ground truth as GeoJSON LineStrings."""
    features = []
    n, _, v, _ = prediction.samples.shape
    ids = prediction.vessel_ids or [str(i) for i in range(v)]
    for vi in range(v):
        features.append(
            {
                "type": "Feature",
                "properties": {"kind": "truth", "vessel": ids[vi]},
                "geometry": _linestring(prediction.truth[:, vi, :], prediction.origin),
            }
        )
        for si in range(n):
            features.append(
                {
                    "type": "Feature",
                    "properties": {"kind": "sample", "vessel": ids[vi], "sample": si},
                    "geometry": _linestring(
                        prediction.samples[si, :, vi, :], prediction.origin
                    ),
                }
            )
    doc = {"type": "FeatureCollection", "features": features}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def export_results(predictions, out_dir, formats=("csv", "json"), config_hash=""):
    """Write per-scene metrics (CSV), the aggregate report (JSON), and
    optionally per-scene GeoJSON files. Returns the list of paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if "csv" in formats:
        path = out_dir / "metrics.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for p in predictions:
                t_pred = p.truth.shape[2]
                ades = np.stack([ade(s, p.truth) for s in p.samples]).min(axis=0)
                fdes = np.stack([fde(s, p.truth) for s in p.samples]).min(axis=0)
                ids = p.vessel_ids or [str(i) for i in range(p.truth.shape[1])]
                for vi, vid in enumerate(ids):
                    w.writerow([p.scene_id, vid, t_pred, f"{ades[vi]:.9f}", f"{fdes[vi]:.9f}"])
        written.append(path)

    if "json" in formats:
        report = best_of_n_evaluate(predictions, config_hash=config_hash)
        path = out_dir / "report.json"
        with open(path, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        written.append(path)

    if "geojson" in formats:
        for p in predictions:
            path = out_dir / f"{p.scene_id or 'scene'}.geojson"
            export_geojson(p, path)
            written.append(path)

    return written
