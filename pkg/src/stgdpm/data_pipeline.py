"""AIS-style trajectory ingestion, cleaning, resampling and scene extraction.

Positions are carried as (lat, lon) degrees up to the point where a scene is
cut, then converted to planar local coordinates in hectometers (hm, 100 m)
via an equirectangular projection around a per-scene origin. All downstream
modules (graphs, model, metrics) work in hectometers.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
DEG_TO_RAD = math.pi / 180.0
DEFAULT_DT = 10.0
DEFAULT_GAP_MAX = 120.0
DEFAULT_V_MAX = 0.3  # hm/s, ~30 m/s; generous for commercial vessels

SCENE_FORMAT_VERSION = 1


@dataclass
class RawAisRecord:
    """One decoded AIS position report."""

    mmsi: str
    t: float
    lat: float
    lon: float

    def is_valid(self) -> bool:
        return (
            math.isfinite(self.t)
            and math.isfinite(self.lat)
            and math.isfinite(self.lon)
            and -90.0 <= self.lat <= 90.0
            and -180.0 <= self.lon <= 180.0
        )


@dataclass
class Trajectory:
    """Per-vessel track on a uniform time grid.

    ``t`` holds absolute timestamps (seconds), ``lat``/``lon`` degrees.
    After :func:`resample_trajectory` the grid spacing is exactly ``dt``.
    """

    mmsi: str
    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class Scene:
    """One fixed-length interaction window in local hm coordinates.

    ``x`` has shape (F, V, T_obs) and ``y`` shape (F, V, T_pred) with F = 2
    (east, north). ``origin`` is the (lat, lon) of the local frame, placed at
    the centroid of the observed positions at the prediction instant ``t0``.
    """

    vessel_ids: list
    x: np.ndarray
    y: np.ndarray
    origin: tuple
    t0: float
    scene_id: str = ""

    @property
    def n_vessels(self) -> int:
        return self.x.shape[1]

    @property
    def t_obs(self) -> int:
        return self.x.shape[2]

    @property
    def t_pred(self) -> int:
        return self.y.shape[2]

    def validate(self) -> None:
        if self.x.shape[0] != 2 or self.y.shape[0] != 2:
            raise ValueError(f"scene arrays must have F=2, got {self.x.shape[0]}")
        if self.x.shape[1] != self.y.shape[1]:
            raise ValueError("x and y disagree on vessel count")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("scene contains non-finite coordinates")


@dataclass
class SceneDataset:
    """A collection of scenes plus the single-vessel leftovers."""

    scenes: list = field(default_factory=list)
    single_vessel: list = field(default_factory=list)
    provenance: str = "ais"
    split: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.scenes)


# ---------------------------------------------------------------------------
# Parsing


def parse_ais_csv(path, column_map=None):
    """Read AIS position records from a CSV file.

    ``column_map`` maps the canonical field names (mmsi, timestamp, lat, lon)
    to the column names used in the file. Returns ``(records, report)`` where
    the report counts malformed rows. Raises on a missing file, unmappable
    columns, or zero valid rows.
    """
    columns = {"mmsi": "mmsi", "timestamp": "timestamp", "lat": "lat", "lon": "lon"}
    if column_map:
        columns.update(column_map)

    records = []
    malformed = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [v for v in columns.values() if v not in header]
        if missing:
            raise ValueError(f"cannot map columns {missing} in header {header}")
        for row in reader:
            try:
                rec = RawAisRecord(
                    mmsi=str(row[columns["mmsi"]]).strip(),
                    t=float(row[columns["timestamp"]]),
                    lat=float(row[columns["lat"]]),
                    lon=float(row[columns["lon"]]),
                )
            except (TypeError, ValueError):
                malformed += 1
                continue
            if not rec.mmsi or not rec.is_valid():
                malformed += 1
                continue
            records.append(rec)

    if not records:
        raise ValueError(f"zero valid rows in {path} ({malformed} malformed)")
    return records, {"valid": len(records), "malformed": malformed}


# ---------------------------------------------------------------------------
# Resampling and cleaning


def resample_trajectory(records, dt=DEFAULT_DT, gap_max=DEFAULT_GAP_MAX):
    """Resample one vessel's raw records onto a uniform ``dt`` grid.

    The grid is anchored at absolute multiples of ``dt`` so trajectories from
    different vessels share grid times. Values are linearly interpolated
    between bracketing raw points; there is no extrapolation. Gaps longer
    than ``gap_max`` split the data into separate trajectories. Returns a
    list of :class:`Trajectory` (possibly empty segments are dropped only
    when they contain no grid point at all).
    """
    if len(records) < 2:
        raise ValueError(f"need at least 2 records, got {len(records)}")
    recs = sorted(records, key=lambda r: r.t)
    mmsi = recs[0].mmsi

    # split into segments at gaps
    segments = [[recs[0]]]
    for r in recs[1:]:
        if r.t - segments[-1][-1].t > gap_max:
            segments.append([r])
        else:
            segments[-1].append(r)

    out = []
    for seg in segments:
        t_raw = np.array([r.t for r in seg], dtype=float)
        # collapse duplicate timestamps, keep first
        keep = np.concatenate([[True], np.diff(t_raw) > 0])
        t_raw = t_raw[keep]
        lat_raw = np.array([r.lat for r in seg], dtype=float)[keep]
        lon_raw = np.array([r.lon for r in seg], dtype=float)[keep]

        t0 = math.ceil(t_raw[0] / dt) * dt
        if t0 > t_raw[-1]:
            continue
        n = int(math.floor((t_raw[-1] - t0) / dt)) + 1
        grid = t0 + dt * np.arange(n)
        out.append(
            Trajectory(
                mmsi=mmsi,
                t=grid,
                lat=np.interp(grid, t_raw, lat_raw),
                lon=np.interp(grid, t_raw, lon_raw),
            )
        )
    return out


def clean_anomalies(traj, v_max=DEFAULT_V_MAX):
    """Remove speed-anomalous points and refill them by interpolation.

    A point implying an instantaneous speed above ``v_max`` (hm/s) on its
    adjacent segments is removed greedily (worst offender first) and the
    grid value re-interpolated from the surviving neighbors. The time grid
    is preserved.
    """
    if len(traj) < 3:
        return traj
    t = traj.t.copy()
    lat = traj.lat.copy()
    lon = traj.lon.copy()
    origin = (float(np.mean(lat)), float(np.mean(lon)))

    alive = np.ones(len(t), dtype=bool)

    def speeds(idx):
        x, y = to_local_coords(lat[idx], lon[idx], origin)
        d = np.hypot(np.diff(x), np.diff(y))
        return d / np.diff(t[idx])

    for _ in range(len(t)):
        idx = np.flatnonzero(alive)
        if len(idx) < 3:
            break
        v = speeds(idx)
        if not np.any(v > v_max):
            break
        # excess attributed to each interior point = sum of adjacent segment excesses
        excess = np.maximum(v - v_max, 0.0)
        score = np.zeros(len(idx))
        score[:-1] += excess
        score[1:] += excess
        # never drop the endpoints unless only their segment offends
        score[0] *= 0.5
        score[-1] *= 0.5
        alive[idx[np.argmax(score)]] = False

    if np.all(alive):
        return traj
    idx = np.flatnonzero(alive)
    lat = np.interp(t, t[idx], lat[idx])
    lon = np.interp(t, t[idx], lon[idx])
    return Trajectory(mmsi=traj.mmsi, t=t, lat=lat, lon=lon)


# ---------------------------------------------------------------------------
# Local projection


def to_local_coords(lat, lon, origin):
    """Equirectangular projection of (lat, lon) degrees to (x, y) hectometers.

    x points east, y north; the scale factor cos(lat0) is frozen at the
    origin latitude, adequate at harbor scale.
    """
    lat0, lon0 = origin
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    scale = EARTH_RADIUS_M * DEG_TO_RAD / 100.0
    x = scale * math.cos(lat0 * DEG_TO_RAD) * (lon - lon0)
    y = scale * (lat - lat0)
    return x, y


def to_latlon(x, y, origin):
    """Inverse of :func:`to_local_coords`."""
    lat0, lon0 = origin
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = EARTH_RADIUS_M * DEG_TO_RAD / 100.0
    lat = lat0 + y / scale
    lon = lon0 + x / (scale * math.cos(lat0 * DEG_TO_RAD))
    return lat, lon


# ---------------------------------------------------------------------------
# Scene extraction


def extract_scenes(trajectories, t_obs=10, t_pred=15, stride=None, dt=DEFAULT_DT):
    """Cut fixed-length multi-vessel windows out of resampled trajectories.

    A window spans ``t_obs + t_pred`` grid steps; a vessel belongs to a
    window iff it has data at every step. Windows with >= 2 complete vessels
    become interaction scenes; single-vessel windows are kept separately.
    The local frame origin is the centroid of the observed positions at the
    prediction instant (last observed step).
    """
    if stride is None:
        stride = t_pred
    window = t_obs + t_pred

    trajs = [tr for tr in trajectories if len(tr) >= 2]
    if not trajs:
        warnings.warn("no usable trajectories; empty dataset")
        return SceneDataset(provenance="ais")

    t_min = min(tr.t[0] for tr in trajs)
    t_max = max(tr.t[-1] for tr in trajs)
    # index trajectories by start offset on the shared grid
    ds = SceneDataset(provenance="ais")
    n_steps = int(round((t_max - t_min) / dt)) + 1
    if n_steps < window:
        warnings.warn("no window fits the data; empty dataset")
        return ds

    starts = range(0, n_steps - window + 1, stride)
    scene_idx = 0
    for s in starts:
        w_t = t_min + dt * (s + np.arange(window))
        members = []
        coords = []
        for tr in trajs:
            i0 = int(round((w_t[0] - tr.t[0]) / dt))
            if i0 < 0 or i0 + window > len(tr):
                continue
            if abs(tr.t[i0] - w_t[0]) > 1e-6:
                continue
            members.append(tr.mmsi)
            coords.append((tr.lat[i0 : i0 + window], tr.lon[i0 : i0 + window]))
        if not members:
            continue
        lat_w = np.stack([c[0] for c in coords])  # V x window
        lon_w = np.stack([c[1] for c in coords])
        t0 = float(w_t[t_obs - 1])
        origin = (float(np.mean(lat_w[:, t_obs - 1])), float(np.mean(lon_w[:, t_obs - 1])))
        x_e, y_n = to_local_coords(lat_w, lon_w, origin)
        pos = np.stack([x_e, y_n])  # 2 x V x window
        scene = Scene(
            vessel_ids=list(members),
            x=pos[:, :, :t_obs].copy(),
            y=pos[:, :, t_obs:].copy(),
            origin=origin,
            t0=t0,
            scene_id=f"ais-{scene_idx:06d}",
        )
        scene.validate()
        scene_idx += 1
        if len(members) >= 2:
            ds.scenes.append(scene)
        else:
            ds.single_vessel.append(scene)

    if not ds.scenes and not ds.single_vessel:
        warnings.warn("no window with a complete vessel; empty dataset")
    return ds


# ---------------------------------------------------------------------------
# Synthetic scenes

SCENARIO_FAMILIES = ("constant_velocity", "turn", "crossing", "give_way")


@dataclass
class SyntheticSpec:
    """Configuration of a synthetic scenario family.

    Speeds are in hm per grid step; ``noise`` is the std of the Gaussian
    position jitter in hm. ``origin`` anchors the fictitious local frames.
    """

    family: str = "constant_velocity"
    n_scenes: int = 8
    n_vessels: int = 2
    t_obs: int = 10
    t_pred: int = 15
    noise: float = 0.0
    speed: float = 0.1
    turn_rate: float = 0.1  # rad per step, turn / give_way families
    crossing_offset: float = 2.0  # hm lateral separation at closest approach
    origin: tuple = (38.95, 117.75)


def _clean_paths(spec, rng):
    """Closed-form vessel paths for one scene, shape (2, V, T_obs+T_pred)."""
    total = spec.t_obs + spec.t_pred
    steps = np.arange(total) - (spec.t_obs - 1)  # 0 at the prediction instant
    v = spec.n_vessels
    pos = np.zeros((2, v, total))

    if spec.family == "constant_velocity":
        for i in range(v):
            heading = rng.uniform(0, 2 * math.pi)
            p0 = rng.uniform(-2, 2, size=2)
            vel = spec.speed * np.array([math.cos(heading), math.sin(heading)])
            pos[:, i, :] = p0[:, None] + vel[:, None] * steps[None, :]
    elif spec.family == "turn":
        for i in range(v):
            heading = rng.uniform(0, 2 * math.pi)
            p0 = rng.uniform(-2, 2, size=2)
            r = spec.speed / spec.turn_rate
            phi = heading + spec.turn_rate * steps
            pos[0, i, :] = p0[0] + r * (np.sin(phi) - math.sin(heading))
            pos[1, i, :] = p0[1] - r * (np.cos(phi) - math.cos(heading))
    elif spec.family == "crossing":
        # perpendicular courses; closest approach exactly at the prediction
        # instant (step 0) with miss distance = crossing_offset
        h = spec.crossing_offset / math.sqrt(2.0)
        pos[0, 0, :] = spec.speed * steps
        pos[1, 0, :] = -h
        pos[0, 1, :] = h
        pos[1, 1, :] = spec.speed * steps
        for i in range(2, v):
            heading = rng.uniform(0, 2 * math.pi)
            p0 = rng.uniform(2, 4, size=2) * rng.choice([-1.0, 1.0], size=2)
            vel = spec.speed * np.array([math.cos(heading), math.sin(heading)])
            pos[:, i, :] = p0[:, None] + vel[:, None] * steps[None, :]
    elif spec.family == "give_way":
        # vessel 0 stands on; vessel 1 turns starboard and slows after t0
        pos[0, 0, :] = spec.speed * steps
        pos[1, 0, :] = -spec.crossing_offset / 2
        heading = math.pi / 2
        p = np.array([spec.crossing_offset, -spec.speed * (spec.t_obs - 1) * 1.0])
        cur = heading
        sp = spec.speed
        for j, s in enumerate(steps):
            pos[:, 1, j] = p
            if s >= 0:
                cur -= spec.turn_rate
                sp = max(0.4 * spec.speed, sp * 0.93)
            p = p + sp * np.array([math.cos(cur), math.sin(cur)])
        for i in range(2, v):
            p0 = rng.uniform(-3, 3, size=2)
            heading_i = rng.uniform(0, 2 * math.pi)
            vel = spec.speed * np.array([math.cos(heading_i), math.sin(heading_i)])
            pos[:, i, :] = p0[:, None] + vel[:, None] * steps[None, :]
    else:
        raise ValueError(f"unknown scenario family: {spec.family!r}")
    return pos


def generate_synthetic_scenes(spec, seed=0):
    """Generate a deterministic synthetic :class:`SceneDataset`.

    Trajectories follow closed-form kinematics plus Gaussian position noise;
    ``y`` stores the (noisy) future continuation used as ground truth.
    """
    if spec.family not in SCENARIO_FAMILIES:
        raise ValueError(f"unknown scenario family: {spec.family!r}")
    rng = np.random.default_rng(seed)
    ds = SceneDataset(provenance="synthetic")
    total = spec.t_obs + spec.t_pred
    for s in range(spec.n_scenes):
        pos = _clean_paths(spec, rng)
        if spec.noise > 0:
            pos = pos + rng.normal(0.0, spec.noise, size=pos.shape)
        # center the frame on the observed centroid at the prediction instant
        centroid = pos[:, :, spec.t_obs - 1].mean(axis=1)
        pos = pos - centroid[:, None, None]
        o_lat, o_lon = to_latlon(centroid[0], centroid[1], spec.origin)
        scene = Scene(
            vessel_ids=[f"syn{s:03d}-{i}" for i in range(spec.n_vessels)],
            x=pos[:, :, : spec.t_obs].copy(),
            y=pos[:, :, spec.t_obs :].copy(),
            origin=(float(o_lat), float(o_lon)),
            t0=float(s * total * DEFAULT_DT),
            scene_id=f"{spec.family}-{s:04d}",
        )
        scene.validate()
        ds.scenes.append(scene)
    return ds


# ---------------------------------------------------------------------------
# Scene (de)serialization: JSON-lines, one scene per line


def scene_to_dict(scene):
    return {
        "version": SCENE_FORMAT_VERSION,
        "id": scene.scene_id,
        "t_obs": scene.t_obs,
        "t_pred": scene.t_pred,
        "t0": scene.t0,
        "origin": [scene.origin[0], scene.origin[1]],
        "vessels": list(scene.vessel_ids),
        "x": scene.x.tolist(),
        "y": scene.y.tolist(),
    }


def scene_from_dict(d):
    if d.get("version") != SCENE_FORMAT_VERSION:
        raise ValueError(f"unsupported scene format version: {d.get('version')}")
    scene = Scene(
        vessel_ids=list(d["vessels"]),
        x=np.asarray(d["x"], dtype=float),
        y=np.asarray(d["y"], dtype=float),
        origin=(float(d["origin"][0]), float(d["origin"][1])),
        t0=float(d.get("t0", 0.0)),
        scene_id=str(d.get("id", "")),
    )
    scene.validate()
    return scene


def save_scenes(dataset, path):
    with open(path, "w") as fh:
        for scene in dataset.scenes:
            fh.write(json.dumps(scene_to_dict(scene), separators=(",", ":")) + "\n")


def load_scenes(path, provenance="ais"):
    scenes = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                scenes.append(scene_from_dict(json.loads(line)))
    return SceneDataset(scenes=scenes, provenance=provenance)
