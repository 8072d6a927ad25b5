import math

import numpy as np
import pytest

from stgdpm.data_pipeline import (
    RawAisRecord,
    SyntheticSpec,
    Trajectory,
    clean_anomalies,
    extract_scenes,
    generate_synthetic_scenes,
    load_scenes,
    parse_ais_csv,
    resample_trajectory,
    save_scenes,
    to_latlon,
    to_local_coords,
)


def rec(mmsi, t, lat, lon):
    return RawAisRecord(mmsi=str(mmsi), t=t, lat=lat, lon=lon)


# ---------------------------------------------------------------------------
# parse_ais_csv


def test_parse_basic_row(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("mmsi,timestamp,lat,lon\n123,1528416000,38.95,118.50\n")
    records, report = parse_ais_csv(p)
    assert len(records) == 1
    r = records[0]
    assert (r.mmsi, r.t, r.lat, r.lon) == ("123", 1528416000.0, 38.95, 118.50)
    assert report == {"valid": 1, "malformed": 0}


def test_parse_rejects_out_of_range_lat(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("mmsi,timestamp,lat,lon\n1,0,95.0,0.0\n1,0,10.0,0.0\n")
    records, report = parse_ais_csv(p)
    assert len(records) == 1
    assert report["malformed"] == 1


def test_parse_counts_malformed(tmp_path):
    p = tmp_path / "a.csv"
    rows = [
        "1,0,10.0,20.0",
        "1,10,oops,20.0",  # unparseable lat
        "1,20,10.1,20.0",
        "1,30,10.0,199.0",  # lon out of range
        "1,40,10.2,20.0",
    ]
    p.write_text("mmsi,timestamp,lat,lon\n" + "\n".join(rows) + "\n")
    records, report = parse_ais_csv(p)
    assert len(records) == 3
    assert report["malformed"] == 2


def test_parse_column_map(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("ID,TS,LAT,LON\n9,5,1.0,2.0\n")
    records, _ = parse_ais_csv(
        p, column_map={"mmsi": "ID", "timestamp": "TS", "lat": "LAT", "lon": "LON"}
    )
    assert records[0].mmsi == "9"


def test_parse_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_ais_csv(tmp_path / "missing.csv")
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="cannot map"):
        parse_ais_csv(p)
    p2 = tmp_path / "empty.csv"
    p2.write_text("mmsi,timestamp,lat,lon\n")
    with pytest.raises(ValueError, match="zero valid rows"):
        parse_ais_csv(p2)


# ---------------------------------------------------------------------------
# resample_trajectory


def test_resample_linear_midpoint():
    trajs = resample_trajectory([rec(1, 0, 0.0, 0.0), rec(1, 20, 0.0, 0.002)])
    assert len(trajs) == 1
    tr = trajs[0]
    assert list(tr.t) == [0.0, 10.0, 20.0]
    assert tr.lon[1] == pytest.approx(0.001, abs=1e-15)


def test_resample_gap_split():
    trajs = resample_trajectory([rec(1, 0, 0.0, 0.0), rec(1, 200, 0.0, 0.01)], gap_max=120)
    assert len(trajs) == 2
    assert len(trajs[0]) == 1 and len(trajs[1]) == 1


def test_resample_against_bruteforce_oracle():
    t_raw = [0.0, 7.0, 23.0, 31.0]
    lat_raw = [0.0, 0.7, 1.1, 2.0]
    lon_raw = [5.0, 5.2, 4.9, 5.5]
    records = [rec(1, t, la, lo) for t, la, lo in zip(t_raw, lat_raw, lon_raw)]
    (tr,) = resample_trajectory(records)
    assert list(tr.t) == [0.0, 10.0, 20.0, 30.0]

    def interp(tq, xs):
        # piecewise-linear oracle, independent of np.interp
        for i in range(len(t_raw) - 1):
            if t_raw[i] <= tq <= t_raw[i + 1]:
                w = (tq - t_raw[i]) / (t_raw[i + 1] - t_raw[i])
                return xs[i] * (1 - w) + xs[i + 1] * w
        raise AssertionError

    for j, tq in enumerate(tr.t):
        assert tr.lat[j] == pytest.approx(interp(tq, lat_raw), abs=1e-12)
        assert tr.lon[j] == pytest.approx(interp(tq, lon_raw), abs=1e-12)


def test_resample_idempotent():
    rng = np.random.default_rng(3)
    t = np.sort(rng.uniform(0, 300, 20))
    records = [rec(1, ti, float(rng.uniform(0, 1)), float(rng.uniform(0, 1))) for ti in t]
    (tr1,) = resample_trajectory(records)
    again = [rec(1, ti, la, lo) for ti, la, lo in zip(tr1.t, tr1.lat, tr1.lon)]
    (tr2,) = resample_trajectory(again)
    np.testing.assert_array_equal(tr1.t, tr2.t)
    np.testing.assert_array_equal(tr1.lat, tr2.lat)
    np.testing.assert_array_equal(tr1.lon, tr2.lon)


def test_resample_too_few_records():
    with pytest.raises(ValueError, match="at least 2"):
        resample_trajectory([rec(1, 0, 0, 0)])


# ---------------------------------------------------------------------------
# clean_anomalies


def _linear_traj(n=20, dlat=1e-5, dlon=2e-5):
    t = 10.0 * np.arange(n)
    return Trajectory(mmsi="1", t=t, lat=30.0 + dlat * np.arange(n), lon=100.0 + dlon * np.arange(n))


def test_clean_removes_teleport():
    tr = _linear_traj()
    spiked = Trajectory(mmsi="1", t=tr.t, lat=tr.lat.copy(), lon=tr.lon.copy())
    spiked.lat[10] += 100 * 100.0 / (6_371_000.0 * math.pi / 180.0)  # ~100 hm jump
    out = clean_anomalies(spiked)
    np.testing.assert_allclose(out.lat, tr.lat, atol=1e-12)
    np.testing.assert_allclose(out.lon, tr.lon, atol=1e-12)


def test_clean_noop_below_threshold():
    tr = _linear_traj()
    out = clean_anomalies(tr)
    assert out is tr


def test_clean_two_spikes_matches_reference():
    tr = _linear_traj(n=30)
    spiked = Trajectory(mmsi="1", t=tr.t, lat=tr.lat.copy(), lon=tr.lon.copy())
    bump = 20 * 100.0 / (6_371_000.0 * math.pi / 180.0)  # ~20 hm
    spiked.lat[7] += bump
    spiked.lon[19] -= bump
    out = clean_anomalies(spiked)
    # re-interpolated values must match the clean linear reference (~1e-9 hm)
    np.testing.assert_allclose(out.lat, tr.lat, atol=1e-14)
    np.testing.assert_allclose(out.lon, tr.lon, atol=1e-14)


# ---------------------------------------------------------------------------
# local projection


def test_local_origin_maps_to_zero():
    x, y = to_local_coords(38.95, 118.5, (38.95, 118.5))
    assert x == 0.0 and y == 0.0


def test_local_one_hm_north():
    scale_deg = 100.0 / (6_371_000.0 * math.pi / 180.0)  # degrees per hm
    x, y = to_local_coords(10.0 + scale_deg, 50.0, (10.0, 50.0))
    assert y == pytest.approx(1.0, abs=1e-12)
    assert x == pytest.approx(0.0, abs=1e-12)


def test_local_roundtrip():
    rng = np.random.default_rng(7)
    origin = (38.95, 118.5)
    lat = origin[0] + rng.uniform(-1, 1, 100)
    lon = origin[1] + rng.uniform(-1, 1, 100)
    x, y = to_local_coords(lat, lon, origin)
    lat2, lon2 = to_latlon(x, y, origin)
    x2, y2 = to_local_coords(lat2, lon2, origin)
    assert np.max(np.abs(x2 - x)) < 1e-9
    assert np.max(np.abs(y2 - y)) < 1e-9


# ---------------------------------------------------------------------------
# extract_scenes


def _grid_traj(mmsi, t0, n, lat0=30.0, lon0=100.0, dlat=1e-4):
    t = t0 + 10.0 * np.arange(n)
    return Trajectory(mmsi=mmsi, t=t, lat=lat0 + dlat * np.arange(n), lon=lon0 + 0 * t)


def test_extract_two_vessels_one_scene():
    trajs = [_grid_traj("a", 0, 25), _grid_traj("b", 0, 25, lat0=30.001)]
    ds = extract_scenes(trajs, t_obs=10, t_pred=15, stride=15)
    assert len(ds.scenes) == 1
    s = ds.scenes[0]
    assert s.n_vessels == 2
    assert s.x.shape == (2, 2, 10) and s.y.shape == (2, 2, 15)


def test_extract_single_vessel_goes_to_side_set():
    ds = extract_scenes([_grid_traj("a", 0, 25)], t_obs=10, t_pred=15, stride=15)
    assert len(ds.scenes) == 0
    assert len(ds.single_vessel) == 1


def test_extract_matches_bruteforce_enumeration():
    # staggered coverage: oracle enumerates every window and checks
    # completeness per vessel directly
    trajs = [
        _grid_traj("a", 0, 60),
        _grid_traj("b", 100, 30, lat0=30.002),
        _grid_traj("c", 300, 40, lat0=30.004),
    ]
    t_obs, t_pred, stride = 10, 5, 5
    ds = extract_scenes(trajs, t_obs=t_obs, t_pred=t_pred, stride=stride)

    window = t_obs + t_pred
    t_min = min(tr.t[0] for tr in trajs)
    t_max = max(tr.t[-1] for tr in trajs)
    n_steps = int(round((t_max - t_min) / 10.0)) + 1
    expected = []
    for s in range(0, n_steps - window + 1, stride):
        w_start = t_min + 10.0 * s
        w_end = w_start + 10.0 * (window - 1)
        members = [
            tr.mmsi for tr in trajs if tr.t[0] <= w_start and tr.t[-1] >= w_end
        ]
        if len(members) >= 2:
            expected.append((w_start, tuple(sorted(members))))
    got = [
        (sc.t0 - 10.0 * (t_obs - 1), tuple(sorted(sc.vessel_ids))) for sc in ds.scenes
    ]
    assert got == expected
    assert len(expected) > 0


def test_extract_origin_is_centroid_at_t0():
    trajs = [_grid_traj("a", 0, 25), _grid_traj("b", 0, 25, lat0=30.001)]
    ds = extract_scenes(trajs, t_obs=10, t_pred=15, stride=15)
    s = ds.scenes[0]
    # observed positions at the prediction instant average to (0, 0)
    np.testing.assert_allclose(s.x[:, :, -1].mean(axis=1), [0.0, 0.0], atol=1e-9)


def test_extract_empty_warns():
    with pytest.warns(UserWarning):
        ds = extract_scenes([_grid_traj("a", 0, 5)], t_obs=10, t_pred=15)
    assert len(ds.scenes) == 0


# ---------------------------------------------------------------------------
# synthetic scenes


def test_synthetic_constant_velocity_continues():
    spec = SyntheticSpec(family="constant_velocity", n_scenes=3, noise=0.0, speed=0.1)
    ds = generate_synthetic_scenes(spec, seed=5)
    for s in ds.scenes:
        full = np.concatenate([s.x, s.y], axis=2)
        steps = np.diff(full, axis=2)
        # every per-step displacement identical, magnitude = speed
        np.testing.assert_allclose(steps - steps[:, :, :1], 0.0, atol=1e-12)
        np.testing.assert_allclose(
            np.hypot(steps[0], steps[1]), 0.1, atol=1e-12
        )


def test_synthetic_deterministic():
    spec = SyntheticSpec(family="turn", n_scenes=4, noise=0.05)
    a = generate_synthetic_scenes(spec, seed=11)
    b = generate_synthetic_scenes(spec, seed=11)
    for sa, sb in zip(a.scenes, b.scenes):
        np.testing.assert_array_equal(sa.x, sb.x)
        np.testing.assert_array_equal(sa.y, sb.y)


def test_synthetic_crossing_closest_approach():
    spec = SyntheticSpec(
        family="crossing", n_scenes=1, n_vessels=2, noise=0.0, speed=0.1, crossing_offset=2.0
    )
    ds = generate_synthetic_scenes(spec, seed=0)
    s = ds.scenes[0]
    full = np.concatenate([s.x, s.y], axis=2)
    d = np.hypot(*(full[:, 0, :] - full[:, 1, :]))
    # analytic continuous-time closest approach of the two straight courses
    p0 = full[:, 0, 0] - full[:, 1, 0]
    v0 = (full[:, 0, 1] - full[:, 0, 0]) - (full[:, 1, 1] - full[:, 1, 0])
    t_star = -np.dot(p0, v0) / np.dot(v0, v0)
    d_star = np.linalg.norm(p0 + t_star * v0)
    assert min(d) == pytest.approx(d_star, abs=1e-9)
    assert d_star == pytest.approx(2.0, abs=1e-9)


def test_synthetic_unknown_family():
    with pytest.raises(ValueError, match="unknown scenario family"):
        generate_synthetic_scenes(SyntheticSpec(family="warp"), seed=0)


def test_scene_jsonl_roundtrip(tmp_path):
    ds = generate_synthetic_scenes(SyntheticSpec(family="give_way", n_scenes=2, noise=0.01), seed=2)
    path = tmp_path / "scenes.jsonl"
    save_scenes(ds, path)
    back = load_scenes(path)
    assert len(back.scenes) == 2
    for a, b in zip(ds.scenes, back.scenes):
        assert a.scene_id == b.scene_id
        np.testing.assert_allclose(a.x, b.x, atol=1e-12)
        np.testing.assert_allclose(a.y, b.y, atol=1e-12)
