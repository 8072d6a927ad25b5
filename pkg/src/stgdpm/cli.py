"""Command-line entry point: preprocess, synth, train, predict, evaluate, ablate.

Exit codes: 0 success, 2 usage/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from collections import defaultdict

import numpy as np

from stgdpm import evaluation
from stgdpm.config import ConfigError, config_hash, load_config
from stgdpm.data_pipeline import (
    SyntheticSpec,
    clean_anomalies,
    extract_scenes,
    generate_synthetic_scenes,
    load_scenes,
    parse_ais_csv,
    resample_trajectory,
    save_scenes,
    scene_to_dict,
)
from stgdpm.denoiser import DenoiserConfig
from stgdpm.diffusion import make_noise_schedule, sample_trajectories
from stgdpm.graph import build_adjacency, normalize_adjacency
from stgdpm.training import (
    CheckpointError,
    TrainConfig,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _load_cfg(path):
    try:
        cfg = load_config(path)
    except (ConfigError, FileNotFoundError) as e:
        raise CliError(str(e))
    return cfg, config_hash(cfg)


def _train_config(cfg, seed=None):
    d = cfg["denoiser"]
    den = DenoiserConfig(
        c=d["c"],
        levels=d["levels"],
        blocks_per_level=d["blocks_per_level"],
        t_obs=cfg["data"]["t_obs"],
        t_pred=cfg["data"]["t_pred"],
        disable_unet=d["disable_unet"],
        disable_dgc=d["disable_dgc"],
        disable_residual=d["disable_residual"],
    )
    t = cfg["training"]
    return TrainConfig(
        batch_size=t["batch_size"],
        epochs=t["epochs"],
        lr_init=t["lr_init"],
        lr_peak=t["lr_peak"],
        lr_final=t["lr_final"],
        warmup_frac=t["warmup_frac"],
        max_steps=t["max_steps"],
        seed=cfg["seed"] if seed is None else seed,
        k_steps=cfg["schedule"]["k"],
        beta_1=cfg["schedule"]["beta_1"],
        beta_k=cfg["schedule"]["beta_k"],
        tau=cfg["graph"]["tau"],
        denoiser=den,
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_preprocess(args):
    cfg, h = _load_cfg(args.config)
    data = cfg["data"]
    try:
        records, report = parse_ais_csv(args.input, column_map=data["column_map"])
    except (FileNotFoundError, ValueError) as e:
        raise CliError(str(e))

    by_vessel = defaultdict(list)
    for r in records:
        by_vessel[r.mmsi].append(r)

    trajectories = []
    skipped = 0
    for mmsi, recs in sorted(by_vessel.items()):
        if len(recs) < 2:
            skipped += 1
            continue
        for tr in resample_trajectory(recs, dt=data["dt"], gap_max=data["gap_max"]):
            trajectories.append(clean_anomalies(tr, v_max=data["v_max"]))

    ds = extract_scenes(
        trajectories,
        t_obs=data["t_obs"],
        t_pred=data["t_pred"],
        stride=data["stride"],
        dt=data["dt"],
    )
    _write_scenes(ds, args.out, h)
    max_v = max((s.n_vessels for s in ds.scenes), default=0)
    print(
        f"records={report['valid']} malformed={report['malformed']} "
        f"skipped_vessels={skipped} trajectories={len(trajectories)} "
        f"interaction_scenes={len(ds.scenes)} single_vessel={len(ds.single_vessel)} "
        f"max_vessels_per_scene={max_v}"
    )


def _write_scenes(ds, path, h):
    with open(path, "w") as fh:
        for scene in ds.scenes:
            d = scene_to_dict(scene)
            d["config_hash"] = h
            fh.write(json.dumps(d, sort_keys=True, separators=(",", ":")) + "\n")


def cmd_synth(args):
    cfg, h = _load_cfg(args.config)
    s = cfg["synth"]
    spec = SyntheticSpec(
        family=args.family or s["family"],
        n_scenes=s["n_scenes"],
        n_vessels=s["n_vessels"],
        t_obs=cfg["data"]["t_obs"],
        t_pred=cfg["data"]["t_pred"],
        noise=s["noise"],
        speed=s["speed"],
        turn_rate=s["turn_rate"],
        crossing_offset=s["crossing_offset"],
    )
    try:
        ds = generate_synthetic_scenes(spec, seed=args.seed if args.seed is not None else cfg["seed"])
    except ValueError as e:
        raise CliError(str(e))
    _write_scenes(ds, args.out, h)
    print(f"family={spec.family} scenes={len(ds.scenes)} vessels={spec.n_vessels}")


def _load_scene_file(path, expect_hash=None):
    try:
        with open(path) as fh:
            lines = [json.loads(l) for l in fh if l.strip()]
    except FileNotFoundError as e:
        raise CliError(str(e))
    except json.JSONDecodeError as e:
        raise CliError(f"malformed scene file {path}: {e}")
    if not lines:
        raise CliError(f"no scenes in {path}")
    hashes = {d.get("config_hash") for d in lines if d.get("config_hash")}
    if expect_hash and hashes and hashes != {expect_hash}:
        raise CliError(
            f"config hash mismatch: scenes carry {sorted(hashes)}, expected {expect_hash}"
        )
    from stgdpm.data_pipeline import SceneDataset, scene_from_dict

    return SceneDataset(scenes=[scene_from_dict(d) for d in lines])


def cmd_train(args):
    cfg, h = _load_cfg(args.config)
    ds = _load_scene_file(args.scenes, expect_hash=h if args.check_hash else None)
    tc = _train_config(cfg, seed=args.seed)
    try:
        ckpt = train(ds, tc, log_path=args.log)
    except (ValueError, FloatingPointError) as e:
        raise CliError(str(e), code=EXIT_NUMERICAL)
    ckpt.config_hash = h
    save_checkpoint(ckpt, args.out)
    print(f"checkpoint={args.out} steps={ckpt.step} config_hash={h}")


def cmd_predict(args):
    try:
        ckpt = load_checkpoint(args.ckpt)
    except (CheckpointError, FileNotFoundError) as e:
        raise CliError(str(e))
    ds = _load_scene_file(args.scenes, expect_hash=ckpt.config_hash or None)
    den = ckpt.config.denoiser
    for s in ds.scenes:
        if s.t_obs != den.t_obs or s.t_pred != den.t_pred:
            raise CliError(
                f"scene {s.scene_id} has T_obs={s.t_obs}, T_pred={s.t_pred}; "
                f"checkpoint expects T_obs={den.t_obs}, T_pred={den.t_pred}"
            )
    model = model_from_checkpoint(ckpt)
    fn = model.as_sampler_fn()
    schedule = ckpt.schedule
    with open(args.out, "w") as fh:
        for i, s in enumerate(ds.scenes):
            a_hat = normalize_adjacency(build_adjacency(s, tau=ckpt.config.tau)).a_hat
            seed = args.seed + i
            rng = np.random.default_rng(seed)
            try:
                samples = sample_trajectories(
                    fn, s.x, a_hat, schedule, n_samples=args.n, rng=rng, t_pred=s.t_pred
                )
            except FloatingPointError as e:
                raise CliError(str(e), code=EXIT_NUMERICAL)
            fh.write(
                json.dumps(
                    {
                        "scene_id": s.scene_id,
                        "seed": seed,
                        "n": args.n,
                        "origin": [s.origin[0], s.origin[1]],
                        "vessels": list(s.vessel_ids),
                        "truth": s.y.tolist(),
                        "samples": samples.tolist(),
                        "config_hash": ckpt.config_hash,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )
    print(f"predictions={args.out} scenes={len(ds.scenes)} n={args.n}")


def _load_predictions(path):
    try:
        with open(path) as fh:
            lines = [json.loads(l) for l in fh if l.strip()]
    except FileNotFoundError as e:
        raise CliError(str(e))
    except json.JSONDecodeError as e:
        raise CliError(f"malformed predictions file {path}: {e}")
    if not lines:
        raise CliError(f"no predictions in {path}")
    hashes = {d.get("config_hash") for d in lines if d.get("config_hash")}
    if len(hashes) > 1:
        raise CliError(f"predictions mix config hashes: {sorted(hashes)}")
    preds = [
        evaluation.Prediction(
            scene_id=d["scene_id"],
            samples=np.asarray(d["samples"], dtype=float),
            truth=np.asarray(d["truth"], dtype=float),
            origin=tuple(d["origin"]),
            vessel_ids=list(d["vessels"]),
        )
        for d in lines
    ]
    return preds, (hashes.pop() if hashes else "")


def cmd_evaluate(args):
    preds, h = _load_predictions(args.preds)
    report = evaluation.best_of_n_evaluate(preds, config_hash=h, joint_best=args.joint_best)
    doc = report.to_dict()
    doc["n"] = report.n_samples
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    if args.geojson:
        evaluation.export_results(preds, args.geojson, formats=("csv", "geojson"), config_hash=h)
    for horizon, m in sorted(report.per_horizon.items()):
        print(f"horizon={horizon} ade={m['ade']:.6f} fde={m['fde']:.6f}")


ABLATION_VARIANTS = {
    "none": dict(disable_unet=True, disable_dgc=True, disable_residual=True),
    "unet": dict(disable_unet=False, disable_dgc=True, disable_residual=True),
    "unet+dgc": dict(disable_unet=False, disable_dgc=False, disable_residual=True),
    "unet+dgc+res": dict(disable_unet=False, disable_dgc=False, disable_residual=False),
}


def cmd_ablate(args):
    cfg, h = _load_cfg(args.config)
    if args.toggle:
        unknown = [t for t in args.toggle.split(",") if t not in ABLATION_VARIANTS]
        if unknown:
            raise CliError(f"unknown toggle(s): {unknown}; choose from {list(ABLATION_VARIANTS)}")
        variants = [(t, ABLATION_VARIANTS[t], cfg["graph"]["tau"]) for t in args.toggle.split(",")]
    elif args.tau_sweep:
        taus = []
        for tok in args.tau_sweep.split(","):
            tok = tok.strip().lower()
            taus.append(None if tok == "none" else float(tok))
        variants = [(f"tau={t if t is not None else 'none'}", {}, t) for t in taus]
    else:
        variants = [(name, flags, cfg["graph"]["tau"]) for name, flags in ABLATION_VARIANTS.items()]

    s = cfg["synth"]
    spec = SyntheticSpec(
        family=s["family"],
        n_scenes=s["n_scenes"],
        n_vessels=s["n_vessels"],
        t_obs=cfg["data"]["t_obs"],
        t_pred=cfg["data"]["t_pred"],
        noise=s["noise"],
        speed=s["speed"],
        turn_rate=s["turn_rate"],
        crossing_offset=s["crossing_offset"],
    )
    ds = generate_synthetic_scenes(spec, seed=cfg["seed"])

    rows = []
    for name, flags, tau in variants:
        tc = _train_config(cfg)
        tc = dataclasses.replace(
            tc, tau=tau, denoiser=dataclasses.replace(tc.denoiser, **flags)
        )
        try:
            ckpt = train(ds, tc)
        except (ValueError, FloatingPointError) as e:
            raise CliError(f"variant {name}: {e}", code=EXIT_NUMERICAL)
        model = model_from_checkpoint(ckpt)
        fn = model.as_sampler_fn()
        schedule = ckpt.schedule
        preds = []
        for i, sc in enumerate(ds.scenes):
            a_hat = normalize_adjacency(build_adjacency(sc, tau=tau)).a_hat
            samples = sample_trajectories(
                fn, sc.x, a_hat, schedule,
                n_samples=cfg["evaluation"]["n_samples"],
                rng=np.random.default_rng(cfg["seed"] + 1000 + i),
                t_pred=sc.t_pred,
            )
            preds.append(
                evaluation.Prediction(
                    scene_id=sc.scene_id, samples=samples, truth=sc.y,
                    origin=sc.origin, vessel_ids=sc.vessel_ids,
                )
            )
        report = evaluation.best_of_n_evaluate(preds, config_hash=h)
        horizon = spec.t_pred
        m = report.per_horizon[horizon]
        rows.append((name, tau, m["ade"], m["fde"]))
        print(f"variant={name} tau={tau} ade={m['ade']:.6f} fde={m['fde']:.6f}")

    with open(args.out, "w", newline="") as fh:
        fh.write("variant,tau,ade,fde,config_hash\n")
        for name, tau, a, f in rows:
            fh.write(f"{name},{tau if tau is not None else 'none'},{a:.9f},{f:.9f},{h}\n")


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="stgdpm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("preprocess", help="CSV of AIS records -> scene JSON-lines")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--config", default=None)
    sp.set_defaults(fn=cmd_preprocess)

    sp = sub.add_parser("synth", help="generate synthetic scenes")
    sp.add_argument("--out", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--family", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("train", help="train the denoiser on a scene file")
    sp.add_argument("--scenes", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--log", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--check-hash", action="store_true")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("predict", help="sample futures for each scene")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--scenes", required=True)
    sp.add_argument("--n", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_predict)

    sp = sub.add_parser("evaluate", help="best-of-N ADE/FDE report")
    sp.add_argument("--preds", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--geojson", default=None)
    sp.add_argument("--joint-best", action="store_true")
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("ablate", help="train+evaluate module/tau variants")
    sp.add_argument("--config", default=None)
    sp.add_argument("--toggle", default=None)
    sp.add_argument("--tau-sweep", default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_ablate)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
