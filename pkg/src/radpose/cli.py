"""Command-line pipeline: simulate | preprocess | train | evaluate |
calibrate | report | augment-classify.

All artifacts land under --out; every command echoes the effective config
there and is deterministic given --seed (no timestamps are written). Exit
codes: 0 success, 2 missing input file, 3 config violation, 4 shape
mismatch, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import activity as act
from . import metrics as mx
from .config import Config
from .errors import ConfigError, RadposeError, ShapeError
from .model import PredictiveDistribution
from .optim import load_arrays, save_arrays
from .radar import preprocess, read_cube, write_cube, write_poses
from .rng import Rng
from .simulate import MotionScript, check_ambiguity, rcs_profile, script_scatterers, synthesize
from .skeleton import BODY_GROUPS, N_KEYPOINTS, make_trajectory
from .train import (
    load_dataset,
    restored_model,
    split_windows,
    train as run_train,
    evaluate as run_evaluate,
)

_GROUP_OF = {}
for _g, _idx in BODY_GROUPS.items():
    for _i in _idx:
        _GROUP_OF[_i] = _g


def _load_config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    return cfg


def _levels(cfg: Config) -> np.ndarray:
    c = cfg["calib.levels"]
    if c < 1:
        raise ConfigError("calib.levels must be positive")
    return np.arange(1, c + 1) / c


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = cfg.radar_params()
    try:
        weights = rcs_profile(cfg["sim.rcs_profile"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rng = Rng(cfg["seed"])
    activities = cfg["sim.activities"]
    n_frames = cfg["sim.frames_per_recording"]
    rows = []
    for subject in range(cfg["sim.n_subjects"]):
        for ai, activity in enumerate(activities):
            traj = make_trajectory(
                activity, n_frames, params.frame_rate,
                rng.derive(subject, ai), depth=cfg["sim.depth_m"],
            )
            script = MotionScript(traj, weights, noise_std=cfg["sim.noise_std"])
            frames = script_scatterers(script, params.frame_rate)
            check_ambiguity(params, frames)
            cube = synthesize(params, frames, rng.derive(subject, ai, 1),
                              noise_std=script.noise_std)
            name = f"rec_s{subject}_a{activity}_{ai}.rpc1"
            write_cube(cube, out / name)
            write_poses(traj, out / (Path(name).stem + ".poses.csv"))
            rows.append((name, subject, activity))
    with open(out / "manifest.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["file", "subject", "activity"])
        w.writerows(rows)
    cfg.write_effective(out)
    print(f"simulate: wrote {len(rows)} recordings to {out}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _load_config(args)
    cube = read_cube(args.input, cfg.radar_dims())
    processed = preprocess(cube, center=not args.no_center)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.save(out, processed)
    print(f"preprocess: {args.input} -> {out} shape {processed.shape}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(args.data, cfg.radar_dims(), stride=cfg["train.stride"])
    result = run_train(dataset, cfg.split_spec(), cfg.train_config())
    save_arrays(out / "checkpoint.bin", result.params)
    with open(out / "history.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_loss", "val_mpjpe"])
        for row in result.history:
            w.writerow([row["epoch"], repr(float(row["train_loss"])),
                        repr(float(row["val_loss"])), repr(float(row["val_mpjpe"]))])
    cfg.write_effective(out)
    if result.aborted:
        print("train: aborted on non-finite loss; last good checkpoint saved",
              file=sys.stderr)
        return 1
    best = result.history[result.best_epoch]
    print(f"train: best epoch {result.best_epoch} "
          f"val_loss {best['val_loss']:.4f} val_mpjpe {best['val_mpjpe']:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dims = cfg.radar_dims()
    dataset = load_dataset(args.data, dims, stride=cfg["train.stride"])
    model = restored_model(load_arrays(args.checkpoint), cfg.model_config(), dims)
    parts = split_windows(dataset, cfg.split_spec())
    idx = parts[args.split]
    preds, gts = run_evaluate(model, dataset, idx, seed=cfg["seed"])
    n = len(preds)
    mean = np.stack([p.mean for p in preds]) if n else np.zeros((0, 3 * N_KEYPOINTS))
    if model.config.likelihood == "laplace":
        disp = np.stack([p.scale_b for p in preds]) if n else mean.copy()
    else:
        disp = np.stack([p.marginal_variances() for p in preds]) if n else mean.copy()
    save_arrays(
        out / "predictions.bin",
        {
            "mean": mean,
            "gt": gts,
            "disp": disp,
            "subject": np.array([dataset.window_subject(i) for i in idx], dtype=float),
            "activity": np.array([dataset.window_activity(i) for i in idx], dtype=float),
        },
    )
    meta = {"schema": 1, "likelihood": model.config.likelihood, "n": n, "split": args.split}
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    cfg.write_effective(out)
    print(f"evaluate: {n} windows ({args.split}) -> {out}")
    return 0


def _load_predictions(pred_dir: str | Path):
    pred_dir = Path(pred_dir)
    meta = json.loads((pred_dir / "meta.json").read_text())
    arrays = load_arrays(pred_dir / "predictions.bin")
    kind = meta["likelihood"]
    preds = []
    for mean, disp in zip(arrays["mean"], arrays["disp"]):
        if kind == "laplace":
            preds.append(PredictiveDistribution(kind, mean, scale_b=disp))
        else:
            preds.append(PredictiveDistribution(kind, mean, var=disp))
    return preds, arrays["gt"], meta


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preds, gts, meta = _load_predictions(args.pred)
    levels = _levels(cfg)
    pit_mat = np.stack([mx.pit_values(p, y) for p, y in zip(preds, gts)])
    payload = {"schema": 1, "levels": [float(v) for v in levels],
               "source": meta["split"], "per_dimension": bool(cfg["calib.per_dimension"])}
    if cfg["calib.per_dimension"]:
        maps = [mx.fit_isotonic(pit_mat[:, d], levels) for d in range(pit_mat.shape[1])]
        payload["maps"] = [
            {"breakpoints": m.breakpoints.tolist(), "values": m.values.tolist()}
            for m in maps
        ]
        pit_cal = np.stack([maps[d].apply(pit_mat[:, d]) for d in range(pit_mat.shape[1])], axis=1)
    else:
        cal_map = mx.fit_isotonic(pit_mat.reshape(-1), levels)
        payload["breakpoints"] = cal_map.breakpoints.tolist()
        payload["values"] = cal_map.values.tolist()
        pit_cal = cal_map.apply(pit_mat)
    ece_before = mx.ece(mx.coverage_from_pit(pit_mat.reshape(-1), levels))
    ece_after = mx.ece(mx.coverage_from_pit(pit_cal.reshape(-1), levels))
    payload["ece_before"] = ece_before
    payload["ece_after"] = ece_after
    (out / "calibration.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    cfg.write_effective(out)
    print(f"calibrate: ece {ece_before:.4f} -> {ece_after:.4f} on {meta['split']} split")
    return 0


def _load_calibration(path: str | Path):
    payload = json.loads(Path(path).read_text())
    if payload.get("per_dimension"):
        return [
            mx.CalibrationMap(np.array(m["breakpoints"]), np.array(m["values"]))
            for m in payload["maps"]
        ]
    return mx.CalibrationMap(np.array(payload["breakpoints"]), np.array(payload["values"]))


def cmd_report(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preds, gts, meta = _load_predictions(args.pred)
    cal_map = _load_calibration(args.calibration) if args.calibration else None
    levels = _levels(cfg)
    report = mx.build_report(preds, gts, cal_map=cal_map, levels=levels)

    m2cm = 100.0
    m2cm2 = 1e4
    keypoints = [
        {
            "index": kp["index"],
            "name": kp["name"],
            "group": _GROUP_OF[kp["index"]],
            "mpjpe_cm": kp["mpjpe_m"] * m2cm,
            "p_mpjpe_cm": kp["p_mpjpe_m"] * m2cm,
            "uncertainty_cm2": kp["uncertainty_m2"] * m2cm2,
            "calibrated_uncertainty_cm2": kp["calibrated_uncertainty_m2"] * m2cm2,
        }
        for kp in report["keypoints"]
    ]
    payload = {
        "schema": 1,
        "likelihood": meta["likelihood"],
        "frames": report["frames"],
        "skipped_procrustes_frames": report["skipped_procrustes_frames"],
        "mpjpe_overall_cm": report["mpjpe_overall_m"] * m2cm,
        "p_mpjpe_overall_cm": report["p_mpjpe_overall_m"] * m2cm,
        "ece_uncalibrated": report["ece_uncalibrated"],
        "ece_calibrated": report["ece_calibrated"],
        "sharpness_uncalibrated_cm2": report["sharpness_uncalibrated_m2"] * m2cm2,
        "sharpness_calibrated_cm2": report["sharpness_calibrated_m2"] * m2cm2,
        "pearson_r": report["pearson_r_per_joint_frame"],
        "pearson_r_per_keypoint": report["pearson_r_per_keypoint"],
        "groups": {
            name: {
                "mpjpe_cm": report["mpjpe_groups_m"][name] * m2cm,
                "p_mpjpe_cm": report["p_mpjpe_groups_m"][name] * m2cm,
                "uncertainty_cm2": report["uncertainty_groups_m2"][name] * m2cm2,
            }
            for name in BODY_GROUPS
        },
        "keypoints": keypoints,
    }
    (out / "report.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    with open(out / "keypoints.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "name", "group", "mpjpe_cm", "p_mpjpe_cm",
                    "uncertainty_cm2", "calibrated_uncertainty_cm2"])
        for kp in keypoints:
            w.writerow([kp["index"], kp["name"], kp["group"],
                        repr(float(kp["mpjpe_cm"])), repr(float(kp["p_mpjpe_cm"])),
                        repr(float(kp["uncertainty_cm2"])),
                        repr(float(kp["calibrated_uncertainty_cm2"]))])
    with open(out / "coverage.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["level", "uncalibrated", "calibrated"])
        for lv, a, b in zip(report["coverage"]["levels"],
                            report["coverage"]["uncalibrated"],
                            report["coverage"]["calibrated"]):
            w.writerow([repr(float(lv)), repr(float(a)), repr(float(b))])
    cfg.write_effective(out)
    print(f"report: ece {payload['ece_uncalibrated']:.4f} -> {payload['ece_calibrated']:.4f}, "
          f"mpjpe {payload['mpjpe_overall_cm']:.2f} cm")
    return 0


def cmd_augment_classify(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg["model.latent_family"] != "gauss":
        raise ConfigError("latent augmentation supports the Gaussian family only")
    dims = cfg.radar_dims()
    dataset = load_dataset(args.data, dims, stride=cfg["classify.stride"])
    model = restored_model(load_arrays(args.checkpoint), cfg.model_config(), dims)
    split = cfg.split_spec()

    seqs: dict[int, act.LatentSequence] = {}
    for ri, rec in enumerate(dataset.recordings):
        frames = []
        for wi, (rj, _start) in enumerate(dataset.windows):
            if rj != ri:
                continue
            ld = model.encode(dataset.window_input(wi))
            frames.append(act.FrameLatent(ld.mu_array.copy(), ld.sigma_array.copy()))
        if frames:
            seqs[ri] = act.LatentSequence(frames, rec.activity)

    train_seqs = [seqs[ri] for ri, rec in enumerate(dataset.recordings)
                  if ri in seqs and rec.subject in split.train]
    test_seqs = [seqs[ri] for ri, rec in enumerate(dataset.recordings)
                 if ri in seqs and (rec.subject in split.test or rec.subject == split.calib)]
    if not train_seqs or not test_seqs:
        raise ValueError("need at least one training and one test sequence")

    rng = Rng(cfg["seed"]).derive(7)
    alpha_learned = float(np.logaddexp(0.0, model.params["alpha_raw"].value))
    plan = act.default_plan(alpha_learned, rng.derive(0), span=cfg["augment.alpha_span"],
                            n_draws=cfg["augment.n_alphas"],
                            samples_per_sequence=cfg["augment.samples_per_sequence"])
    clf_cfg = act.ClassifierConfig(d_lat=cfg["model.d_lat"], kernel=cfg["classify.kernel"],
                                   epochs=cfg["classify.epochs"], lr=cfg["classify.lr"])

    aug_train = act.augmented_sequences(train_seqs, plan, rng.derive(1))
    mean_train = act.mean_sequences(train_seqs)
    params_aug = act.train_classifier(aug_train, clf_cfg, rng.derive(2))
    params_mean = act.train_classifier(mean_train, clf_cfg, rng.derive(3))

    test_rng = rng.derive(4)
    results = {}
    for tag, params in (("augmented", params_aug), ("mean_baseline", params_mean)):
        preds, labels = [], []
        for si, seq in enumerate(test_seqs):
            draw = seq.mu_matrix + alpha_learned * test_rng.derive(si).normal(
                seq.mu_matrix.shape) * seq.sigma_matrix
            pred, _ = act.classify(params, clf_cfg, draw)
            preds.append(pred)
            labels.append(seq.label)
        results[tag] = act.classification_report(preds, labels)

    (out / "metrics.json").write_text(
        json.dumps({"schema": 1, "alpha_learned": alpha_learned,
                    "augmented": results["augmented"],
                    "mean_baseline": results["mean_baseline"]},
                   sort_keys=True, indent=2) + "\n")
    with open(out / "confusion.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["true\\pred"] + [str(i) for i in range(len(
            results["augmented"]["confusion_normalized"]))])
        for i, row in enumerate(results["augmented"]["confusion_normalized"]):
            w.writerow([i] + [repr(float(v)) for v in row])
    cfg.write_effective(out)
    print(f"augment-classify: F1 augmented {results['augmented']['f1_macro']:.3f} "
          f"vs mean {results['mean_baseline']['f1_macro']:.3f}")
    return 0


# ---------------------------------------------------------------------------
# parser and entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radpose",
        description="Radar-to-pose pipeline with uncertainty calibration",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simulate", help="synthesize RPC1 recordings + pose CSVs")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("preprocess", help="preprocess one cube file to .npy")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--input", required=True, help="input .rpc1 file")
    p.add_argument("--out", required=True, help="output .npy path")
    p.add_argument("--no-center", action="store_true", help="skip clutter centering")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train on a simulated dataset directory")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory (manifest.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="emit predictive distributions for a split")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "calib", "test"), default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", help="fit the isotonic recalibration map")
    common(p)
    p.add_argument("--pred", required=True, help="evaluate output directory (calib split)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("report", help="emit metric tables from predictions")
    common(p)
    p.add_argument("--pred", required=True, help="evaluate output directory (test split)")
    p.add_argument("--calibration", help="calibration.json from the calibrate step")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("augment-classify", help="latent augmentation + activity classifier")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_augment_classify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"radpose: missing input: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"radpose: config error: {exc}", file=sys.stderr)
        return 3
    except ShapeError as exc:
        print(f"radpose: shape mismatch: {exc}", file=sys.stderr)
        return 4
    except (RadposeError, ValueError, OSError) as exc:
        print(f"radpose: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
