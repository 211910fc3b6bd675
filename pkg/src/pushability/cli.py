"""Command-line entry point.

    pushability gen      --n 90 --seed 7 --out data/
    pushability segment  scene.ply --out seg/
    pushability classify scene.ply --out obstacles.jsonl
    pushability train    data/dataset.jsonl --out model/
    pushability predict  model/model.json scene.ply|obstacles.jsonl
    pushability report   model/model.json data/dataset.jsonl --out report/

Exit codes: 0 success, 1 domain error, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .affordance import (
    NOT_PUSHABLE,
    PUSHABLE,
    TrainedModel,
    coefficient_report,
    design_matrix,
    feature_vector,
    predict_many,
    read_records,
    split_dataset,
    train,
    write_records,
)
from .config import PipelineConfig, load_config
from .features import ObstacleFeatures
from .pipeline import analyze, obstacle_record
from .pointcloud import PlyError, load_ply, save_ply
from .synth import TERRAIN_TYPES, GenParams, frame_cloud, gen_dataset
from .vpp import VppClass, assess

log = logging.getLogger("pushability")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2
FILTERED = "filtered"


class UsageError(Exception):
    """Bad arguments or unreadable input; maps to exit code 2."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _config(args) -> PipelineConfig:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {exc.filename}") from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad config: {exc}") from exc
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _gen_params(cfg: PipelineConfig) -> GenParams:
    o = cfg.oracle
    return GenParams(mu=o.mu, arm_limit=o.arm_limit, signal_len=o.signal_len)


def _load_cloud(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    try:
        return load_ply(p)
    except PlyError as exc:
        raise UsageError(str(exc)) from exc


def _load_records(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    try:
        return read_records(p)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_model(path) -> TrainedModel:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    try:
        return TrainedModel.load(p)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{p}: bad model file: {exc}") from exc


def _emit(text: str, out) -> None:
    if out:
        _write(Path(out), text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    cfg = _config(args)
    params = _gen_params(cfg)
    out = Path(args.out)
    ds = gen_dataset(args.n, cfg.seed, params, cfg)
    files = {}
    for run, exp in enumerate(ds.experiments):
        cloud = frame_cloud(exp, 0, params)
        rel = f"scenes/scene_{run:03d}.ply"
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        save_ply(cloud, path, normals=cloud.normals, labels=cloud.labels)
        files[rel] = _sha256(path)
    write_records(ds.records, out / "dataset.jsonl")
    files["dataset.jsonl"] = _sha256(out / "dataset.jsonl")
    manifest = ds.manifest()
    manifest.update(
        version=__version__,
        config=cfg.to_dict(),
        config_sha256=cfg.digest(),
        files=files,
    )
    _write(out / "manifest.json", _dump(manifest))
    print(f"{len(ds.experiments)} experiments, {len(ds.records)} records -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# segment / classify


def cmd_segment(args) -> int:
    cfg = _config(args)
    cloud = _load_cloud(args.cloud)
    analysis = analyze(cloud, cfg, with_verdicts=False)
    seg = analysis.segmentation
    n = len(cloud)
    summary = {
        "input": Path(args.cloud).name,
        "n_points": n,
        "m": seg.n_obstacles,
        "ground_points": int(len(seg.ground_indices)),
        "ground_fraction": float(len(seg.ground_indices) / n) if n else 0.0,
        "cluster_sizes": [int(len(c)) for c in seg.clusters],
        "n_med": [float(v) for v in seg.n_med],
    }
    if args.out:
        out = Path(args.out)
        stem = Path(args.cloud).stem
        out.mkdir(parents=True, exist_ok=True)
        save_ply(cloud, out / f"{stem}_labeled.ply", normals=seg.normals.normals, labels=seg.labels)
        _write(out / f"{stem}_segment.json", _dump(summary))
    sys.stdout.write(_dump(summary))
    return EXIT_OK


def cmd_classify(args) -> int:
    cfg = _config(args)
    analysis = analyze(_load_cloud(args.cloud), cfg)
    lines = []
    for j, (o, v) in enumerate(zip(analysis.obstacles, analysis.verdicts)):
        rec = obstacle_record(o, v)
        rec["obstacle"] = j
        lines.append(json.dumps(rec, sort_keys=True) + "\n")
    _emit("".join(lines), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / predict


def _metrics(model: TrainedModel, train_set, test_set) -> dict:
    X, y = design_matrix(test_set)
    mean, var = predict_many(model.posterior, model.standardizer.transform(X))
    err = mean - y
    return {
        "n_train": len(train_set),
        "n_test": len(test_set),
        "test_rmse": float(np.sqrt(np.mean(err**2))),
        "test_mae": float(np.mean(np.abs(err))),
        "test_mean_predictive_std": float(np.mean(np.sqrt(var))),
        "noise_precision": float(model.posterior.noise_precision),
        "prior_precision": float(model.posterior.prior_precision),
    }


def cmd_train(args) -> int:
    cfg = _config(args)
    records = _load_records(args.dataset)
    if len(records) < 2:
        raise UsageError(f"{args.dataset}: need at least 2 records, found {len(records)}")
    train_set, test_set = split_dataset(records, cfg.test_fraction, cfg.seed)
    model = train(train_set, cfg.prior_precision)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.json")
    rep = coefficient_report(model.posterior, model.feature_names)
    _write(out / "coefficients.csv", rep.feature_csv())
    _write(out / "groups.csv", rep.group_csv())
    metrics = _metrics(model, train_set, test_set)
    metrics["seed"] = cfg.seed
    metrics["test_fraction"] = cfg.test_fraction
    _write(out / "metrics.json", _dump(metrics))
    print(f"train {metrics['n_train']} / test {metrics['n_test']}, test RMSE {metrics['test_rmse']:.3f} N")
    return EXIT_OK


def _read_obstacles(path) -> list:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    out = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(ObstacleFeatures.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"{p}:{lineno}: bad obstacle record: {exc}") from exc
    return out


def predict_obstacles(model: TrainedModel, obstacles, cfg: PipelineConfig) -> list:
    """Per-obstacle gate plus regression. Static obstacles are filtered out."""
    limit = cfg.oracle.max_force
    rows = []
    for j, o in enumerate(obstacles):
        v = assess(o, cfg.robot, cfg.visual_likelihood_low_threshold, cfg.visual_likelihood_high_threshold)
        row = {"obstacle": j, "g": v.g, "class": v.cls.value}
        if v.cls is VppClass.STATIC:
            row.update(f_max_mean=None, f_max_var=None, p_pushable=None, decision=FILTERED)
        else:
            pred = model.predict(feature_vector(o), limit)
            row.update(
                f_max_mean=pred.mean,
                f_max_var=pred.variance,
                p_pushable=pred.p_pushable,
                decision=PUSHABLE if pred.mean <= limit else NOT_PUSHABLE,
            )
        rows.append(row)
    return rows


def cmd_predict(args) -> int:
    cfg = _config(args)
    model = _load_model(args.model)
    src = Path(args.input)
    if src.suffix.lower() == ".ply":
        obstacles = analyze(_load_cloud(src), cfg, with_verdicts=False).obstacles
    else:
        obstacles = _read_obstacles(src)
    rows = predict_obstacles(model, obstacles, cfg)
    _emit("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


FORCE_HEADER = ["rock", "terrain", "n_runs", "n_records", "force_mean", "force_std", "f_max_mean"]


def force_table(records) -> list:
    """Force-signal mean/std per (rock, terrain), one signal per push run.

    Records from the same run share a signal; they are counted once. The
    std pools the within-signal spread with the spread across runs.
    Records lacking signal statistics fall back to their f_max.
    """
    runs = defaultdict(dict)
    counts = defaultdict(int)
    for i, r in enumerate(records):
        m = r.meta
        key = (m.get("rock", "unknown"), m.get("terrain", "unknown"))
        counts[key] += 1
        run = m.get("run", f"record{i}")
        mu = float(m.get("signal_mean", r.f_max))
        sd = float(m.get("signal_std", 0.0))
        runs[key].setdefault(run, (mu, sd, r.f_max))
    order = {t: i for i, t in enumerate(TERRAIN_TYPES)}
    rows = []
    for key in sorted(runs, key=lambda k: (k[0], order.get(k[1], len(order)), k[1])):
        vals = np.array(list(runs[key].values()))
        mean = float(vals[:, 0].mean())
        second = float(np.mean(vals[:, 1] ** 2 + vals[:, 0] ** 2))
        std = float(np.sqrt(max(second - mean**2, 0.0)))
        rows.append([key[0], key[1], len(vals), counts[key], mean, std, float(vals[:, 2].mean())])
    return rows


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_report(args) -> int:
    model = _load_model(args.model)
    records = _load_records(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "forces.csv", _csv(FORCE_HEADER, force_table(records)))
    if records:
        rep = coefficient_report(model.posterior, model.feature_names)
        _write(out / "coefficients.csv", rep.feature_csv())
        _write(out / "groups.csv", rep.group_csv())
    else:
        _write(out / "coefficients.csv", _csv(["feature", "group", "weight"], []))
        _write(out / "groups.csv", _csv(["group", "magnitude", "signed_sum"], []))
    print(f"report for {len(records)} records -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (default: $PUSHABILITY_CONFIG, else built-in defaults)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="pushability", description="Obstacle pushability from point clouds.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=90, help="number of push experiments")
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("segment", parents=[common], help="ground/obstacle segmentation of a PLY")
    p.add_argument("cloud")
    p.add_argument("--out", help="directory for the labeled PLY and summary JSON")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("classify", parents=[common], help="obstacle features and visual gate")
    p.add_argument("cloud")
    p.add_argument("--out", help="JSONL output file (default: stdout)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("train", parents=[common], help="fit the force regression")
    p.add_argument("dataset")
    p.add_argument("--out", default="model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="pushability decisions for a scene")
    p.add_argument("model")
    p.add_argument("input", help="PLY scene or obstacle JSONL from 'classify'")
    p.add_argument("--out", help="JSONL output file (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", parents=[common], help="force and coefficient CSVs")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--out", default="report")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pushability {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"pushability {args.command}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
