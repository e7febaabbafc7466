"""Command-line interface.

Subcommands: prepare (label generation), train, triangulate, oracle, eval,
angles. Option precedence is CLI flag > config file (`key = value` lines,
passed with --config) > built-in defaults. Exit codes: 0 success, 1 usage
error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import pipeline
from .anchors import (DEFAULT_DELTA_PHI, DEFAULT_DELTA_RHO, DEFAULT_DELTA_THETA,
                      DEFAULT_R, build_grid)
from .dataset import (augment, mesh_samples, normalize_mesh, read_samples,
                      voxel_decimate, write_samples)
from .detector import (AdamState, Detector, DetectorConfig, load_checkpoint,
                       run_training, save_checkpoint)
from .errors import CircumtriError
from .geometry import KnnIndex, PointCloud, circumradii, extract_all_patches
from .meshio import read_cloud, read_mesh, write_mesh
from .metrics import (angle_accuracy_report, chamfer, edge_metrics, f_score,
                      normal_metrics, sample_surface)

DEFAULT_ETA0 = 0.01
DEFAULT_K = 50


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_grid_spec(text: str):
    """Parse 'drho,dtheta,dphi,R' where each item is a float or n*pi/m form."""
    parts = text.split(",")
    if len(parts) != 4:
        raise UsageError(f"--grid needs 4 comma-separated values, got {text!r}")
    return tuple(_parse_angle(p) for p in parts)


def _parse_angle(token: str) -> float:
    token = token.strip()
    try:
        return float(token)
    except ValueError:
        pass
    if "pi" in token:
        num, _, den = token.partition("/")
        num = num.strip()
        scale = 1.0
        if num.endswith("pi"):
            head = num[:-2].rstrip("*").strip()
            scale = float(head) if head else 1.0
        else:
            raise UsageError(f"cannot parse number {token!r}")
        value = scale * math.pi
        if den:
            value /= float(den)
        return value
    raise UsageError(f"cannot parse number {token!r}")


def load_config_file(path):
    """Plain `key = value` lines; '#' starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _merged(args, config, key, default, cast):
    """CLI flag > config file > default."""
    cli = getattr(args, key, None)
    if cli is not None:
        return cli
    if key in config:
        raw = config[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


# -- subcommands ------------------------------------------------------------

def cmd_prepare(args, config):
    mesh_dir = Path(args.mesh_dir)
    voxel = _merged(args, config, "voxel", 0.01, float)
    k = _merged(args, config, "k", DEFAULT_K, int)
    eta0 = _merged(args, config, "eta0", DEFAULT_ETA0, float)
    n_augment = _merged(args, config, "augment", 0, int)
    seed = _merged(args, config, "seed", 0, int)
    grid = build_grid(*parse_grid_spec(args.grid)) if args.grid else build_grid(
        _merged(args, config, "delta_rho", DEFAULT_DELTA_RHO, float),
        _merged(args, config, "delta_theta", DEFAULT_DELTA_THETA, float),
        _merged(args, config, "delta_phi", DEFAULT_DELTA_PHI, float),
        _merged(args, config, "r_max", DEFAULT_R, float))

    paths = sorted(p for p in mesh_dir.iterdir()
                   if p.suffix in (".obj", ".ply")) if mesh_dir.is_dir() else []
    if not paths:
        raise CircumtriError(f"no .obj/.ply meshes found in {mesh_dir}")

    samples = []
    rho_values = []
    dropped = 0
    for pi, path in enumerate(paths):
        mesh = voxel_decimate(normalize_mesh(read_mesh(path)), voxel)
        variants = [mesh] + [augment(mesh, seed=seed + 1000 * a + 7919 * pi,
                                     noise_sigma=0.0)
                             for a in range(n_augment)]
        for m in variants:
            ms = mesh_samples(m, grid, k, eta0)
            samples.extend(ms)
            dropped += sum(s.dropped_count for s in ms)
            rho_values.append(_label_rho_distribution(m, k, eta0))
    rho_values = np.concatenate(rho_values) if rho_values else np.empty(0)

    write_samples(args.out, samples, k, grid, eta0)
    print(f"meshes={len(paths)} samples={len(samples)} dropped_labels={dropped}")
    _print_rho_histogram(rho_values, grid)
    return 0


def _label_rho_distribution(mesh, k, eta0):
    """Normalized circumcenter radii of every (vertex, adjacent face) label."""
    cloud = PointCloud(mesh.vertices)
    index = KnnIndex(cloud)
    patches = extract_all_patches(cloud, index, min(k, len(cloud) - 1), eta0)
    corners = mesh.face_corners()
    radii = circumradii(corners[:, 0], corners[:, 1], corners[:, 2])
    rho = []
    for f, r in zip(mesh.faces, radii):
        for v in f:
            rho.append(r * patches[v].scale)
    return np.asarray(rho)


def _print_rho_histogram(rho, grid):
    if len(rho) == 0:
        print("rho_histogram: no labels")
        return
    edges = np.arange(0.0, 2 * grid.r_max + grid.delta_rho, grid.delta_rho)
    hist, _ = np.histogram(rho, bins=edges)
    print(f"rho_labels={len(rho)} rho_max={rho.max():.4f} "
          f"in_range={float(np.mean(rho <= grid.r_max)):.4f} (R={grid.r_max})")
    for i, h in enumerate(hist):
        if h:
            print(f"  rho [{edges[i]:.3f},{edges[i + 1]:.3f}): {h}")
    overflow = int(np.sum(rho >= edges[-1]))
    if overflow:
        print(f"  rho >= {edges[-1]:.3f}: {overflow}")


def cmd_train(args, config):
    iters = _merged(args, config, "iters", 2000, int)
    lr = _merged(args, config, "lr", 1e-3, float)
    decay_every = _merged(args, config, "decay_every", 80000, int)
    batch = _merged(args, config, "batch", 400, int)
    lam = _merged(args, config, "lambda_loc", 1.0, float)
    neg_ratio = _merged(args, config, "neg_ratio", 20.0, float)
    seed = _merged(args, config, "seed", 0, int)
    log_every = _merged(args, config, "log_every", 100, int)
    holdout_frac = _merged(args, config, "holdout", 0.1, float)
    conf = _merged(args, config, "conf", 0.5, float)

    records, k, grid, eta0 = read_samples(args.data)
    if not records:
        raise CircumtriError(f"{args.data}: no samples")
    cfg = DetectorConfig(
        pe_levels=_merged(args, config, "pe_levels", 16, int),
        depth_multiplier=_merged(args, config, "beta", 16, int),
        slots_per_cell=_merged(args, config, "slots", 2, int),
        lambda_loc=lam, neg_ratio=neg_ratio)
    model = Detector(cfg, grid, eta0, k, seed=seed)

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(records))
    n_hold = int(len(records) * holdout_frac)
    hold = [records[i] for i in perm[:n_hold]]
    train = [records[i] for i in perm[n_hold:]] or list(records)

    state = AdamState(lr=lr, decay_every=decay_every)

    def log(report):
        line = (f"iter={report['step']} loss={report['loss']:.4f} "
                f"bce={report['bce']:.4f} loc={report['loc']:.4f} "
                f"lr={report['lr']:.2e}")
        if hold:
            m = pipeline.record_detection_metrics(model, hold, conf)
            line += f" holdout_mAcc={m['macc']:.3f} holdout_mIoU={m['miou']:.3f}"
        print(line, flush=True)

    run_training(model, train, iters, batch, seed=seed, state=state,
                 log_every=log_every, on_log=log)
    save_checkpoint(args.out, model)
    print(f"saved {args.out} (t={grid.t}, k={k}, params="
          f"{sum(p.data.size for _, p in model.parameter_items())})")
    return 0


def cmd_triangulate(args, config):
    k = _merged(args, config, "k", None, int)
    conf = _merged(args, config, "conf", 0.5, float)
    max_hole = _merged(args, config, "max_hole", 4, int)
    model = load_checkpoint(args.model)
    points = read_cloud(args.cloud)
    cloud = PointCloud(points)
    mesh, stats = pipeline.triangulate(
        cloud, model, k=k, conf_threshold=conf,
        postprocess=not args.no_postprocess, max_hole_edges=max_hole)
    write_mesh(args.out, mesh)
    print(f"points={stats.n_points} detections={stats.n_detections} "
          f"primitive_faces={stats.n_primitive_faces} final_faces={stats.n_final_faces}")
    print(f"nonmanifold_edges_before={100 * stats.nonmanifold_before:.3f}% "
          f"after={100 * stats.nonmanifold_after:.3f}%")
    for stage, secs in stats.stage_seconds.items():
        print(f"time_{stage}={secs:.3f}s")
    return 0


def cmd_oracle(args, config):
    k = _merged(args, config, "k", DEFAULT_K, int)
    eta0 = _merged(args, config, "eta0", DEFAULT_ETA0, float)
    grid = build_grid(*parse_grid_spec(args.grid)) if args.grid else build_grid()
    mesh = read_mesh(args.mesh)
    k = min(k, mesh.n_vertices - 1)
    t0 = time.perf_counter()
    out, stats = pipeline.oracle_triangulate(mesh, k, grid, eta0)
    elapsed = time.perf_counter() - t0
    if args.out:
        write_mesh(args.out, out)
    print(f"gt_faces={stats.n_gt_faces} recovered={stats.n_recovered_faces} "
          f"({100 * stats.recovered_fraction:.1f}%) spurious={stats.n_spurious_faces}")
    print(f"labels={stats.n_labels} dropped_out_of_range={stats.dropped_out_of_range} "
          f"dropped_not_covered={stats.dropped_not_covered}")
    print(f"time={elapsed:.3f}s")
    return 0


def cmd_eval(args, config):
    n_samples = _merged(args, config, "samples", 100000, int)
    eps = _merged(args, config, "eps", 0.005, float)
    seed = _merged(args, config, "seed", 0, int)
    dihedral = _merged(args, config, "dihedral", 30.0, float)
    gt = read_mesh(args.gt)
    pred = read_mesh(args.pred)
    # same seed on both sides: identical meshes compare at exactly zero
    gt_s = sample_surface(gt, n_samples, seed)
    pred_s = sample_surface(pred, n_samples, seed)
    cd1, cd2 = chamfer(gt_s.points, pred_s.points)
    f1, recall, precision = f_score(gt_s.points, pred_s.points, eps)
    nc, nr = normal_metrics(gt_s, pred_s)
    ecd1, ef1 = edge_metrics(gt, pred, dihedral, eps, n_samples, seed)
    record = {
        "gt": str(args.gt), "pred": str(args.pred),
        "cd1_x100": cd1 * 1e2, "cd2_x1e5": cd2 * 1e5, "f1": f1,
        "recall": recall, "precision": precision, "nc": nc, "nr_deg": nr,
        "ecd1_x100": ecd1 * 1e2 if math.isfinite(ecd1) else float("inf"),
        "ef1": ef1, "samples": n_samples, "eps": eps, "seed": seed,
    }
    for key, val in record.items():
        if isinstance(val, float):
            print(f"{key}={val:.6g}")
        else:
            print(f"{key}={val}")
    line = json.dumps(record)
    if args.jsonl:
        with open(args.jsonl, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
    else:
        print(line)
    return 0


def cmd_angles(args, config):
    bin_width = _merged(args, config, "bin", 10.0, float)
    gt = read_mesh(args.gt)
    pred = read_mesh(args.pred)
    for row in angle_accuracy_report(gt, pred, bin_width):
        if row["gt"] == 0:
            continue
        print(f"angle [{row['lo']:.0f},{row['hi']:.0f}): gt={row['gt']} "
              f"recovered={row['recovered']} accuracy={row['accuracy']:.3f}")
    return 0


# -- wiring ------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="circumtri",
                     description="Point cloud triangulation via circumcenter detection")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("prepare", help="generate training records from meshes")
    p.add_argument("--mesh-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--voxel", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--eta0", type=float, default=None)
    p.add_argument("--grid", default=None, help="drho,dtheta,dphi,R (pi/6 forms allowed)")
    p.add_argument("--augment", type=int, default=None)
    add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the detector on a record stream")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--decay-every", type=int, default=None, dest="decay_every")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lambda", type=float, default=None, dest="lambda_loc")
    p.add_argument("--neg-ratio", type=float, default=None, dest="neg_ratio")
    p.add_argument("--pe-levels", type=int, default=None, dest="pe_levels")
    p.add_argument("--beta", type=int, default=None)
    p.add_argument("--slots", type=int, default=None)
    p.add_argument("--log-every", type=int, default=None, dest="log_every")
    p.add_argument("--holdout", type=float, default=None)
    p.add_argument("--conf", type=float, default=None)
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("triangulate", help="triangulate a point cloud with a model")
    p.add_argument("--cloud", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--conf", type=float, default=None)
    p.add_argument("--no-postprocess", action="store_true")
    p.add_argument("--max-hole", type=int, default=None, dest="max_hole")
    add_common(p)
    p.set_defaults(func=cmd_triangulate)

    p = sub.add_parser("oracle", help="recover a mesh from its exact circumcenters")
    p.add_argument("--mesh", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--eta0", type=float, default=None)
    p.add_argument("--grid", default=None)
    add_common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="score a reconstruction against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--dihedral", type=float, default=None)
    p.add_argument("--jsonl", default=None, help="append the JSON record here")
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("angles", help="detection accuracy by max interior angle")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--bin", type=float, default=None)
    add_common(p)
    p.set_defaults(func=cmd_angles)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_config_file(args.config) if getattr(args, "config", None) else {}
        return args.func(args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (CircumtriError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
