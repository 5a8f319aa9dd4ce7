"""Command-line surface: rendering, dataset generation, pose estimation,
evaluation, loss-curve scans, and threshold selection.

Exit codes: 0 success, 2 bad input or schema violation, 3 estimation ran but
produced zero poses.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import cv2
import numpy as np

from .augment import (
    AugmentConfig,
    default_training_intrinsics,
    make_training_set,
)
from .dataset import (
    bbox_corner_to_center,
    load_config,
    load_detections,
    load_results,
    load_scenes,
    parse_pool,
    pipeline_config_from,
    pool_for_object,
    result_pose,
    save_results,
    select_theta_o,
)
from .exceptions import CoordPoseError, FormatError
from .geometry import CameraIntrinsics, NormalizationBox, Pose, box_mesh
from .images import save_coord_png, save_depth_png, save_mask_png
from .losses import loss_scan, plot_loss_curves, write_loss_scan_csv
from .metrics import VsdParams, adi, is_correct_add, vsd, write_recall_csv
from .pipeline import Detection, estimate
from .ply import load_ply
from .predictor import FilePredictor, OraclePredictor
from .render import render, render_scene


def _load_mesh(spec: str):
    """A .ply path, or 'box:WxHxD' for a synthetic box in mm."""
    if spec.startswith("box:"):
        try:
            a, b, c = (float(v) for v in spec[4:].split("x"))
        except ValueError:
            raise FormatError(f"bad box spec {spec!r}, expected box:WxHxD") from None
        return box_mesh(a, b, c)
    return load_ply(spec)


def _load_intrinsics(spec: str | None) -> CameraIntrinsics:
    if spec is None:
        return default_training_intrinsics()
    if os.path.exists(spec):
        with open(spec, "r", encoding="utf-8") as f:
            d = json.load(f)
        try:
            return CameraIntrinsics(
                fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
                width=int(d["width"]), height=int(d["height"]),
            )
        except KeyError as exc:
            raise FormatError(f"intrinsics file {spec} lacks {exc}") from None
    parts = spec.split(",")
    if len(parts) != 6:
        raise FormatError("inline intrinsics must be fx,fy,cx,cy,width,height")
    fx, fy, cx, cy, w, h = (float(v) for v in parts)
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=int(w), height=int(h))


def _load_pose(spec: str | None, mesh, k: CameraIntrinsics) -> Pose:
    if spec is None:
        # face-on, centered, sized to fill ~70% of the frame
        z = k.fx * mesh.diameter / (0.7 * min(k.width, k.height))
        return Pose(rotation=np.eye(3), translation=(0.0, 0.0, z))
    if os.path.exists(spec):
        with open(spec, "r", encoding="utf-8") as f:
            d = json.load(f)
        if "R" not in d or "t" not in d:
            raise FormatError(f"pose file {spec} must carry 'R' and 't'")
        r, t = d["R"], d["t"]
    else:
        parts = spec.split(",")
        if len(parts) != 12:
            raise FormatError("inline pose must be 12 numbers: 9 for R then 3 for t")
        vals = [float(v) for v in parts]
        r, t = vals[:9], vals[9:]
    r = np.asarray(r, dtype=np.float64).reshape(3, 3)
    return Pose(rotation=r, translation=np.asarray(t, dtype=np.float64))


def _load_backgrounds(dir_path: str | None, size: int):
    if dir_path is None:
        return None
    names = sorted(
        n for n in os.listdir(dir_path)
        if n.lower().endswith((".png", ".jpg", ".jpeg", ".bmp"))
    )
    if not names:
        raise FormatError(f"no images found in backgrounds directory {dir_path}")
    out = []
    for n in names:
        img = cv2.imread(os.path.join(dir_path, n), cv2.IMREAD_COLOR)
        if img is None:
            raise FormatError(f"unreadable background image {n}")
        img = cv2.resize(img, (size, size), interpolation=cv2.INTER_AREA)
        out.append(img[:, :, ::-1].copy())
    return out


# ---------------------------------------------------------------------------
# subcommands

def cmd_render(args) -> int:
    mesh = _load_mesh(args.mesh)
    k = _load_intrinsics(args.intrinsics)
    pose = _load_pose(args.pose, mesh, k)
    box = NormalizationBox.from_mesh(mesh)
    out = render(mesh, pose, k, box=box)
    os.makedirs(args.out, exist_ok=True)
    save_coord_png(os.path.join(args.out, "coord.png"), out.coord)
    save_depth_png(os.path.join(args.out, "depth.png"), out.depth)
    save_mask_png(os.path.join(args.out, "mask.png"), out.mask)
    print(f"rendered {int(out.mask.sum())} object pixels to {args.out}")
    return 0


def cmd_make_dataset(args) -> int:
    mesh = _load_mesh(args.mesh)
    box = NormalizationBox.from_mesh(mesh)
    cfg = load_config(args.config)
    try:
        aug = AugmentConfig(**cfg.get("augment", {}))
    except TypeError as exc:
        raise FormatError(f"bad augment config: {exc}") from None
    k = default_training_intrinsics(args.size)
    backgrounds = _load_backgrounds(args.backgrounds, args.size)
    n = make_training_set(
        args.out,
        mesh,
        box,
        args.count,
        aug,
        seed=args.seed,
        obj_id=args.obj_id,
        k=k,
        backgrounds=backgrounds,
    )
    print(f"wrote {n} training pairs to {args.out}")
    return 0


def _build_oracle(scenes, mesh, box, cfg, seed):
    objects = {}
    poses = {}
    for image_id, scene in scenes.items():
        for o in scene.objects:
            objects[o.obj_id] = (mesh, box)
            poses[(image_id, o.obj_id)] = o.pose
    oc = cfg.get("oracle", {})
    return OraclePredictor(
        objects=objects,
        poses=poses,
        noise_sigma=float(oc.get("noise_sigma", 0.0)),
        occlusion_fraction=float(oc.get("occlusion_fraction", 0.0)),
        err_noise=float(oc.get("err_noise", 0.0)),
        seed=int(oc.get("seed", 0)) if seed is None else int(seed),
    )


def cmd_estimate(args) -> int:
    scenes, _ = load_scenes(args.scenes)
    detections = load_detections(args.detections)
    mesh = _load_mesh(args.mesh)
    box = NormalizationBox.from_mesh(mesh)
    cfg = load_config(args.config)
    if args.predictor == "oracle":
        predictor = _build_oracle(scenes, mesh, box, cfg, args.seed)
    else:
        if args.predictions is None:
            raise FormatError("--predictions is required with --predictor files")
        predictor = FilePredictor(args.predictions)
    rows = []
    ok = 0
    for index, det_row in enumerate(detections):
        image_id = int(det_row["image_id"])
        obj_id = int(det_row["obj_id"])
        if image_id not in scenes:
            raise FormatError(f"detection references unknown image {image_id}")
        k = scenes[image_id].k
        pc = pipeline_config_from(cfg, obj_id=obj_id, seed=args.seed)
        det = Detection(
            obj_id=obj_id,
            bbox=bbox_corner_to_center(det_row["bbox"]),
            image_id=image_id,
        )
        row = {"image_id": image_id, "obj_id": obj_id}
        try:
            res = estimate(det, predictor, pc, k, box, detection_index=index)
        except CoordPoseError as exc:
            kind = type(exc).__name__
            status = {
                "NoObjectError": "no_object",
                "InsufficientCorrespondencesError": "insufficient",
                "PoseFailureError": "failed",
            }.get(kind)
            if status is None:
                raise
            row["status"] = status
        else:
            est = res.estimate
            row.update(
                status="ok",
                R=[float(v) for v in est.pose.rotation.reshape(-1)],
                t=[float(v) for v in est.pose.translation],
                inliers=int(est.inlier_count),
                mean_reproj_error=float(est.mean_reproj_error),
                correspondences=int(est.correspondence_count),
            )
            ok += 1
        rows.append(row)
    save_results(args.out, rows)
    print(f"estimated {ok}/{len(detections)} poses -> {args.out}")
    if detections and ok == 0:
        return 3
    return 0


def cmd_evaluate(args) -> int:
    results = load_results(args.results)
    scenes, _ = load_scenes(args.scenes)
    mesh = _load_mesh(args.mesh)
    cfg = load_config(args.config)
    params = VsdParams(tau=args.tau, delta=args.delta, threshold=args.vsd_threshold)
    scene_depth_cache = {}

    def scene_depth(image_id):
        if image_id not in scene_depth_cache:
            scene = scenes[image_id]
            objs = [(mesh, o.pose) for o in scene.objects]
            scene_depth_cache[image_id] = render_scene(objs, scene.k).depth
        return scene_depth_cache[image_id]

    per_object = {}
    for row in results:
        image_id, obj_id = int(row["image_id"]), int(row["obj_id"])
        scene = scenes.get(image_id)
        gt = None
        if scene is not None:
            gt = next((o for o in scene.objects if o.obj_id == obj_id), None)
        if gt is None:
            raise FormatError(f"no ground truth for image {image_id} object {obj_id}")
        bucket = per_object.setdefault(obj_id, [0, 0])
        bucket[1] += 1
        if row["status"] != "ok":
            continue
        est = result_pose(row)
        if args.pool is not None:
            pool = parse_pool(args.pool)
        else:
            pool = pool_for_object(cfg, obj_id)
        if args.metric == "add":
            correct = is_correct_add(est, gt.pose, mesh, pool)
        elif args.metric == "adi":
            correct = adi(est, gt.pose, mesh) < 0.1 * mesh.diameter
        else:
            score = vsd(est, gt.pose, mesh, scene_depth(image_id), scene.k, params)
            correct = score < params.threshold
        if correct:
            bucket[0] += 1
    rows = [
        (obj_id, args.metric, hits / n if n else 0.0, n)
        for obj_id, (hits, n) in sorted(per_object.items())
    ]
    write_recall_csv(args.out, rows)
    total_hits = sum(b[0] for b in per_object.values())
    total_n = sum(b[1] for b in per_object.values())
    overall = total_hits / total_n if total_n else 0.0
    print(f"recall[{args.metric}] = {overall:.4f} over {total_n} results -> {args.out}")
    return 0


def cmd_loss_scan(args) -> int:
    mesh = _load_mesh(args.mesh)
    box = NormalizationBox.from_mesh(mesh)
    k = _load_intrinsics(args.intrinsics)
    pose = _load_pose(None, mesh, k)
    pool = parse_pool(args.pool)
    rows = loss_scan(
        mesh, pose, args.axis, args.steps, k, box, pool, args.mode, beta=args.beta
    )
    write_loss_scan_csv(args.out, rows)
    if args.plot:
        plot_loss_curves(args.plot, {args.mode: rows})
    print(f"{args.mode} scan, {len(rows)} steps -> {args.out}")
    return 0


def cmd_select_theta_o(args) -> int:
    mesh = _load_mesh(args.mesh)
    box = NormalizationBox.from_mesh(mesh)
    best, report = select_theta_o(
        mesh,
        box,
        noise_sigma=args.noise_sigma,
        occlusion_fraction=args.occlusion_fraction,
        trials=args.trials,
        seed=args.seed,
    )
    for cand in sorted(report):
        keep, leak, score = report[cand]
        print(f"theta_o={cand:.2f}  keep={keep:.4f}  leak={leak:.4f}  score={score:.4f}")
    print(f"selected theta_o = {best}")
    if args.out:
        doc = {
            "selected": best,
            "report": {str(c): list(v) for c, v in report.items()},
        }
        tmp = args.out + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=1)
        os.replace(tmp, args.out)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="coordpose",
        description="Pose estimation from per-pixel object coordinates.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render coord/depth/mask images for one pose")
    r.add_argument("--mesh", required=True, help=".ply path or box:WxHxD (mm)")
    r.add_argument("--pose", help="JSON file or 12 inline numbers (R row-major, t)")
    r.add_argument("--intrinsics", help="JSON file or fx,fy,cx,cy,width,height")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_render)

    m = sub.add_parser("make-dataset", help="write augmented training pairs")
    m.add_argument("--mesh", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--count", type=int, required=True)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--size", type=int, default=128)
    m.add_argument("--obj-id", type=int, default=1)
    m.add_argument("--config", help="JSON run config")
    m.add_argument("--backgrounds", help="directory of background images")
    m.set_defaults(func=cmd_make_dataset)

    e = sub.add_parser("estimate", help="run the two-stage pipeline on detections")
    e.add_argument("--scenes", required=True)
    e.add_argument("--detections", required=True)
    e.add_argument("--mesh", required=True)
    e.add_argument("--predictor", choices=("oracle", "files"), default="oracle")
    e.add_argument("--predictions", help="directory of prediction files")
    e.add_argument("--config")
    e.add_argument("--seed", type=int, help="overrides pipeline and oracle seeds")
    e.add_argument("--out", required=True, help="results JSONL path")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("evaluate", help="score results against ground truth")
    v.add_argument("--results", required=True)
    v.add_argument("--scenes", required=True)
    v.add_argument("--mesh", required=True)
    v.add_argument("--metric", choices=("add", "adi", "vsd"), required=True)
    v.add_argument("--pool", help="symmetry pool for the 10%% rule, e.g. z180")
    v.add_argument("--config")
    v.add_argument("--tau", type=float, default=20.0)
    v.add_argument("--delta", type=float, default=15.0)
    v.add_argument("--vsd-threshold", type=float, default=0.3)
    v.add_argument("--out", required=True, help="recall CSV path")
    v.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("loss-scan", help="loss vs object rotation angle")
    s.add_argument("--mesh", required=True)
    s.add_argument("--pool", default="none")
    s.add_argument(
        "--mode", choices=("plain_l1", "view_limit", "transformer"), required=True
    )
    s.add_argument("--steps", type=int, default=72)
    s.add_argument("--axis", default="z")
    s.add_argument("--beta", type=float, default=3.0)
    s.add_argument("--intrinsics", help="JSON file or fx,fy,cx,cy,width,height")
    s.add_argument("--out", required=True, help="CSV path")
    s.add_argument("--plot", help="optional SVG/PNG path")
    s.set_defaults(func=cmd_loss_scan)

    t = sub.add_parser(
        "select-theta-o", help="pick the stage-1 outlier threshold for an object"
    )
    t.add_argument("--mesh", required=True)
    t.add_argument("--trials", type=int, default=20)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--noise-sigma", type=float, default=0.05)
    t.add_argument("--occlusion-fraction", type=float, default=0.3)
    t.add_argument("--out", help="optional JSON report path")
    t.set_defaults(func=cmd_select_theta_o)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CoordPoseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
