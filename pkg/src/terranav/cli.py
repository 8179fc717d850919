"""Command-line entry points; every subcommand is a thin wrapper over one
library operation. Structured logs go to stderr, artifacts to flag paths.

Exit codes: 0 success, 2 usage, 3 invalid training set, 4 bad input file or
format, 5 plane fit failure, 6 planning failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

EXIT_TRAINING_SET = 3
EXIT_INPUT = 4
EXIT_PLANE_FIT = 5
EXIT_PLANNING = 6


def _log(msg: str) -> None:
    print(f"[terranav] {msg}", file=sys.stderr, flush=True)


def _load_image(path: str) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def _save_image(image: np.ndarray, path: str) -> None:
    from PIL import Image

    arr = np.clip(image, 0.0, 1.0).transpose(1, 2, 0)
    Image.fromarray((arr * 255).round().astype(np.uint8)).save(path)


def cmd_train_extractor(args) -> int:
    from . import augment, network

    images, labels = network.load_corpus_manifest(args.manifest)
    _log(f"corpus: {len(images)} images")
    base = [augment.scale_to_base(img) for img in images]
    mean_rgb = network.compute_mean_rgb(base, seed=args.seed)
    policy = augment.AugmentPolicy()
    data, data_labels = augment.build_training_set(
        base, labels, policy, seed=args.seed, fill_rgb=mean_rgb)
    _log(f"augmented training set: {len(data)} examples")
    data = network.preprocess(data, mean_rgb)
    spec = network.NetworkSpec(output_classes=args.classes)
    params = network.build_network(spec, seed=args.seed)
    config = network.TrainingConfig(num_epochs=args.epochs,
                                    batch_size=args.batch_size)
    history = network.train(params, data, data_labels, config, spec,
                            seed=args.seed, log_every=args.log_every)
    _log(f"epoch losses: {['%.4f' % h for h in history]}")
    network.save_checkpoint(params, mean_rgb, args.out, spec)
    _log(f"checkpoint written to {args.out}")
    return 0


def cmd_mean_rgb(args) -> int:
    from . import augment, network

    images, _ = network.load_corpus_manifest(args.manifest)
    base = [augment.scale_to_base(img) for img in images]
    mean = network.compute_mean_rgb(base, seed=args.seed)
    print(json.dumps({"mean_rgb": [float(v) for v in mean]}))
    return 0


def cmd_augment_preview(args) -> int:
    from . import augment, network

    images, _ = network.load_corpus_manifest(args.manifest)
    if not (0 <= args.index < len(images)):
        _log(f"index {args.index} out of range for {len(images)} images")
        return EXIT_INPUT
    base = augment.scale_to_base(images[args.index])
    rng = np.random.default_rng(args.seed)
    out = augment.augment_example(base, rng)
    _save_image(out, args.out)
    _log(f"augmented example written to {args.out}")
    return 0


def cmd_features(args) -> int:
    from . import network, patches

    checkpoint = network.load_checkpoint(args.checkpoint)
    image = _load_image(args.image)
    with open(args.strokes) as f:
        strokes = patches.strokes_from_json(f.read())
    labeled, skipped = patches.strokes_to_patches(image, strokes)
    if skipped:
        _log(f"skipped {len(skipped)} stroke pixels (border/outside)")
    if not labeled:
        _log("no usable stroke pixels")
        return EXIT_TRAINING_SET
    feats = patches.patch_features_batch(
        checkpoint, np.stack([p.patch for p in labeled]))
    labels = np.array([p.label for p in labeled], dtype=np.intp)
    np.savez(args.out, features=feats, labels=labels)
    _log(f"{len(feats)} feature vectors written to {args.out}")
    return 0


def cmd_train_head(args) -> int:
    from . import patches

    data = np.load(args.features)
    config = patches.HeadConfig(hidden_units=args.hidden, seed=args.seed)
    try:
        head = patches.train_head(data["features"], data["labels"], config)
    except patches.TrainingSetError as e:
        _log(f"invalid training set: {e}")
        return EXIT_TRAINING_SET
    with open(args.out, "w") as f:
        json.dump(head.to_dict(), f)
    _log(f"head model written to {args.out}")
    return 0


def cmd_classify(args) -> int:
    from . import network, patches

    checkpoint = network.load_checkpoint(args.checkpoint)
    with open(args.head) as f:
        head = patches.HeadModel.from_dict(json.load(f))
    image = _load_image(args.image)
    label_map = patches.classify_image(image, checkpoint, head, args.stride)
    with open(args.out, "w") as f:
        json.dump(label_map.to_rle(), f)
    _log(f"label map written to {args.out}")
    return 0


def cmd_fit_plane(args) -> int:
    from . import ground

    try:
        cloud = ground.load_point_cloud(args.cloud)
        plane = ground.hough_plane_fit(cloud)
    except ground.PointCloudFormatError as e:
        _log(f"bad point cloud: {e}")
        return EXIT_INPUT
    except ground.PlaneFitError as e:
        _log(f"plane fit failed: {e}")
        return EXIT_PLANE_FIT
    print(json.dumps({
        "normal": [float(v) for v in plane.normal],
        "d": plane.d,
        "inlier_count": plane.inlier_count,
    }))
    return 0


def cmd_fuse(args) -> int:
    from . import costmap, ground, patches

    try:
        cloud = ground.load_point_cloud(args.cloud)
        plane = ground.hough_plane_fit(cloud)
    except ground.PointCloudFormatError as e:
        _log(f"bad point cloud: {e}")
        return EXIT_INPUT
    except ground.PlaneFitError as e:
        _log(f"plane fit failed: {e}")
        return EXIT_PLANE_FIT
    config = costmap.FusionConfig(
        hard_height_threshold=args.hard_threshold,
        point_height_threshold=args.point_threshold,
        dilation_radius=args.dilation,
        map_size=args.map_size,
        resolution=args.resolution,
    )
    obstacle, heights = ground.label_points(cloud, plane,
                                            config.point_height_threshold)
    label_map = None
    if args.labelmap:
        with open(args.labelmap) as f:
            label_map = patches.LabelMap.from_rle(json.load(f))
    grid = costmap.build_costmap(cloud.points, heights, obstacle, config,
                                 pixels=cloud.pixels, label_map=label_map)
    costmap.save_grid(grid, args.out)
    _log(f"cost map written to {args.out}")
    if args.ppm:
        with open(args.ppm, "wb") as f:
            f.write(costmap.render_ppm(grid))
        _log(f"render written to {args.ppm}")
    print(json.dumps(costmap.summary(grid)))
    return 0


def cmd_plan(args) -> int:
    from . import costmap, planner

    try:
        grid = costmap.load_grid(args.grid)
    except (OSError, ValueError) as e:
        _log(f"bad grid file: {e}")
        return EXIT_INPUT
    req = planner.PlanRequest(
        start=tuple(int(v) for v in args.start.split(",")),
        goal=tuple(int(v) for v in args.goal.split(",")),
        proximity_weight=args.proximity_weight,
        proximity_scale=args.proximity_scale,
    )
    try:
        path = planner.plan(grid, req)
    except planner.PlanningError as e:
        _log(f"planning failed: {e}")
        return EXIT_PLANNING
    out = json.dumps(path.to_dict())
    if args.out:
        with open(args.out, "w") as f:
            f.write(out)
    else:
        print(out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.checkpoint, data_dir=args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="terranav")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train-extractor", help="train the feature extractor")
    t.add_argument("--manifest", required=True)
    t.add_argument("--classes", type=int, required=True)
    t.add_argument("--epochs", type=int, default=5)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--log-every", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train_extractor)

    m = sub.add_parser("mean-rgb", help="per-channel corpus mean")
    m.add_argument("--manifest", required=True)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_mean_rgb)

    a = sub.add_parser("augment-preview", help="write one augmented example")
    a.add_argument("--manifest", required=True)
    a.add_argument("--index", type=int, default=0)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_augment_preview)

    f = sub.add_parser("features", help="extract features for labeled strokes")
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--image", required=True)
    f.add_argument("--strokes", required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_features)

    th = sub.add_parser("train-head", help="train the two-class head")
    th.add_argument("--features", required=True)
    th.add_argument("--hidden", type=int, default=0)
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--out", required=True)
    th.set_defaults(func=cmd_train_head)

    c = sub.add_parser("classify", help="dense drivable/obstacle label map")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--head", required=True)
    c.add_argument("--image", required=True)
    c.add_argument("--stride", type=int, default=8)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_classify)

    fp = sub.add_parser("fit-plane", help="fit the ground plane")
    fp.add_argument("--cloud", required=True)
    fp.set_defaults(func=cmd_fit_plane)

    fu = sub.add_parser("fuse", help="build the fused cost map")
    fu.add_argument("--cloud", required=True)
    fu.add_argument("--labelmap")
    fu.add_argument("--hard-threshold", type=float, default=0.15)
    fu.add_argument("--point-threshold", type=float, default=0.04)
    fu.add_argument("--dilation", type=float, default=0.15)
    fu.add_argument("--map-size", type=float, default=15.0)
    fu.add_argument("--resolution", type=float, default=0.10)
    fu.add_argument("--ppm")
    fu.add_argument("--out", required=True)
    fu.set_defaults(func=cmd_fuse)

    pl = sub.add_parser("plan", help="plan a path over a saved cost map")
    pl.add_argument("--grid", required=True)
    pl.add_argument("--start", required=True, help="row,col")
    pl.add_argument("--goal", required=True, help="row,col")
    pl.add_argument("--proximity-weight", type=float, default=2.0)
    pl.add_argument("--proximity-scale", type=float, default=0.5)
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plan)

    sv = sub.add_parser("serve", help="run the labeling/navigation service")
    sv.add_argument("--checkpoint", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8321)
    sv.add_argument("--data-dir", default=None)
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        _log(f"missing file: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
