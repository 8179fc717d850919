#!/usr/bin/env python3
"""End-to-end navigation demo on a synthetic yard scene.

A top-down scene of pavement, 3 cm grass, and two 0.4 m boxes is fit with a
ground plane and fused into a cost map. With stereo geometry alone the grass
(taller than the point threshold) is marked obstacle. After painting grass
and pavement drivable, boxes obstacle, and retraining the two-class head on
frozen features, the fused map opens the grass while keeping the boxes — and
a path is planned across the formerly blocked lawn.
"""

import argparse
import time

import numpy as np

from terranav import costmap, ground, network, patches, planner, synthetic


def fraction(cmap, cells, value):
    return float(np.mean([cmap.fused[c] == value for c in cells]))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", required=True,
                    help="feature-extractor checkpoint (see train_shapes.py)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ppm", help="write the fused map render here")
    args = ap.parse_args()

    t0 = time.perf_counter()
    checkpoint = network.load_checkpoint(args.checkpoint)
    scene = synthetic.make_yard_scene(seed=args.seed)
    cloud, region = scene.point_cloud(step=2)
    plane = ground.hough_plane_fit(cloud)
    print(f"ground plane normal {np.round(plane.normal, 3)}, "
          f"d {plane.d:.3f}, {plane.inlier_count} inliers")

    cfg = costmap.FusionConfig(point_height_threshold=0.02)
    obstacle, heights = ground.label_points(cloud, plane,
                                            cfg.point_height_threshold)

    by_cell = {}
    probe = costmap.empty_map(cfg)
    for p, reg in zip(cloud.points, region):
        by_cell.setdefault(probe.cell_of(p[0], p[1]), set()).add(int(reg))
    grass = [c for c, r in by_cell.items() if r == {synthetic.YardScene.GRASS}]
    boxes = [c for c, r in by_cell.items() if synthetic.YardScene.BOX in r]

    stereo_map = costmap.build_costmap(cloud.points, heights, obstacle, cfg,
                                       pixels=cloud.pixels)
    print(f"stereo only: {fraction(stereo_map, grass, patches.OBSTACLE):.0%} "
          "of grass cells marked obstacle")

    strokes = [
        patches.LabelStroke(label=patches.DRIVABLE, pixels=[
            (r, c) for r in range(90, 251, 6) for c in range(195, 286, 6)
            if scene.region[r, c] == synthetic.YardScene.GRASS]),
        patches.LabelStroke(label=patches.DRIVABLE, pixels=[
            (r, c) for r in range(40, 281, 10) for c in range(40, 151, 10)
            if scene.region[r, c] == synthetic.YardScene.PAVEMENT]),
        patches.LabelStroke(label=patches.OBSTACLE, pixels=[
            (r, c) for r in range(152, 181, 4)
            for c in list(range(222, 251, 4)) + list(range(62, 91, 4))
            if scene.region[r, c] == synthetic.YardScene.BOX]),
    ]
    labeled, _ = patches.strokes_to_patches(scene.image, strokes)
    feats = patches.patch_features_batch(
        checkpoint, np.stack([p.patch for p in labeled]))
    t1 = time.perf_counter()
    head = patches.train_head(feats, np.array([p.label for p in labeled]),
                              patches.HeadConfig(seed=args.seed))
    print(f"retrained head on {len(labeled)} patches "
          f"in {time.perf_counter() - t1:.1f}s")

    label_map = patches.classify_image(scene.image, checkpoint, head, stride=8)
    fused_map = costmap.build_costmap(cloud.points, heights, obstacle, cfg,
                                      pixels=cloud.pixels, label_map=label_map)
    print(f"after retrain: {fraction(fused_map, grass, patches.DRIVABLE):.0%} "
          "of grass cells drivable, "
          f"{fraction(fused_map, boxes, patches.OBSTACLE):.0%} "
          "of box cells obstacle")

    start = fused_map.cell_of(0.0, 0.0)
    goal = fused_map.cell_of(5.0, 2.0)  # middle of the lawn
    path = planner.plan(fused_map, planner.PlanRequest(start=start, goal=goal))
    print(f"planned {len(path.cells)} cells across the lawn, "
          f"cost {path.total_cost:.2f}, heading {path.heading:.2f} rad")

    if args.ppm:
        with open(args.ppm, "wb") as f:
            f.write(costmap.render_ppm(fused_map))
        print(f"render written to {args.ppm}")
    print(f"total {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
