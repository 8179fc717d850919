"""Acceptance suite: one test per release criterion, each printing a single
PASS/FAIL line so the run log doubles as a conformance report.

Run with ``pytest tests/test_acceptance.py -v``. The heavyweight criteria
(desk-scale extractor training, the end-to-end yard scenario) take a few
minutes combined on one CPU core.
"""

import base64
import heapq
import io
import math
import threading
import time
from contextlib import contextmanager

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import finite_difference, rel_error
from terranav import augment as A
from terranav import costmap as C
from terranav import ground as G
from terranav import network as N
from terranav import patches as pt
from terranav import planner as P
from terranav import synthetic as syn
from terranav import tensor_ops as T
from terranav import service as S
from terranav.patches import DRIVABLE, OBSTACLE, UNKNOWN


@pytest.fixture
def announce(capfd):
    @contextmanager
    def criterion(num, name):
        status = "FAIL"
        try:
            yield
            status = "PASS"
        finally:
            with capfd.disabled():
                print(f"\n[acceptance] criterion {num:02d} {name}: {status}",
                      flush=True)
    return criterion


def test_01_architecture_conformance(announce):
    with announce(1, "architecture-conformance"):
        spec = N.NetworkSpec()
        expected = [
            (3, 119, 119), (64, 28, 28), (64, 14, 14), (96, 10, 10),
            (96, 5, 5), (2400,), (1536,), (1000,),
        ]
        assert spec.shape_chain() == expected
        params = N.build_network(spec, seed=0)
        x = np.random.default_rng(0).uniform(size=(3, 119, 119)).astype(np.float32)
        start = time.perf_counter()
        logits, it = N.forward(params, x, spec, want_intermediates=True)
        elapsed = time.perf_counter() - start
        stages = [x, it["c1"], it["p1"], it["c2"], it["p2"], it["flat"],
                  it["hidden"], logits]
        assert [s.shape for s in stages] == expected
        assert elapsed < 1.0, f"forward took {elapsed:.2f}s"


def _well_separated(rng, shape):
    """Distinct values, none near zero, so the finite-difference probe can
    never flip a max-pool argmax or cross the relu kink."""
    vals = np.linspace(-1.0, 1.0, int(np.prod(shape))) + 0.003
    return rng.permutation(vals).reshape(shape)


def test_02_gradient_correctness(announce):
    with announce(2, "gradient-correctness"):
        start = time.perf_counter()
        for trial in range(20):
            rng = np.random.default_rng(100 + trial)
            # convolution: input, weight, and bias gradients
            stride = 1 + trial % 2
            x = rng.uniform(-1, 1, size=(2, 6, 6))
            w = rng.uniform(-1, 1, size=(3, 2, 3, 3))
            b = rng.uniform(-1, 1, size=3)
            r = rng.uniform(-1, 1, size=T.conv2d_forward(x, w, b, stride).shape)
            g = T.conv2d_backward(x, w, stride, r)
            assert rel_error(g.input_grad, finite_difference(
                lambda v: float((T.conv2d_forward(v, w, b, stride) * r).sum()), x)) < 1e-4
            assert rel_error(g.weight_grad, finite_difference(
                lambda v: float((T.conv2d_forward(x, v, b, stride) * r).sum()), w)) < 1e-4
            assert rel_error(g.bias_grad, finite_difference(
                lambda v: float((T.conv2d_forward(x, w, v, stride) * r).sum()), b)) < 1e-4

            # max pooling (values spaced so the argmax is stable under probing)
            xp = _well_separated(rng, (2, 4, 4))
            rp = rng.uniform(-1, 1, size=(2, 2, 2))
            _, arg = T.maxpool2d_forward(xp)
            assert rel_error(
                T.maxpool2d_backward(arg, xp.shape, rp),
                finite_difference(
                    lambda v: float((T.maxpool2d_forward(v)[0] * rp).sum()), xp)) < 1e-4

            # relu (values kept away from the kink)
            xr = _well_separated(rng, (11,))
            rr = rng.uniform(-1, 1, size=11)
            assert rel_error(
                T.relu_backward(xr, rr),
                finite_difference(lambda v: float((T.relu(v) * rr).sum()), xr)) < 1e-4

            # linear layer
            xl = rng.uniform(-1, 1, size=7)
            wl = rng.uniform(-1, 1, size=(4, 7))
            bl = rng.uniform(-1, 1, size=4)
            rl = rng.uniform(-1, 1, size=4)
            gl = T.linear_backward(xl, wl, rl)
            assert rel_error(gl.input_grad, finite_difference(
                lambda v: float((T.linear_forward(v, wl, bl) * rl).sum()), xl)) < 1e-4
            assert rel_error(gl.weight_grad, finite_difference(
                lambda v: float((T.linear_forward(xl, v, bl) * rl).sum()), wl)) < 1e-4
            assert rel_error(gl.bias_grad, finite_difference(
                lambda v: float((T.linear_forward(xl, wl, v) * rl).sum()), bl)) < 1e-4

            # softmax + negative log likelihood
            logits = rng.uniform(-2, 2, size=6)
            target = int(rng.integers(0, 6))
            _, dlogits = T.softmax_nll(logits, target)
            assert rel_error(dlogits, finite_difference(
                lambda v: float(T.softmax_nll(v, target)[0]), logits)) < 1e-4
        assert time.perf_counter() - start < 60.0


def test_03_hyperparameter_fidelity(announce):
    with announce(3, "hyperparameter-fidelity"):
        cfg = N.TrainingConfig(batch_size=64)
        want = 0.05 * math.sqrt(64) / math.sqrt(128)
        assert abs(N.learning_rate(cfg, 0) - want) < 1e-12
        for i in range(40):
            ratio = N.learning_rate(cfg, i + 1) / N.learning_rate(cfg, i)
            assert abs(ratio - 0.96) < 1e-12
        assert N.TrainingConfig().momentum == 0.08
        assert T.SgdState(momentum_coefficient=N.TrainingConfig().momentum
                          ).momentum_coefficient == 0.08


def test_04_desk_scale_training(announce):
    with announce(4, "desk-scale-training"):
        start = time.perf_counter()
        images, labels = syn.make_shape_corpus(1000, seed=0)
        base = [A.scale_to_base(img) for img in images]
        mean = N.compute_mean_rgb(base, seed=0)
        data, data_labels = A.build_training_set(
            base, labels, A.AugmentPolicy(), seed=0, fill_rgb=mean)
        assert len(data) == 4000
        data = N.preprocess(data, mean)
        spec = N.NetworkSpec(output_classes=10)
        params = N.build_network(spec, seed=0)
        history = N.train(params, data, data_labels,
                          N.TrainingConfig(num_epochs=5), spec, seed=0)
        assert all(a > b for a, b in zip(history, history[1:])), history
        correct = 0
        for s in range(0, len(data), 256):
            logits = N.forward(params, data[s:s + 256], spec)
            correct += int((np.argmax(logits, axis=-1)
                            == data_labels[s:s + 256]).sum())
        accuracy = correct / len(data)
        elapsed = time.perf_counter() - start
        assert accuracy >= 0.80, f"training accuracy {accuracy:.3f}"
        assert elapsed < 900.0, f"took {elapsed:.0f}s"


def test_05_fast_retrain(announce):
    with announce(5, "fast-retrain"):
        rng = np.random.default_rng(0)
        centers = rng.normal(size=(2, pt.FEATURE_DIM))
        centers *= 4.0 / np.linalg.norm(centers[1] - centers[0])
        labels = np.repeat([DRIVABLE, OBSTACLE], 1000)
        feats = (centers[labels]
                 + rng.normal(scale=1.0, size=(2000, pt.FEATURE_DIM))
                 ).astype(np.float32)
        start = time.perf_counter()
        head = pt.train_head(feats, labels, pt.HeadConfig(seed=0))
        elapsed = time.perf_counter() - start
        accuracy = float((head.predict(feats) == labels).mean())
        assert elapsed <= 5.0, f"retrain took {elapsed:.2f}s"
        assert accuracy >= 0.99, f"accuracy {accuracy:.4f}"


class _ForcedRng:
    """Stand-in rng producing a fixed transform draw."""

    def __init__(self, flip_u=0.9, scale=1.0, angle=0.0, shifts=(0, 0)):
        self.flip_u, self.scale, self.angle = flip_u, scale, angle
        self.shifts = list(shifts)

    def random(self):
        return self.flip_u

    def uniform(self, lo, hi):
        return self.scale if (lo, hi) == A.AugmentPolicy().scale_range else self.angle

    def integers(self, lo, hi):
        return self.shifts.pop(0)


def test_06_augmentation_statistics(announce):
    with announce(6, "augmentation-statistics"):
        rng = np.random.default_rng(0)
        policy = A.AugmentPolicy()
        counts = np.zeros(4)
        for _ in range(10000):
            branch, _, _, _ = A._sample_transform(rng, policy)
            counts[branch] += 1
        freqs = counts / 10000
        assert np.all(np.abs(freqs - 0.25) <= 0.02), freqs

        img = np.random.default_rng(1).uniform(size=(3, 128, 128)).astype(np.float32)
        out = A.augment_example(img, _ForcedRng())
        np.testing.assert_array_equal(out, img[:, 4:123, 4:123])

        images = [np.random.default_rng(i).uniform(size=(3, 128, 128)).astype(np.float32)
                  for i in range(30)]
        data, data_labels = A.build_training_set(
            images, np.zeros(30, dtype=np.intp), policy, seed=0,
            fill_rgb=(0.5, 0.5, 0.5))
        assert len(data) == 4 * 30 and len(data_labels) == 4 * 30


def test_07_ground_plane_recovery(announce):
    with announce(7, "ground-plane-recovery"):
        for trial in range(50):
            rng = np.random.default_rng(1000 + trial)
            tilt = math.radians(rng.uniform(0.0, 25.0))
            azimuth = rng.uniform(0.0, 2 * math.pi)
            normal = np.array([math.sin(tilt) * math.cos(azimuth),
                               math.sin(tilt) * math.sin(azimuth),
                               math.cos(tilt)])
            d = rng.uniform(-0.3, 0.3)
            helper = np.array([1.0, 0.0, 0.0])
            if abs(normal @ helper) > 0.9:
                helper = np.array([0.0, 1.0, 0.0])
            u = np.cross(normal, helper)
            u /= np.linalg.norm(u)
            v = np.cross(normal, u)
            coords = rng.uniform(-1.0, 1.0, size=(800, 2))
            pts = d * normal + coords[:, :1] * u + coords[:, 1:] * v
            outliers = rng.uniform(-0.5, 0.5, size=(200, 3))  # 20% of the cloud
            cloud = G.PointCloud(points=np.concatenate([pts, outliers]))
            plane = G.hough_plane_fit(cloud)
            cos = np.clip(plane.normal @ normal, -1.0, 1.0)
            assert math.degrees(math.acos(cos)) < 2.0, f"trial {trial}"
            assert abs(plane.d - d) < 0.01, f"trial {trial}"


def test_08_fusion_truth_table(announce):
    with announce(8, "fusion-truth-table"):
        cfg = C.FusionConfig()  # hard height threshold 0.15 m
        heights = [np.nan, 0.05, 0.50]  # unknown, under, over
        labels = [DRIVABLE, OBSTACLE, UNKNOWN]
        combos = [(h, n, s) for h in heights for n in labels for s in labels]
        n_cells = len(combos)
        cmap = C.CostMap(
            origin=(0.0, 0.0), resolution=cfg.resolution,
            max_height=np.array([[h for h, _, _ in combos]]),
            stereo_label=np.array([[s for _, _, s in combos]], dtype=np.int8),
            net_label=np.array([[n for _, n, _ in combos]], dtype=np.int8),
            fused=np.full((1, n_cells), UNKNOWN, dtype=np.int8))
        fused = C.fuse(cmap, cfg).fused[0]

        def expected(h, net, stereo):
            if not np.isnan(h) and h > cfg.hard_height_threshold:
                return OBSTACLE  # hard geometric override, network ignored
            if not np.isnan(h):
                return net if net != UNKNOWN else stereo
            return net

        for i, (h, net, stereo) in enumerate(combos):
            assert fused[i] == expected(h, net, stereo), (h, net, stereo)
        # the two cases the fusion rule exists for, verbatim:
        # low vegetation (under threshold, stereo says obstacle) stays drivable
        assert fused[combos.index((0.05, DRIVABLE, OBSTACLE))] == DRIVABLE
        # tall geometry is an obstacle even when the network says drivable
        assert fused[combos.index((0.50, DRIVABLE, DRIVABLE))] == OBSTACLE


def _oracle_distance(obstacle, resolution):
    """Min Euclidean center distance to any obstacle cell, by enumeration."""
    rows, cols = obstacle.shape
    obs = np.argwhere(obstacle)
    if len(obs) == 0:
        return np.full(obstacle.shape, np.inf)
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    cells = np.stack([rr.ravel(), cc.ravel()], axis=1)
    d2 = ((cells[:, None, :] - obs[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    return resolution * np.sqrt(d2).reshape(rows, cols)


def test_09_dilation_and_distance(announce):
    with announce(9, "dilation-and-distance"):
        res, radius = 0.05, 0.12
        cfg = C.FusionConfig(resolution=res, map_size=50 * res,
                             dilation_radius=radius)
        for seed in range(100):
            rng = np.random.default_rng(seed)
            fused = np.where(rng.random((50, 50)) < 0.1, OBSTACLE,
                             DRIVABLE).astype(np.int8)
            cmap = C.CostMap(origin=(0.0, 0.0), resolution=res,
                             max_height=np.full((50, 50), np.nan),
                             stereo_label=fused.copy(), net_label=fused.copy(),
                             fused=fused)
            oracle = _oracle_distance(fused == OBSTACLE, res)
            dist = C.distance_transform(cmap).distance_to_obstacle
            assert np.allclose(dist, oracle, atol=1e-9, equal_nan=True)
            dilated = C.dilate_obstacles(cmap, radius).fused
            want = np.where(oracle <= radius + 1e-12, OBSTACLE, fused)
            assert np.array_equal(dilated, want)

        # one obstacle, 15 cm dilation at 5 cm resolution: the 3-cell disk
        fused = np.full((9, 9), DRIVABLE, dtype=np.int8)
        fused[4, 4] = OBSTACLE
        cmap = C.CostMap(origin=(0.0, 0.0), resolution=0.05,
                         max_height=np.full((9, 9), np.nan),
                         stereo_label=fused.copy(), net_label=fused.copy(),
                         fused=fused)
        dilated = C.dilate_obstacles(cmap, 0.15).fused
        rr, cc = np.meshgrid(np.arange(9) - 4, np.arange(9) - 4, indexing="ij")
        disk = rr ** 2 + cc ** 2 <= 9
        assert np.array_equal(dilated == OBSTACLE, disk)
        assert int(disk.sum()) == 29


def _uniform_cost_search(cmap, req):
    """Exhaustive Dijkstra oracle with no heuristic."""
    rows, cols = cmap.shape
    res = cmap.resolution
    mult = 1.0 + req.proximity_weight * np.exp(
        -cmap.distance_to_obstacle / req.proximity_scale)
    mult = np.where(cmap.fused == UNKNOWN, mult * req.unknown_penalty, mult)
    blocked = cmap.fused == OBSTACLE
    dist = {req.start: 0.0}
    heap = [(0.0, req.start)]
    done = set()
    while heap:
        d, cell = heapq.heappop(heap)
        if cell in done:
            continue
        done.add(cell)
        if cell == req.goal:
            return d
        r, c = cell
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == dc == 0:
                    continue
                nr, nc = r + dr, c + dc
                if not (0 <= nr < rows and 0 <= nc < cols):
                    continue
                if blocked[nr, nc]:
                    continue
                step = res * (math.sqrt(2) if dr and dc else 1.0)
                nd = d + step * mult[nr, nc]
                if nd < dist.get((nr, nc), math.inf):
                    dist[(nr, nc)] = nd
                    heapq.heappush(heap, (nd, (nr, nc)))
    return None


def _planner_map(fused, resolution=0.10):
    cmap = C.CostMap(origin=(0.0, 0.0), resolution=resolution,
                     max_height=np.full(fused.shape, np.nan),
                     stereo_label=np.full(fused.shape, UNKNOWN, dtype=np.int8),
                     net_label=np.full(fused.shape, UNKNOWN, dtype=np.int8),
                     fused=np.asarray(fused, dtype=np.int8))
    return C.distance_transform(cmap)


def test_10_planner_optimality(announce):
    with announce(10, "planner-optimality"):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            fused = rng.choice([DRIVABLE, OBSTACLE, UNKNOWN], size=(30, 30),
                               p=[0.65, 0.15, 0.2]).astype(np.int8)
            fused[0, 0] = DRIVABLE
            fused[29, 29] = DRIVABLE
            cmap = _planner_map(fused)
            req = P.PlanRequest(start=(0, 0), goal=(29, 29))
            want = _uniform_cost_search(cmap, req)
            if want is None:
                with pytest.raises(P.UnreachableGoalError):
                    P.plan(cmap, req)
            else:
                assert abs(P.plan(cmap, req).total_cost - want) < 1e-9, seed

        # with the proximity term off, cost is the plain shortest path
        free = _planner_map(np.full((12, 12), DRIVABLE, dtype=np.int8))
        path = P.plan(free, P.PlanRequest(start=(0, 0), goal=(7, 11),
                                          proximity_weight=0.0))
        assert abs(path.total_cost - 0.10 * (7 * math.sqrt(2) + 4)) < 1e-9


def test_11_end_to_end_yard(announce, frozen_checkpoint):
    with announce(11, "end-to-end-yard"):
        start = time.perf_counter()
        scene = syn.make_yard_scene(seed=0)
        cloud, region = scene.point_cloud(step=2)
        plane = G.hough_plane_fit(cloud)
        cfg = C.FusionConfig(point_height_threshold=0.02)
        obstacle, heights = G.label_points(cloud, plane,
                                           cfg.point_height_threshold)

        def cell_regions(cmap):
            """Per-cell region sets, from the points that land in each cell."""
            by_cell = {}
            for p, reg in zip(cloud.points, region):
                by_cell.setdefault(cmap.cell_of(p[0], p[1]), set()).add(int(reg))
            return by_cell

        # stereo only: 3 cm grass pokes above the 2 cm point threshold
        stereo_map = C.build_costmap(cloud.points, heights, obstacle, cfg,
                                     pixels=cloud.pixels)
        regions = cell_regions(stereo_map)
        grass_cells = [c for c, r in regions.items() if r == {syn.YardScene.GRASS}]
        box_cells = [c for c, r in regions.items() if syn.YardScene.BOX in r]
        grass_obstacle = np.mean([stereo_map.fused[c] == OBSTACLE
                                  for c in grass_cells])
        assert grass_obstacle >= 0.95, grass_obstacle

        # paint grass and pavement drivable, boxes obstacle, and retrain
        strokes = [pt.LabelStroke(label=DRIVABLE, pixels=[
            (r, c) for r in range(90, 251, 6) for c in range(195, 286, 6)
            if scene.region[r, c] == syn.YardScene.GRASS])]
        strokes.append(pt.LabelStroke(label=DRIVABLE, pixels=[
            (r, c) for r in range(40, 281, 10) for c in range(40, 151, 10)
            if scene.region[r, c] == syn.YardScene.PAVEMENT]))
        strokes.append(pt.LabelStroke(label=OBSTACLE, pixels=[
            (r, c) for r in range(152, 181, 4) for c in list(range(222, 251, 4))
            + list(range(62, 91, 4)) if scene.region[r, c] == syn.YardScene.BOX]))
        labeled, skipped = pt.strokes_to_patches(scene.image, strokes)
        assert not skipped
        feats = pt.patch_features_batch(
            frozen_checkpoint, np.stack([p.patch for p in labeled]))
        head = pt.train_head(feats, np.array([p.label for p in labeled]),
                             pt.HeadConfig(seed=0))
        label_map = pt.classify_image(scene.image, frozen_checkpoint, head,
                                      stride=8)

        fused_map = C.build_costmap(cloud.points, heights, obstacle, cfg,
                                    pixels=cloud.pixels, label_map=label_map)
        grass_drivable = np.mean([fused_map.fused[c] == DRIVABLE
                                  for c in grass_cells])
        box_obstacle = np.mean([fused_map.fused[c] == OBSTACLE
                                for c in box_cells])
        elapsed = time.perf_counter() - start
        assert grass_drivable >= 0.90, grass_drivable
        assert box_obstacle == 1.0, box_obstacle
        assert elapsed < 120.0, f"took {elapsed:.0f}s"


def _frame_payload():
    from PIL import Image

    rng = np.random.default_rng(0)
    img = np.zeros((3, 90, 90), dtype=np.float32)
    img[0, :, :45] = 0.8
    img[1, :, 45:] = 0.8
    img = np.clip(img + rng.uniform(0, 0.05, img.shape).astype(np.float32), 0, 1)
    arr = (img.transpose(1, 2, 0) * 255).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return {"image_base64": base64.b64encode(buf.getvalue()).decode()}


def test_12_service_contract(announce, checkpoint_path):
    with announce(12, "service-contract"):
        app = S.create_app(checkpoint_path)
        with TestClient(app, raise_server_exceptions=False) as client:
            sid = client.post("/session").json()["id"]
            assert client.post(f"/session/{sid}/frame",
                               json=_frame_payload()).status_code == 200
            strokes = {"strokes": [
                {"class": "obstacle",
                 "pixels": [[r, c] for r in range(35, 45) for c in range(31, 41)]},
                {"class": "drivable",
                 "pixels": [[r, c] for r in range(35, 45) for c in range(49, 59)]},
            ]}
            resp = client.post(f"/session/{sid}/labels", json=strokes)
            assert resp.status_code == 200 and resp.json()["accepted_pixels"] == 200

            # stroke -> train -> classify round trip
            assert client.post(f"/session/{sid}/train").status_code == 200
            body = client.get(f"/session/{sid}/classification").json()
            label_map = pt.LabelMap.from_rle(body)
            for stroke in strokes["strokes"]:
                want = pt.CLASS_IDS[stroke["class"]]
                hit = np.mean([label_map.values[r, c] == want
                               for r, c in stroke["pixels"]])
                assert hit >= 0.9, (stroke["class"], hit)

            # hammer: concurrent classification during retrains never errors
            # and never reports an uncommitted model version
            stop = threading.Event()
            failures = []

            def classify_loop():
                while not stop.is_set():
                    r = client.get(f"/session/{sid}/classification")
                    if r.status_code != 200 or r.json()["head_version"] < 1:
                        failures.append(r.status_code)
                        return

            worker = threading.Thread(target=classify_loop)
            worker.start()
            try:
                for _ in range(3):
                    assert client.post(f"/session/{sid}/train").status_code == 200
            finally:
                stop.set()
                worker.join()
            assert not failures

            # two concurrent trains: exactly one wins, the other gets 409
            real = pt.train_head
            S.pt.train_head = lambda *a, **k: (time.sleep(0.4), real(*a, **k))[1]
            try:
                codes = []
                threads = [threading.Thread(target=lambda: codes.append(
                    client.post(f"/session/{sid}/train").status_code))
                    for _ in range(2)]
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
            finally:
                S.pt.train_head = real
            assert sorted(codes) == [200, 409]
