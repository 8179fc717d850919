"""HTTP JSON API driving the label -> retrain -> classify -> fuse -> plan loop.

Session state lives in memory. Per session, head training is guarded by a
non-blocking exclusive lock (a second concurrent train gets 409) and the
committed head model is swapped atomically, so readers always see a fully
trained model. Persist/restore round-trips strokes, head weights, config,
and history; the frozen checkpoint is referenced by content hash.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field, asdict

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from . import costmap as cm
from . import ground
from . import patches as pt
from . import planner as pl
from .network import Checkpoint, load_checkpoint


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str, details=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.details = details


class IntegrityError(ServiceError):
    def __init__(self, message, details=None):
        super().__init__(409, "integrity-error", message, details)


@dataclass
class TrainingEvent:
    timestamp: float
    example_count: int
    duration_seconds: float


@dataclass
class Session:
    id: str
    checkpoint_path: str
    checkpoint: Checkpoint
    fusion_config: cm.FusionConfig = field(default_factory=cm.FusionConfig)
    head_config: pt.HeadConfig = field(default_factory=pt.HeadConfig)
    classify_stride: int = 8
    frame: np.ndarray | None = None
    frame_bytes: bytes | None = None
    cloud: ground.PointCloud | None = None
    strokes: list = field(default_factory=list)
    pool_features: list = field(default_factory=list)  # arrays per labels post
    pool_labels: list = field(default_factory=list)
    head: pt.HeadModel | None = None
    head_version: int = 0
    frame_version: int = 0
    history: list = field(default_factory=list)
    train_lock: threading.Lock = field(default_factory=threading.Lock)
    state_lock: threading.RLock = field(default_factory=threading.RLock)
    _caches: dict = field(default_factory=dict)

    def cached(self, key, build):
        with self.state_lock:
            if key in self._caches:
                return self._caches[key]
        value = build()
        with self.state_lock:
            self._caches[key] = value
        return value


def _decode_image(data: bytes) -> np.ndarray:
    """PNG or binary PPM -> (3, H, W) float32 in [0, 1]."""
    from PIL import Image

    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.format not in ("PNG", "PPM"):
                raise ServiceError(422, "unsupported-image-format",
                                   f"unsupported image format {im.format}")
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except ServiceError:
        raise
    except Exception as e:
        raise ServiceError(422, "bad-image", f"cannot decode image: {e}")
    return arr.transpose(2, 0, 1)


def _file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def create_app(checkpoint_path: str, data_dir: str | None = None) -> FastAPI:
    checkpoint = load_checkpoint(checkpoint_path)
    app = FastAPI(title="terranav")
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions
    app.state.data_dir = data_dir or os.environ.get("TERRANAV_DATA_DIR", ".")

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        body = {"code": exc.code, "message": exc.message}
        if exc.details is not None:
            body["details"] = exc.details
        return JSONResponse(status_code=exc.status, content=body)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={
            "code": "invalid-payload",
            "message": "malformed request payload",
            "details": exc.errors(),
        })

    def get_session(session_id: str) -> Session:
        s = sessions.get(session_id)
        if s is None:
            raise ServiceError(404, "unknown-session",
                               f"no session {session_id}")
        return s

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/session", status_code=201)
    def create_session():
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = Session(id=sid, checkpoint_path=checkpoint_path,
                                checkpoint=checkpoint)
        return {"id": sid}

    @app.post("/session/{session_id}/frame")
    async def upload_frame(session_id: str, request: Request):
        s = get_session(session_id)
        payload = await _json_body(request)
        if "image_base64" not in payload:
            raise ServiceError(422, "missing-image",
                               "payload needs an 'image_base64' field")
        try:
            raw = base64.b64decode(payload["image_base64"])
        except Exception as e:
            raise ServiceError(422, "bad-image", f"invalid base64: {e}")
        frame = _decode_image(raw)
        cloud = None
        if payload.get("cloud_csv"):
            try:
                cloud = ground.load_point_cloud(payload["cloud_csv"])
            except ground.PointCloudFormatError as e:
                raise ServiceError(422, "bad-point-cloud", str(e))
        with s.state_lock:
            s.frame = frame
            s.frame_bytes = raw
            s.cloud = cloud
            s.frame_version += 1
            s._caches.clear()
        return {"frame_version": s.frame_version,
                "height": frame.shape[1], "width": frame.shape[2],
                "points": 0 if cloud is None else len(cloud)}

    @app.post("/session/{session_id}/labels")
    async def append_labels(session_id: str, request: Request):
        s = get_session(session_id)
        if s.frame is None:
            raise ServiceError(422, "no-frame", "upload a frame first")
        payload = await _json_body(request)
        try:
            strokes = pt.strokes_from_json(payload)
        except (KeyError, ValueError, TypeError) as e:
            raise ServiceError(422, "bad-strokes", f"malformed strokes: {e}")
        labeled, skipped = pt.strokes_to_patches(s.frame, strokes)
        accepted = len(labeled)
        if labeled:
            feats = pt.patch_features_batch(
                s.checkpoint, np.stack([p.patch for p in labeled]))
            labels = np.array([p.label for p in labeled], dtype=np.intp)
            with s.state_lock:
                s.strokes.extend(strokes)
                s.pool_features.append(feats)
                s.pool_labels.append(labels)
        else:
            with s.state_lock:
                s.strokes.extend(strokes)
        return {"accepted_pixels": accepted, "skipped_pixels": skipped}

    @app.post("/session/{session_id}/train")
    def train(session_id: str):
        s = get_session(session_id)
        if not s.train_lock.acquire(blocking=False):
            raise ServiceError(409, "train-in-flight",
                               "a training job is already running")
        try:
            with s.state_lock:
                if not s.pool_features:
                    raise ServiceError(422, "empty-training-set",
                                       "no labeled examples in this session")
                feats = np.concatenate(s.pool_features)
                labels = np.concatenate(s.pool_labels)
            start = time.perf_counter()
            try:
                head = pt.train_head(feats, labels, s.head_config)
            except pt.TrainingSetError as e:
                raise ServiceError(422, "invalid-training-set", str(e))
            duration = time.perf_counter() - start
            with s.state_lock:
                s.head = head
                s.head_version += 1
                event = TrainingEvent(timestamp=time.time(),
                                      example_count=len(feats),
                                      duration_seconds=duration)
                s.history.append(event)
                s._caches.clear()
            return {"duration_seconds": duration,
                    "training_set_size": len(feats),
                    "head_version": s.head_version}
        finally:
            s.train_lock.release()

    def _classification(s: Session) -> tuple[pt.LabelMap, int]:
        with s.state_lock:
            head = s.head
            version = s.head_version
            frame = s.frame
            frame_version = s.frame_version
        if frame is None:
            raise ServiceError(422, "no-frame", "upload a frame first")
        if head is None:
            raise ServiceError(422, "no-model", "train a head first")
        key = ("classification", frame_version, version, s.classify_stride)
        label_map = s.cached(key, lambda: pt.classify_image(
            frame, s.checkpoint, head, s.classify_stride))
        return label_map, version

    @app.get("/session/{session_id}/classification")
    def classification(session_id: str):
        s = get_session(session_id)
        label_map, version = _classification(s)
        body = label_map.to_rle()
        body["head_version"] = version
        return body

    def _costmap(s: Session) -> cm.CostMap:
        with s.state_lock:
            cloud = s.cloud
            frame_version = s.frame_version
            head_version = s.head_version
        if cloud is None:
            raise ServiceError(422, "no-point-cloud",
                               "the current frame has no point cloud")
        label_map = None
        if s.head is not None and s.frame is not None:
            label_map, _ = _classification(s)

        def build():
            try:
                plane = ground.hough_plane_fit(cloud)
            except ground.PlaneFitError as e:
                raise ServiceError(422, "plane-fit-failed", str(e))
            obstacle, heights = ground.label_points(
                cloud, plane, s.fusion_config.point_height_threshold)
            return cm.build_costmap(
                cloud.points, heights, obstacle, s.fusion_config,
                pixels=cloud.pixels, label_map=label_map)
        return s.cached(("costmap", frame_version, head_version), build)

    @app.get("/session/{session_id}/costmap")
    def costmap(session_id: str):
        s = get_session(session_id)
        grid = _costmap(s)
        body = cm.summary(grid)
        body["fused_rle"] = pt.LabelMap(grid.fused).to_rle()["rle"]
        return body

    @app.post("/session/{session_id}/plan")
    async def plan_route(session_id: str, request: Request):
        s = get_session(session_id)
        payload = await _json_body(request)
        if "goal" not in payload:
            raise ServiceError(422, "missing-goal", "payload needs a 'goal' cell")
        grid = _costmap(s)
        start = payload.get("start")
        if start is None:
            start = grid.cell_of(0.0, 0.0)
        try:
            req = pl.PlanRequest(start=tuple(start), goal=tuple(payload["goal"]))
            path = pl.plan(grid, req)
        except pl.UnreachableGoalError as e:
            raise ServiceError(422, "unreachable-goal", str(e))
        except pl.PlanningError as e:
            raise ServiceError(422, "planning-failed", str(e))
        return path.to_dict()

    @app.get("/session/{session_id}/model")
    def model(session_id: str):
        s = get_session(session_id)
        with s.state_lock:
            if s.head is None:
                raise ServiceError(422, "no-model", "train a head first")
            return s.head.to_dict()

    @app.post("/session/{session_id}/persist")
    async def persist(session_id: str, request: Request):
        s = get_session(session_id)
        payload = await _json_body(request)
        path = payload.get("path") or os.path.join(app.state.data_dir,
                                                   f"session-{session_id}")
        persist_session(s, path)
        return {"path": path}

    return app


async def _json_body(request: Request) -> dict:
    try:
        payload = await request.json()
    except Exception:
        raise ServiceError(422, "invalid-payload", "body is not valid JSON")
    if not isinstance(payload, dict):
        raise ServiceError(422, "invalid-payload", "body must be a JSON object")
    return payload


def persist_session(s: Session, path: str) -> None:
    """Write the session to a directory; the checkpoint itself stays where
    it is and is referenced by path + content hash."""
    os.makedirs(path, exist_ok=True)
    doc = {
        "id": s.id,
        "checkpoint_path": os.path.abspath(s.checkpoint_path),
        "checkpoint_sha256": _file_sha256(s.checkpoint_path),
        "classify_stride": s.classify_stride,
        "fusion_config": asdict(s.fusion_config),
        "head_config": asdict(s.head_config),
        "strokes": json.loads(pt.strokes_to_json(s.strokes)),
        "history": [asdict(e) for e in s.history],
        "head": s.head.to_dict() if s.head else None,
        "head_version": s.head_version,
        "frame_version": s.frame_version,
    }
    with open(os.path.join(path, "session.json"), "w") as f:
        json.dump(doc, f)
    if s.frame_bytes is not None:
        with open(os.path.join(path, "frame.bin"), "wb") as f:
            f.write(s.frame_bytes)
    if s.cloud is not None:
        ground.save_point_cloud(s.cloud, os.path.join(path, "cloud.csv"))
    if s.pool_features:
        np.savez(os.path.join(path, "pool.npz"),
                 features=np.concatenate(s.pool_features),
                 labels=np.concatenate(s.pool_labels))


def restore_session(path: str) -> Session:
    with open(os.path.join(path, "session.json")) as f:
        doc = json.load(f)
    ckpt_path = doc["checkpoint_path"]
    want = doc["checkpoint_sha256"]
    if not os.path.exists(ckpt_path):
        raise IntegrityError(
            f"checkpoint with hash {want} not found at {ckpt_path}",
            details={"sha256": want})
    got = _file_sha256(ckpt_path)
    if got != want:
        raise IntegrityError(
            f"checkpoint hash mismatch: expected {want}, found {got}",
            details={"sha256": want})
    s = Session(
        id=doc["id"],
        checkpoint_path=ckpt_path,
        checkpoint=load_checkpoint(ckpt_path),
        fusion_config=cm.FusionConfig(**doc["fusion_config"]),
        head_config=pt.HeadConfig(**doc["head_config"]),
        classify_stride=doc["classify_stride"],
    )
    s.strokes = pt.strokes_from_json(doc["strokes"])
    s.history = [TrainingEvent(**e) for e in doc["history"]]
    s.head = pt.HeadModel.from_dict(doc["head"]) if doc["head"] else None
    s.head_version = doc["head_version"]
    s.frame_version = doc["frame_version"]
    frame_file = os.path.join(path, "frame.bin")
    if os.path.exists(frame_file):
        with open(frame_file, "rb") as f:
            s.frame_bytes = f.read()
        s.frame = _decode_image(s.frame_bytes)
    cloud_file = os.path.join(path, "cloud.csv")
    if os.path.exists(cloud_file):
        s.cloud = ground.load_point_cloud(cloud_file)
    pool_file = os.path.join(path, "pool.npz")
    if os.path.exists(pool_file):
        data = np.load(pool_file)
        if len(data["features"]):
            s.pool_features = [data["features"]]
            s.pool_labels = [data["labels"]]
    return s
