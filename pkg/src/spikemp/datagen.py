"""Deterministic synthetic datasets: 3D point-cloud primitives and event clouds.

Point clouds are sampled from eight geometric primitives (sphere, cube,
cylinder, cone, torus, plane, helix, cross), given a random pose and optional
Gaussian jitter, and normalized to the unit cube. Event clouds are
moving-primitive trajectories rasterized into DVS-style [t, p, x, y] rows.

Every sample draws from its own generator seeded by (dataset seed, class,
sample index), so generation is a pure function of the parameters and can be
parallelized or re-run in any order without changing a single bit.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path


import numpy as np

MAGIC = b"SPKP"
FORMAT_VERSION = 1

POINT_CLASSES = ("sphere", "cube", "cylinder", "cone", "torus", "plane", "helix", "cross")
EVENT_CLASSES = (
    "slide_right",
    "slide_left",
    "slide_up",
    "slide_down",
    "orbit",
    "diagonal",
    "zigzag",
    "expand",
)


@dataclass
class PointCloudSample:
    points: np.ndarray  # [N, 3] in [-1, 1]^3
    label: int


@dataclass
class PointDataset:
    train_points: np.ndarray  # [S_train, N, 3]
    train_labels: np.ndarray
    test_points: np.ndarray
    test_labels: np.ndarray
    class_names: tuple
    n_points: int
    seed: int
    noise_sigma: float


@dataclass
class EventCloudSample:
    events: np.ndarray  # [M, 4] rows [t, p, x, y]
    label: int


@dataclass
class EventDataset:
    train: list
    test: list
    class_names: tuple
    sensor: int
    duration_steps: int
    seed: int


def _sample_rng(seed: int, class_id: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(class_id, index)))


def _rotation(rng: np.random.Generator, max_tilt: float = 0.35) -> np.ndarray:
    """Uniform yaw plus a bounded tilt about a random horizontal axis."""
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    cz, sz = np.cos(yaw), np.sin(yaw)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    tilt = rng.uniform(0.0, max_tilt)
    ax = rng.uniform(0.0, 2.0 * np.pi)
    axis = np.array([np.cos(ax), np.sin(ax), 0.0])
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    rt = np.eye(3) + np.sin(tilt) * k + (1.0 - np.cos(tilt)) * (k @ k)
    return rt @ rz


def _shape_sphere(rng, n):
    r = rng.uniform(0.5, 0.85)
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return r * d


def _shape_cube(rng, n):
    s = rng.uniform(0.45, 0.75)
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-s, s, size=(n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    for a in range(3):
        m = axis == a
        others = [i for i in range(3) if i != a]
        pts[m, a] = sign[m] * s
        pts[np.ix_(m, others)] = uv[m]
    return pts


def _shape_cylinder(rng, n):
    r = rng.uniform(0.3, 0.55)
    h = rng.uniform(0.9, 1.5)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    z = rng.uniform(-h / 2.0, h / 2.0, size=n)
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def _shape_cone(rng, n):
    r = rng.uniform(0.4, 0.7)
    h = rng.uniform(0.9, 1.5)
    # area-uniform on the lateral surface: radius grows with sqrt of the draw
    t = np.sqrt(rng.uniform(0.0, 1.0, size=n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.stack(
        [r * t * np.cos(theta), r * t * np.sin(theta), h * (t - 0.5)], axis=1
    )


def _shape_torus(rng, n):
    big = rng.uniform(0.45, 0.6)
    tube = rng.uniform(0.12, 0.22)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    ring = big + tube * np.cos(phi)
    return np.stack([ring * np.cos(theta), ring * np.sin(theta), tube * np.sin(phi)], axis=1)


def _shape_plane(rng, n):
    s = rng.uniform(0.6, 0.9)
    xy = rng.uniform(-s, s, size=(n, 2))
    return np.concatenate([xy, np.zeros((n, 1))], axis=1)


def _shape_helix(rng, n):
    r = rng.uniform(0.4, 0.6)
    turns = rng.uniform(1.5, 2.5)
    t = rng.uniform(0.0, 1.0, size=n)
    ang = 2.0 * np.pi * turns * t
    z = 1.4 * (t - 0.5)
    return np.stack([r * np.cos(ang), r * np.sin(ang), z], axis=1)


def _shape_cross(rng, n):
    w = rng.uniform(0.08, 0.15)
    length = 0.8
    bar = rng.integers(0, 2, size=n)
    pts = np.empty((n, 3))
    along = rng.uniform(-length, length, size=n)
    off = rng.uniform(-w, w, size=(n, 2))
    m = bar == 0
    pts[m, 0] = along[m]
    pts[m, 1] = off[m, 0]
    pts[m, 2] = off[m, 1]
    pts[~m, 1] = along[~m]
    pts[~m, 0] = off[~m, 0]
    pts[~m, 2] = off[~m, 1]
    return pts


_SHAPE_FNS = (
    _shape_sphere,
    _shape_cube,
    _shape_cylinder,
    _shape_cone,
    _shape_torus,
    _shape_plane,
    _shape_helix,
    _shape_cross,
)


def make_point_sample(
    class_id: int, index: int, n_points: int, noise_sigma: float, seed: int
) -> PointCloudSample:
    rng = _sample_rng(seed, class_id, index)
    pts = _SHAPE_FNS[class_id](rng, n_points)
    pts = pts @ _rotation(rng).T
    pts *= rng.uniform(0.85, 1.0)
    if noise_sigma > 0.0:
        pts = pts + rng.normal(0.0, noise_sigma, size=pts.shape)
    np.clip(pts, -1.0, 1.0, out=pts)
    return PointCloudSample(points=pts, label=class_id)


def generate_point_dataset(
    classes: int,
    per_class: int,
    n_points: int = 256,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> PointDataset:
    """Deterministic labeled point clouds with a stratified 80/20 split."""
    if not 2 <= classes <= len(POINT_CLASSES):
        raise ValueError(f"classes must be in [2, {len(POINT_CLASSES)}], got {classes}")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    n_test = max(1, round(per_class / 5)) if per_class >= 2 else 0
    train_pts, train_lab, test_pts, test_lab = [], [], [], []
    for c in range(classes):
        for i in range(per_class):
            sample = make_point_sample(c, i, n_points, noise_sigma, seed)
            if i >= per_class - n_test:
                test_pts.append(sample.points)
                test_lab.append(c)
            else:
                train_pts.append(sample.points)
                train_lab.append(c)
    return PointDataset(
        train_points=np.stack(train_pts) if train_pts else np.empty((0, n_points, 3)),
        train_labels=np.asarray(train_lab, dtype=np.int64),
        test_points=np.stack(test_pts) if test_pts else np.empty((0, n_points, 3)),
        test_labels=np.asarray(test_lab, dtype=np.int64),
        class_names=POINT_CLASSES[:classes],
        n_points=n_points,
        seed=seed,
        noise_sigma=noise_sigma,
    )


def shape_statistics(points: np.ndarray) -> np.ndarray:
    """Simple rotation-tolerant geometric features for the sanity classifier."""
    norms = np.linalg.norm(points, axis=-1)
    centered = points - points.mean(axis=-2, keepdims=True)
    sv = np.linalg.svd(centered, compute_uv=False)
    sv = sv / (sv.sum(axis=-1, keepdims=True) + 1e-12)
    return np.concatenate(
        [
            norms.mean(axis=-1, keepdims=True),
            norms.std(axis=-1, keepdims=True),
            sv,
        ],
        axis=-1,
    )


def nearest_centroid_accuracy(ds: PointDataset) -> float:
    """Train-set centroids over shape statistics, scored on the test set."""
    feats_train = shape_statistics(ds.train_points)
    feats_test = shape_statistics(ds.test_points)
    classes = int(ds.train_labels.max()) + 1
    centroids = np.stack(
        [feats_train[ds.train_labels == c].mean(axis=0) for c in range(classes)]
    )
    d = np.linalg.norm(feats_test[:, None, :] - centroids[None, :, :], axis=2)
    pred = d.argmin(axis=1)
    return float((pred == ds.test_labels).mean())


# ---------------------------------------------------------------------------
# On-disk formats
# ---------------------------------------------------------------------------


def write_point_split(path, points: np.ndarray, labels: np.ndarray) -> None:
    """Little-endian binary: 16-byte header, then per-sample label + float32 coords."""
    points = np.asarray(points)
    labels = np.asarray(labels)
    count, n_points = points.shape[0], points.shape[1] if points.ndim == 3 else 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, count, n_points))
        for i in range(count):
            fh.write(struct.pack("<i", int(labels[i])))
            fh.write(np.ascontiguousarray(points[i], dtype="<f4").tobytes())


def read_point_split(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        version, count, n_points = struct.unpack("<III", fh.read(12))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {version}")
        points = np.empty((count, n_points, 3), dtype=np.float32)
        labels = np.empty(count, dtype=np.int64)
        for i in range(count):
            (labels[i],) = struct.unpack("<i", fh.read(4))
            raw = fh.read(n_points * 3 * 4)
            points[i] = np.frombuffer(raw, dtype="<f4").reshape(n_points, 3)
    return points, labels


def save_point_dataset(ds: PointDataset, directory) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train_path = directory / "train.spk"
    test_path = directory / "test.spk"
    write_point_split(train_path, ds.train_points, ds.train_labels)
    write_point_split(test_path, ds.test_points, ds.test_labels)
    return train_path, test_path


def export_point_csv(path, points: np.ndarray, labels: np.ndarray) -> None:
    """Human-readable mirror of a split, one row per point."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "label", "x", "y", "z"])
        for i in range(points.shape[0]):
            for p in points[i]:
                writer.writerow([i, int(labels[i]), f"{p[0]:.6f}", f"{p[1]:.6f}", f"{p[2]:.6f}"])


# ---------------------------------------------------------------------------
# Event clouds
# ---------------------------------------------------------------------------


def _trajectory(class_id: int, step: int, duration: int, sensor: int, rng_params: dict):
    """Center of the moving blob at a given step, plus its radius."""
    f = step / max(duration - 1, 1)
    pad = rng_params["radius"] + 1
    lo, hi = pad, sensor - 1 - pad
    span = hi - lo
    name = EVENT_CLASSES[class_id]
    cy = rng_params["offset"]
    if name == "slide_right":
        x, y = lo + f * span, cy
    elif name == "slide_left":
        x, y = hi - f * span, cy
    elif name == "slide_up":
        x, y = cy, lo + f * span
    elif name == "slide_down":
        x, y = cy, hi - f * span
    elif name == "orbit":
        ang = 2.0 * np.pi * (f * rng_params["speed"] + rng_params["phase"])
        r = span / 2.0
        x = sensor / 2.0 + r * np.cos(ang)
        y = sensor / 2.0 + r * np.sin(ang)
    elif name == "diagonal":
        x, y = lo + f * span, lo + f * span
    elif name == "zigzag":
        x = lo + f * span
        y = sensor / 2.0 + (span / 2.0) * np.sign(np.sin(4.0 * np.pi * f + rng_params["phase"]))
    else:  # expand: growing ring around the center
        x, y = sensor / 2.0, sensor / 2.0
    radius = rng_params["radius"]
    if name == "expand":
        radius = 1.0 + f * (sensor / 2.0 - 2.0)
    return x, y, radius


def _occupancy(x: float, y: float, radius: float, sensor: int, ring: bool) -> np.ndarray:
    yy, xx = np.mgrid[0:sensor, 0:sensor]
    d = np.sqrt((xx - x) ** 2 + (yy - y) ** 2)
    if ring:
        return (np.abs(d - radius) <= 1.0).astype(np.int8)
    return (d <= radius).astype(np.int8)


def make_event_sample(
    class_id: int, index: int, duration_steps: int, sensor: int, seed: int
) -> EventCloudSample:
    rng = _sample_rng(seed, class_id, 10_000 + index)
    params = {
        "radius": float(rng.uniform(2.0, 4.0)),
        "offset": float(rng.uniform(sensor * 0.3, sensor * 0.7)),
        "phase": float(rng.uniform(0.0, 2.0 * np.pi)),
        "speed": float(rng.uniform(0.8, 1.2)),
    }
    ring = EVENT_CLASSES[class_id] == "expand"
    rows = []
    prev = np.zeros((sensor, sensor), dtype=np.int8)
    for t in range(duration_steps):
        x, y, radius = _trajectory(class_id, t, duration_steps, sensor, params)
        occ = _occupancy(x, y, radius, sensor, ring)
        on = np.argwhere((occ == 1) & (prev == 0))
        off = np.argwhere((occ == 0) & (prev == 1))
        for py, px in on:
            rows.append((t, 1, px, py))
        for py, px in off:
            rows.append((t, 0, px, py))
        prev = occ
    events = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
    return EventCloudSample(events=events, label=class_id)


def generate_event_dataset(
    classes: int,
    per_class: int,
    duration_steps: int,
    seed: int = 0,
    sensor: int = 32,
) -> EventDataset:
    """Deterministic moving-primitive event clouds with an 80/20 split."""
    if not 2 <= classes <= len(EVENT_CLASSES):
        raise ValueError(f"classes must be in [2, {len(EVENT_CLASSES)}], got {classes}")
    if duration_steps < 2:
        raise ValueError(f"duration_steps must be >= 2, got {duration_steps}")
    n_test = max(1, round(per_class / 5)) if per_class >= 2 else 0
    train, test = [], []
    for c in range(classes):
        for i in range(per_class):
            sample = make_event_sample(c, i, duration_steps, sensor, seed)
            (test if i >= per_class - n_test else train).append(sample)
    return EventDataset(
        train=train,
        test=test,
        class_names=EVENT_CLASSES[:classes],
        sensor=sensor,
        duration_steps=duration_steps,
        seed=seed,
    )


def integrate_event_frames(
    events: np.ndarray, t_frames: int, sensor: int, duration_steps: int
) -> np.ndarray:
    """Bin [t, p, x, y] rows into [T, 2, H, W] count frames.

    The time axis is partitioned, so summing the T frames reproduces the
    single-frame integration exactly and total event count is conserved.
    """
    if t_frames < 1:
        raise ValueError("t_frames must be >= 1")
    frames = np.zeros((t_frames, 2, sensor, sensor), dtype=np.int64)
    if events.size == 0:
        return frames
    t = events[:, 0]
    idx = np.minimum(t * t_frames // duration_steps, t_frames - 1).astype(np.int64)
    np.add.at(frames, (idx, events[:, 1], events[:, 3], events[:, 2]), 1)
    return frames
