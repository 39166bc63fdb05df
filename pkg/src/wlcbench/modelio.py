"""Versioned binary model files shared by all trainable models.

Layout: magic ``WLCM``, format version (u16), model-kind byte, then a
kind-specific payload. Every integer is little-endian and every float is
32-bit, so files are byte-identical across platforms for the same model.
Training curves are not stored here; the command layer emits those as CSV.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dataset import atomic_write
from .maskedlr import LogRegConfig, LogRegModel
from .shallow import ForestModel, KMeansModel, Tree

MODEL_MAGIC = b"WLCM"
MODEL_FORMAT_VERSION = 1

KIND_KMEANS = 1
KIND_FOREST = 2
KIND_LOGREG = 3

_K = 10  # simplified classes; probs/weights columns


class ModelIOError(ValueError):
    """Raised for malformed or truncated model files."""


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        size = struct.calcsize(fmt)
        if self.off + size > len(self.data):
            raise ModelIOError(f"truncated model file at offset {self.off}")
        out = struct.unpack_from(fmt, self.data, self.off)
        self.off += size
        return out

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if self.off + size > len(self.data):
            raise ModelIOError(f"truncated model file at offset {self.off}")
        arr = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.off)
        self.off += size
        return arr

    def done(self) -> None:
        if self.off != len(self.data):
            raise ModelIOError(
                f"{len(self.data) - self.off} trailing bytes after offset {self.off}"
            )


def _f32(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _kmeans_payload(model: KMeansModel) -> bytes:
    parts = [
        struct.pack(
            "<IIIIqf",
            model.k,
            model.d,
            model.n_init,
            model.max_iter,
            model.seed,
            model.inertia,
        )
    ]
    class_of = np.zeros(model.k, dtype=np.uint8)  # 0 = unmapped
    if model.cluster_to_class is not None:
        for cluster, cls in model.cluster_to_class.items():
            class_of[cluster] = cls
    parts.append(struct.pack("<B", 1 if model.cluster_to_class is not None else 0))
    parts.append(class_of.tobytes())
    parts.append(_f32(model.centroids))
    return b"".join(parts)


def _kmeans_from(r: _Reader) -> KMeansModel:
    k, d, n_init, max_iter, seed, inertia = r.unpack("IIIIqf")
    (has_map,) = r.unpack("B")
    class_of = r.array("u1", k)
    centroids = r.array("<f4", k * d).astype(np.float64).reshape(k, d)
    mapping = None
    if has_map:
        mapping = {int(i): int(c) for i, c in enumerate(class_of) if c}
    return KMeansModel(
        centroids=centroids,
        inertia=float(inertia),
        cluster_to_class=mapping,
        seed=seed,
        n_init=n_init,
        max_iter=max_iter,
    )


def _forest_payload(model: ForestModel) -> bytes:
    parts = [
        struct.pack("<IIIq", model.n_trees, model.max_depth, model.n_features, model.seed)
    ]
    for tree in model.trees:
        parts.append(struct.pack("<I", tree.n_nodes))
        parts.append(np.ascontiguousarray(tree.feature, dtype="<i2").tobytes())
        parts.append(_f32(tree.threshold))
        parts.append(np.ascontiguousarray(tree.left, dtype="<i4").tobytes())
        parts.append(np.ascontiguousarray(tree.right, dtype="<i4").tobytes())
        parts.append(_f32(tree.probs))
    return b"".join(parts)


def _forest_from(r: _Reader) -> ForestModel:
    n_trees, max_depth, n_features, seed = r.unpack("IIIq")
    trees = []
    for _ in range(n_trees):
        (n_nodes,) = r.unpack("I")
        feature = r.array("<i2", n_nodes).copy()
        threshold = r.array("<f4", n_nodes).astype(np.float64)
        left = r.array("<i4", n_nodes).copy()
        right = r.array("<i4", n_nodes).copy()
        probs = r.array("<f4", n_nodes * _K).astype(np.float64).reshape(n_nodes, _K)
        trees.append(
            Tree(feature=feature, threshold=threshold, left=left, right=right, probs=probs)
        )
    return ForestModel(
        trees=tuple(trees),
        n_trees=n_trees,
        max_depth=max_depth,
        n_features=n_features,
        seed=seed,
    )


def _logreg_payload(model: LogRegModel) -> bytes:
    cfg = model.config
    best = -1 if model.best_epoch is None else model.best_epoch
    return b"".join(
        [
            struct.pack(
                "<IfIIqi",
                model.d,
                cfg.learning_rate,
                cfg.batch_size,
                cfg.epochs,
                cfg.seed,
                best,
            ),
            _f32(model.weights),
            _f32(model.bias),
        ]
    )


def _logreg_from(r: _Reader) -> LogRegModel:
    d, lr, batch, epochs, seed, best = r.unpack("IfIIqi")
    weights = r.array("<f4", d * _K).astype(np.float64).reshape(d, _K)
    bias = r.array("<f4", _K).astype(np.float64)
    return LogRegModel(
        weights=weights,
        bias=bias,
        config=LogRegConfig(
            learning_rate=float(lr), batch_size=batch, epochs=epochs, seed=seed
        ),
        best_epoch=None if best < 0 else best,
    )


AnyModel = KMeansModel | ForestModel | LogRegModel

_KIND_OF = {KMeansModel: KIND_KMEANS, ForestModel: KIND_FOREST, LogRegModel: KIND_LOGREG}


def model_to_bytes(model: AnyModel) -> bytes:
    kind = _KIND_OF.get(type(model))
    if kind is None:
        raise ModelIOError(f"unsupported model type {type(model).__name__}")
    if kind == KIND_KMEANS:
        payload = _kmeans_payload(model)
    elif kind == KIND_FOREST:
        payload = _forest_payload(model)
    else:
        payload = _logreg_payload(model)
    return MODEL_MAGIC + struct.pack("<HB", MODEL_FORMAT_VERSION, kind) + payload


def model_from_bytes(data: bytes) -> AnyModel:
    r = _Reader(data)
    magic, version, kind = r.unpack("4sHB")
    if magic != MODEL_MAGIC:
        raise ModelIOError(f"bad magic {magic!r}; not a model file")
    if version != MODEL_FORMAT_VERSION:
        raise ModelIOError(f"unsupported model format version {version}")
    if kind == KIND_KMEANS:
        model = _kmeans_from(r)
    elif kind == KIND_FOREST:
        model = _forest_from(r)
    elif kind == KIND_LOGREG:
        model = _logreg_from(r)
    else:
        raise ModelIOError(f"unknown model kind {kind}")
    r.done()
    return model


def save_model(model: AnyModel, path: str | Path) -> None:
    atomic_write(path, model_to_bytes(model))


def load_model(path: str | Path) -> AnyModel:
    return model_from_bytes(Path(path).read_bytes())
