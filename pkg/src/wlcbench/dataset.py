"""Patch containers, split manifests, and dataset statistics.

The on-disk container is a deliberately dependency-free little-endian binary
format (magic ``WLCB``). Labels ride on the same pixel grid as the imagery;
class id 0 is reserved for invalid/no-data pixels.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"WLCB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIBBBB")  # magic, version, H, W, s1, s2_bands, hr, scheme

S1_BAND_NAMES = ("VV", "VH")
S2_ALL_BANDS = ("B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B10", "B11", "B12")
S2_SURFACE_BANDS = ("B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B11", "B12")

N_SIMPLIFIED_CLASSES = 10
N_IGBP_CLASSES = 17


class ContainerError(ValueError):
    """Raised for malformed or invariant-violating patch containers."""


class ManifestError(ValueError):
    """Raised for malformed split manifests."""


class Scheme(Enum):
    """Classification scheme of a label raster (wire values in the container)."""

    IGBP17 = 1
    SIMPLIFIED10 = 2

    @property
    def max_class_id(self) -> int:
        return N_IGBP_CLASSES if self is Scheme.IGBP17 else N_SIMPLIFIED_CLASSES


class SplitRole(Enum):
    TRAIN = "train"
    HOLDOUT = "holdout"
    VALIDATION = "validation"
    TEST = "test"


@dataclass(frozen=True)
class BandStack:
    """C band planes of H×W float32 values plus their band names."""

    values: np.ndarray
    band_names: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ContainerError(f"band stack must be C×H×W, got shape {v.shape}")
        if len(self.band_names) != v.shape[0]:
            raise ContainerError(
                f"{len(self.band_names)} band names for {v.shape[0]} band planes"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "band_names", tuple(self.band_names))

    @property
    def n_bands(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]


@dataclass(frozen=True)
class LabelRaster:
    """H×W uint8 class ids tagged with their scheme; 0 means invalid/no-data."""

    values: np.ndarray
    scheme: Scheme

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint8)
        if v.ndim != 2:
            raise ContainerError(f"label raster must be H×W, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def validate(self, name: str = "labels") -> None:
        bad = self.values > self.scheme.max_class_id
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            raise ContainerError(
                f"illegal class id {int(self.values.flat[idx])} in {name} at pixel "
                f"{idx} under scheme {self.scheme.name}"
            )


@dataclass
class Patch:
    """One scene sample: optional S1 stack, S2 stack, LR labels, optional HR labels."""

    id: str
    s2: BandStack
    lr_labels: LabelRaster
    s1: BandStack | None = None
    hr_labels: LabelRaster | None = None

    @property
    def height(self) -> int:
        return self.s2.shape[0]

    @property
    def width(self) -> int:
        return self.s2.shape[1]

    def validate(self) -> None:
        """Check all type invariants; raises ContainerError on the first violation."""
        h, w = self.s2.shape
        if h < 1 or w < 1:
            raise ContainerError(f"patch dimensions must be >= 1, got {h}x{w}")
        if self.s1 is not None:
            if self.s1.n_bands != 2:
                raise ContainerError(f"s1 stack must have 2 bands, got {self.s1.n_bands}")
            if self.s1.shape != (h, w):
                raise ContainerError(
                    f"s1 shape {self.s1.shape} does not match s2 shape {(h, w)}"
                )
            if not np.isfinite(self.s1.values).all():
                raise ContainerError("non-finite value in s1 bands")
        if not np.isfinite(self.s2.values).all():
            raise ContainerError("non-finite value in s2 bands")
        if self.lr_labels.shape != (h, w):
            raise ContainerError(
                f"lr_labels shape {self.lr_labels.shape} does not match {(h, w)}"
            )
        self.lr_labels.validate("lr_labels")
        if self.hr_labels is not None:
            if self.hr_labels.shape != (h, w):
                raise ContainerError(
                    f"hr_labels shape {self.hr_labels.shape} does not match {(h, w)}"
                )
            if self.hr_labels.scheme is not Scheme.SIMPLIFIED10:
                raise ContainerError("hr_labels must use the SIMPLIFIED10 scheme")
            self.hr_labels.validate("hr_labels")


def _default_s2_names(n: int) -> tuple[str, ...]:
    if n == 13:
        return S2_ALL_BANDS
    if n == 10:
        return S2_SURFACE_BANDS
    return tuple(f"S2_{i + 1}" for i in range(n))


def read_patch(path: str | Path) -> Patch:
    """Load and validate a WLCB container; the patch id is the file stem."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ContainerError(f"truncated header: {len(data)} bytes at offset 0 in {path}")
    magic, version, h, w, s1_present, s2_bands, hr_present, scheme_id = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r} at offset 0 in {path}")
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported format version {version} at offset 4")
    if h < 1 or w < 1:
        raise ContainerError(f"illegal dimensions {h}x{w} at offset 6")
    if s1_present not in (0, 1) or hr_present not in (0, 1):
        raise ContainerError("s1/hr presence flags must be 0 or 1 (offsets 14, 16)")
    if s2_bands < 1:
        raise ContainerError("s2 band count must be >= 1 (offset 15)")
    try:
        scheme = Scheme(scheme_id)
    except ValueError:
        raise ContainerError(f"unknown scheme id {scheme_id} at offset 17") from None

    plane = h * w
    n_float_planes = (2 if s1_present else 0) + s2_bands
    expected = _HEADER.size + 4 * plane * n_float_planes + plane * (1 + hr_present)
    if len(data) != expected:
        raise ContainerError(
            f"container size {len(data)} != expected {expected} "
            f"(truncated or trailing bytes after offset {min(len(data), expected)})"
        )

    off = _HEADER.size

    def take_planes(count: int, fieldname: str) -> np.ndarray:
        nonlocal off
        raw = np.frombuffer(data, dtype="<f4", count=count * plane, offset=off)
        off += 4 * count * plane
        arr = raw.reshape(count, h, w).astype(np.float32)
        if not np.isfinite(arr).all():
            bad = int(np.flatnonzero(~np.isfinite(raw))[0])
            raise ContainerError(
                f"non-finite value in {fieldname} at payload offset {off - 4 * count * plane + 4 * bad}"
            )
        return arr

    s1 = None
    if s1_present:
        s1 = BandStack(take_planes(2, "s1"), S1_BAND_NAMES)
    s2 = BandStack(take_planes(s2_bands, "s2"), _default_s2_names(s2_bands))

    lr = np.frombuffer(data, dtype=np.uint8, count=plane, offset=off).reshape(h, w)
    off += plane
    hr_raster = None
    if hr_present:
        hr = np.frombuffer(data, dtype=np.uint8, count=plane, offset=off).reshape(h, w)
        hr_raster = LabelRaster(hr.copy(), Scheme.SIMPLIFIED10)

    patch = Patch(
        id=path.stem,
        s2=s2,
        lr_labels=LabelRaster(lr.copy(), scheme),
        s1=s1,
        hr_labels=hr_raster,
    )
    patch.validate()
    return patch


def patch_to_bytes(patch: Patch) -> bytes:
    """Serialize a validated patch to the canonical container bytes."""
    patch.validate()
    h, w = patch.s2.shape
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        h,
        w,
        1 if patch.s1 is not None else 0,
        patch.s2.n_bands,
        1 if patch.hr_labels is not None else 0,
        patch.lr_labels.scheme.value,
    )
    parts = [header]
    if patch.s1 is not None:
        parts.append(patch.s1.values.astype("<f4").tobytes())
    parts.append(patch.s2.values.astype("<f4").tobytes())
    parts.append(patch.lr_labels.values.tobytes())
    if patch.hr_labels is not None:
        parts.append(patch.hr_labels.values.tobytes())
    return b"".join(parts)


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write bytes via a same-directory temp file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_patch(patch: Patch, path: str | Path) -> None:
    """Write the container; read_patch inverts it bit-exactly."""
    atomic_write(path, patch_to_bytes(patch))


@dataclass(frozen=True)
class SplitManifest:
    """Named list of patch ids with its benchmarking role."""

    name: str
    role: SplitRole
    patch_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "patch_ids", tuple(self.patch_ids))
        if len(set(self.patch_ids)) != len(self.patch_ids):
            raise ManifestError(f"duplicate patch ids in manifest {self.name!r}")

    @property
    def declared_size(self) -> int:
        return len(self.patch_ids)

    def __len__(self) -> int:
        return len(self.patch_ids)


def load_manifest(path: str | Path) -> SplitManifest:
    """Read a UTF-8 JSON manifest with fields name, role, patch_ids."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from None
    for key in ("name", "role", "patch_ids"):
        if key not in raw:
            raise ManifestError(f"manifest {path} missing field {key!r}")
    try:
        role = SplitRole(str(raw["role"]).lower())
    except ValueError:
        raise ManifestError(f"unknown manifest role {raw['role']!r}") from None
    return SplitManifest(str(raw["name"]), role, tuple(str(p) for p in raw["patch_ids"]))


def save_manifest(manifest: SplitManifest, path: str | Path) -> None:
    doc = {
        "name": manifest.name,
        "role": manifest.role.value,
        "patch_ids": list(manifest.patch_ids),
    }
    atomic_write(path, (json.dumps(doc, indent=2) + "\n").encode("utf-8"))


def subsample_manifest(manifest: SplitManifest, n: int, seed: int) -> SplitManifest:
    """Uniformly subsample n ids without replacement; deterministic given seed."""
    if n < 0:
        raise ManifestError(f"subsample size must be >= 0, got {n}")
    if n > len(manifest):
        raise ManifestError(
            f"cannot subsample {n} from manifest of size {len(manifest)}"
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(manifest), size=n, replace=False)
    ids = tuple(manifest.patch_ids[i] for i in idx)
    return SplitManifest(f"{manifest.name}-sub{n}", manifest.role, ids)


def iter_patches(manifest: SplitManifest, data_dir: str | Path) -> Iterable[Patch]:
    """Yield patches for every manifest id, expecting {data_dir}/{id}.wlcb."""
    data_dir = Path(data_dir)
    for pid in manifest.patch_ids:
        yield read_patch(data_dir / f"{pid}.wlcb")


def _labels_of(patch: Patch, which: str) -> LabelRaster:
    which = which.lower()
    if which == "lr":
        return patch.lr_labels
    if which == "hr":
        if patch.hr_labels is None:
            raise ContainerError(f"patch {patch.id!r} has no hr_labels")
        return patch.hr_labels
    raise ValueError(f"which must be 'lr' or 'hr', got {which!r}")


def _require_simplified(raster: LabelRaster, patch_id: str) -> np.ndarray:
    if raster.scheme is not Scheme.SIMPLIFIED10:
        raise ValueError(
            f"patch {patch_id!r} labels use {raster.scheme.name}; "
            "apply labels.simplify_igbp first"
        )
    return raster.values


def class_histogram(patches: Sequence[Patch] | Iterable[Patch], which: str = "lr"):
    """Per-class pixel counts and fractions over SIMPLIFIED10 classes 1..10.

    Invalid (0) pixels are excluded. Returns (counts, fractions) as two
    length-10 arrays; fractions are zero when no valid pixel exists.
    """
    counts = np.zeros(N_SIMPLIFIED_CLASSES, dtype=np.int64)
    n_patches = 0
    for patch in patches:
        vals = _require_simplified(_labels_of(patch, which), patch.id)
        counts += np.bincount(vals.ravel(), minlength=11)[1:].astype(np.int64)
        n_patches += 1
    if n_patches == 0:
        raise ValueError("class_histogram needs at least one patch")
    total = counts.sum()
    fractions = counts / total if total > 0 else np.zeros(N_SIMPLIFIED_CLASSES)
    return counts, fractions


def classes_per_patch(patches: Sequence[Patch] | Iterable[Patch], which: str = "lr") -> np.ndarray:
    """Histogram over 1..10 of the number of distinct valid classes per patch.

    Entry i-1 counts the patches containing exactly i distinct nonzero classes.
    """
    hist = np.zeros(N_SIMPLIFIED_CLASSES, dtype=np.int64)
    n_patches = 0
    for patch in patches:
        vals = _require_simplified(_labels_of(patch, which), patch.id)
        distinct = np.unique(vals)
        n = int((distinct != 0).sum())
        if n > 0:
            hist[n - 1] += 1
        n_patches += 1
    if n_patches == 0:
        raise ValueError("classes_per_patch needs at least one patch")
    return hist
