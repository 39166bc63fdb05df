"""Band normalization, surface-band selection, and early-fusion feature assembly.

Sentinel-1 backscatter is clipped to [-25, 0] dB and rescaled to [0, 1];
Sentinel-2 digital numbers are clipped to [0, 10^4] (100% reflectance) and
rescaled. Fusion simply concatenates the two polarimetric channels after the
ten surface-related optical bands.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import BandStack, Patch, S2_ALL_BANDS, S2_SURFACE_BANDS

S1_CLIP = (-25.0, 0.0)
S2_CLIP = (0.0, 1.0e4)
_DROPPED_ATMOSPHERIC = ("B1", "B9", "B10")


class FusionMode(Enum):
    S2_ONLY = "s2"
    S1_PLUS_S2 = "s1s2"


@dataclass(frozen=True)
class FusionConfig:
    mode: FusionMode = FusionMode.S2_ONLY

    @property
    def d(self) -> int:
        return 12 if self.mode is FusionMode.S1_PLUS_S2 else 10

    @classmethod
    def from_string(cls, mode: str) -> "FusionConfig":
        return cls(FusionMode(mode))


def normalize_s1(x):
    """Clip backscatter (dB) to [-25, 0] and rescale to [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("normalize_s1 requires finite input")
    out = (np.clip(x, *S1_CLIP) + 25.0) / 25.0
    return out if out.ndim else float(out)


def normalize_s2(x):
    """Clip digital numbers to [0, 10^4] and rescale to [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("normalize_s2 requires finite input")
    out = np.clip(x, *S2_CLIP) / 1.0e4
    return out if out.ndim else float(out)


def select_surface_bands(s2: BandStack) -> BandStack:
    """Drop the atmospheric bands B1, B9, B10, preserving the remaining order.

    A stack already restricted to the ten surface bands passes through
    unchanged.
    """
    if s2.band_names == S2_SURFACE_BANDS:
        return s2
    if set(s2.band_names) == set(S2_ALL_BANDS) and s2.n_bands == 13:
        keep = [i for i, name in enumerate(s2.band_names) if name not in _DROPPED_ATMOSPHERIC]
        return BandStack(s2.values[keep], tuple(s2.band_names[i] for i in keep))
    missing = sorted(set(S2_ALL_BANDS) - set(s2.band_names))
    unknown = sorted(set(s2.band_names) - set(S2_ALL_BANDS))
    raise ValueError(
        f"cannot select surface bands: missing {missing or 'none'}, "
        f"unknown {unknown or 'none'}"
    )


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-pixel feature rows in [0, 1] with a validity mask and row origins.

    Row k of a single-patch matrix corresponds to pixel (k // W, k % W).
    """

    values: np.ndarray        # N×d float64
    valid_mask: np.ndarray    # N bool
    patch_ids: tuple[str, ...]
    patch_index: np.ndarray   # N int32, index into patch_ids
    pixel_index: np.ndarray   # N int32, row-major pixel offset in the patch

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def origin(self, row: int) -> tuple[str, int]:
        return self.patch_ids[self.patch_index[row]], int(self.pixel_index[row])

    def valid_values(self) -> np.ndarray:
        return self.values[self.valid_mask]

    def with_mask(self, extra_mask: np.ndarray) -> "FeatureMatrix":
        """Return a copy whose validity mask is ANDed with extra_mask."""
        extra_mask = np.asarray(extra_mask, dtype=bool).ravel()
        if extra_mask.shape != self.valid_mask.shape:
            raise ValueError(
                f"extra mask length {extra_mask.shape} != rows {self.valid_mask.shape}"
            )
        return FeatureMatrix(
            self.values,
            self.valid_mask & extra_mask,
            self.patch_ids,
            self.patch_index,
            self.pixel_index,
        )

    @classmethod
    def concat(cls, matrices: "list[FeatureMatrix]") -> "FeatureMatrix":
        if not matrices:
            raise ValueError("cannot concatenate zero feature matrices")
        d = matrices[0].d
        if any(m.d != d for m in matrices):
            raise ValueError("feature dimension mismatch in concat")
        ids: list[str] = []
        index_parts = []
        for m in matrices:
            offset = len(ids)
            ids.extend(m.patch_ids)
            index_parts.append(m.patch_index + offset)
        return cls(
            np.concatenate([m.values for m in matrices]),
            np.concatenate([m.valid_mask for m in matrices]),
            tuple(ids),
            np.concatenate(index_parts),
            np.concatenate([m.pixel_index for m in matrices]),
        )


def assemble_features(patch: Patch, config: FusionConfig) -> FeatureMatrix:
    """Build the N×d per-pixel feature matrix for one patch, row-major.

    Columns are the ten surface S2 bands first, then normalized VV, VH under
    fusion. Rows whose sources were non-finite before clipping, or whose LR
    label is 0, are masked out.
    """
    surface = select_surface_bands(patch.s2)
    h, w = surface.shape
    n = h * w

    planes = [surface.values.reshape(10, n).astype(np.float64)]
    if config.mode is FusionMode.S1_PLUS_S2:
        if patch.s1 is None:
            raise ValueError(f"patch {patch.id!r} has no S1 stack but fusion requires it")
        planes.append(patch.s1.values.reshape(2, n).astype(np.float64))

    raw = np.concatenate(planes, axis=0).T  # N×d, S2 columns then VV, VH
    finite = np.isfinite(raw).all(axis=1)
    raw = np.where(np.isfinite(raw), raw, 0.0)

    features = np.empty_like(raw)
    features[:, :10] = np.clip(raw[:, :10], *S2_CLIP) / 1.0e4
    if raw.shape[1] == 12:
        features[:, 10:] = (np.clip(raw[:, 10:], *S1_CLIP) + 25.0) / 25.0

    valid = finite & (patch.lr_labels.values.reshape(n) != 0)
    return FeatureMatrix(
        values=features,
        valid_mask=valid,
        patch_ids=(patch.id,),
        patch_index=np.zeros(n, dtype=np.int32),
        pixel_index=np.arange(n, dtype=np.int32),
    )
