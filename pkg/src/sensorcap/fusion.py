"""Combining the visual and sensor representations.

The default fusion concatenates the visual state with an affinely
transformed sensor state; the transform starts as the identity, so a
freshly initialized model is exactly the plain-concatenation baseline.
All three representations (visual, sensor, fused) are forwarded, since
a single modality is sometimes the better input downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .tensor import Tensor

FUSE_MODES = ("concat", "symmetric", "linear-on-v", "linear-on-s")


@dataclass
class AmmtParams:
    """Affine transform applied to one representation before concatenation."""

    w_c: Tensor  # (dim, dim), identity at construction
    b_c: Tensor  # (dim,), zero at construction


def init_ammt(dim: int) -> AmmtParams:
    return AmmtParams(
        w_c=Tensor(np.eye(dim), requires_grad=True),
        b_c=Tensor(np.zeros(dim), requires_grad=True),
    )


@dataclass
class EncodedRepresentations:
    """The triple the decoder attends over; rows are batch entries."""

    h_v: Tensor  # (B, H_V)
    h_s: Tensor  # (B, H_S)
    h_vs: Tensor  # (B, H_V + H_S)


def ammt_fuse(h_v: Tensor, h_s: Tensor, p: AmmtParams) -> EncodedRepresentations:
    """h_vs = h_v (+) (h_s W_c + b_c); h_v and h_s pass through unchanged."""
    if h_v.data.ndim != 2 or h_s.data.ndim != 2 or h_v.data.shape[0] != h_s.data.shape[0]:
        raise DimensionError(
            f"ammt_fuse: expected matching (B, .) inputs, got {h_v.shape} and {h_s.shape}"
        )
    transformed = T.affine(h_s, p.w_c, p.b_c)
    return EncodedRepresentations(h_v, h_s, T.concat([h_v, transformed], axis=1))


def fuse_variant(
    h_v: Tensor,
    h_s: Tensor,
    mode: str,
    params_v: AmmtParams | None = None,
    params_s: AmmtParams | None = None,
) -> EncodedRepresentations:
    """Build h_vs under one of the fusion ablations.

    concat: plain concatenation, no parameters.
    symmetric: affine transforms on both sides.
    linear-on-v / linear-on-s: transform one side only (the latter is the
    default fusion, `ammt_fuse`).
    """
    if mode not in FUSE_MODES:
        raise ConfigError(f"unknown fusion mode {mode!r}; expected one of {FUSE_MODES}")
    if mode == "concat":
        return EncodedRepresentations(h_v, h_s, T.concat([h_v, h_s], axis=1))
    if mode == "linear-on-s":
        if params_s is None:
            raise ConfigError("linear-on-s fusion needs sensor-side parameters")
        return ammt_fuse(h_v, h_s, params_s)
    if params_v is None:
        raise ConfigError(f"{mode} fusion needs visual-side parameters")
    left = T.affine(h_v, params_v.w_c, params_v.b_c)
    if mode == "linear-on-v":
        return EncodedRepresentations(h_v, h_s, T.concat([left, h_s], axis=1))
    if params_s is None:
        raise ConfigError("symmetric fusion needs sensor-side parameters")
    right = T.affine(h_s, params_s.w_c, params_s.b_c)
    return EncodedRepresentations(h_v, h_s, T.concat([left, right], axis=1))
