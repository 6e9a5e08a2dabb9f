"""Sequence ingestion and the two recurrent stream encoders.

The visual encoder is boundary-aware: a learned per-step gate watches
`[x_t; h_{t-1}]` and, in `hard` mode, a straight-through threshold at 0.5
zeroes the recurrent state whenever it fires, so each contiguous chunk of
frames is summarized independently.  The sensor encoder is the same LSTM
without the gate: discontinuities fire far too often on raw motion
signals, and constant state resets destroy the summary.

All encode functions accept either a single sequence `(steps, dim)` or a
batch `(B, steps, dim)` and always return a `(B, hidden)` tensor (B = 1
for a single sequence).  Inputs are treated as constants; gradients flow
to parameters only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DataError, DimensionError
from .rng import Rng
from .tensor import Tensor


@dataclass
class FrameFeatureSeq:
    """Precomputed per-frame descriptors with capture timestamps."""

    features: np.ndarray  # (K', d_feat)
    timestamps: np.ndarray  # (K',) seconds, non-decreasing

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DataError(
                f"frame features must be a nonempty (K', d) array, got "
                f"{self.features.shape}"
            )
        if self.timestamps.shape != (self.features.shape[0],):
            raise DataError("frame timestamps must align with features")
        if np.any(np.diff(self.timestamps) < 0):
            raise DataError("frame timestamps must be non-decreasing")


@dataclass
class SensorSeq:
    """Raw wearable-sensor samples: rows are per-timestep channel vectors."""

    samples: np.ndarray  # (T', channels)
    timestamps: np.ndarray  # (T',) seconds, strictly increasing
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise DataError(
                f"sensor samples must be a nonempty (T', c) array, got "
                f"{self.samples.shape}"
            )
        if self.timestamps.shape != (self.samples.shape[0],):
            raise DataError("sensor timestamps must align with samples")
        if self.samples.shape[0] > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise DataError("sensor timestamps must be strictly increasing")
        if self.sample_rate_hz <= 0:
            raise DataError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")


def pick_indices(src_len: int, target_len: int) -> np.ndarray:
    """Uniform index-space mapping: j -> round(j * src_len / target_len).

    Down-samples by skipping, up-samples by duplication, and is the
    identity when the lengths match.
    """
    j = np.arange(target_len)
    idx = np.floor(j * (src_len / target_len) + 0.5).astype(np.int64)
    return np.minimum(idx, src_len - 1)


def sample_frames(v: FrameFeatureSeq, target_len: int) -> Tensor:
    """Fix a frame sequence to exactly `target_len` rows."""
    if target_len < 1:
        raise DataError(f"target_len must be >= 1, got {target_len}")
    return Tensor(v.features[pick_indices(v.features.shape[0], target_len)])


def resample_sensor(s: SensorSeq, target_hz: float, target_len: int) -> Tensor:
    """Linearly interpolate onto a uniform `target_hz` grid, then fix length.

    The grid spans [first, last] timestamp; the interpolated rows are then
    mapped to exactly `target_len` rows with `pick_indices`.  A
    single-sample input is duplicated.
    """
    if target_hz <= 0:
        raise DataError(f"target_hz must be positive, got {target_hz}")
    if target_len < 1:
        raise DataError(f"target_len must be >= 1, got {target_len}")
    ts, x = s.timestamps, s.samples
    if x.shape[0] == 1:
        return Tensor(np.repeat(x, target_len, axis=0))
    n_grid = int(np.floor((ts[-1] - ts[0]) * target_hz)) + 1
    grid = ts[0] + np.arange(n_grid) / target_hz
    j = np.clip(np.searchsorted(ts, grid, side="right"), 1, len(ts) - 1)
    t0, t1 = ts[j - 1], ts[j]
    w = ((grid - t0) / (t1 - t0))[:, None]
    resampled = x[j - 1] * (1.0 - w) + x[j] * w
    return Tensor(resampled[pick_indices(n_grid, target_len)])


# ---------------------------------------------------------------------------
# Recurrent cells and encoders
# ---------------------------------------------------------------------------


@dataclass
class LstmParams:
    w: Tensor  # (in + hidden, 4 * hidden), gate order i, f, g, o
    b: Tensor  # (4 * hidden,)

    @property
    def hidden(self) -> int:
        return self.w.shape[1] // 4

    @property
    def input_dim(self) -> int:
        return self.w.shape[0] - self.hidden


def init_lstm(in_dim: int, hidden: int, rng: Rng) -> LstmParams:
    bound = 1.0 / np.sqrt(in_dim + hidden)
    w = rng.uniform(-bound, bound, (in_dim + hidden, 4 * hidden))
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0  # forget gate open at init
    return LstmParams(Tensor(w, requires_grad=True), Tensor(b, requires_grad=True))


def lstm_step(x: Tensor, h: Tensor, c: Tensor, p: LstmParams) -> tuple[Tensor, Tensor]:
    hid = p.hidden
    z = T.affine(T.concat([x, h], axis=1), p.w, p.b)
    i = T.sigmoid(T.slice(z, 1, 0, hid))
    f = T.sigmoid(T.slice(z, 1, hid, 2 * hid))
    g = T.tanh(T.slice(z, 1, 2 * hid, 3 * hid))
    o = T.sigmoid(T.slice(z, 1, 3 * hid, 4 * hid))
    c_new = T.add(T.mul(f, c), T.mul(i, g))
    h_new = T.mul(o, T.tanh(c_new))
    return h_new, c_new


@dataclass
class VisualEncoderParams:
    cell: LstmParams
    w_gate: Tensor  # (d_feat + hidden, 1)
    b_gate: Tensor  # (1,)


@dataclass
class SensorEncoderParams:
    cell: LstmParams


def init_visual_encoder(d_feat: int, hidden: int, rng: Rng) -> VisualEncoderParams:
    bound = 1.0 / np.sqrt(d_feat + hidden)
    w_gate = rng.uniform(-bound, bound, (d_feat + hidden, 1))
    # Boundaries should start rare: bias the gate well below threshold.
    b_gate = np.full(1, -2.0)
    return VisualEncoderParams(
        cell=init_lstm(d_feat, hidden, rng),
        w_gate=Tensor(w_gate, requires_grad=True),
        b_gate=Tensor(b_gate, requires_grad=True),
    )


def init_sensor_encoder(channels: int, hidden: int, rng: Rng) -> SensorEncoderParams:
    return SensorEncoderParams(cell=init_lstm(channels, hidden, rng))


def _as_batch(seq, expected_dim: int, what: str) -> np.ndarray:
    arr = seq.data if isinstance(seq, Tensor) else np.asarray(seq, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise DimensionError(f"{what}: expected (steps, dim) or (B, steps, dim), got {arr.shape}")
    if arr.shape[-1] != expected_dim:
        raise DimensionError(
            f"{what}: feature width {arr.shape[-1]} does not match encoder width {expected_dim}"
        )
    return arr


def encode_visual(
    frames,
    p: VisualEncoderParams,
    *,
    expected_len: int | None = None,
    boundary: str = "hard",
    summary: str = "final",
    force_gate: str | None = None,
    gate_trace: list | None = None,
) -> Tensor:
    """Boundary-aware recurrent encoding of a frame-feature sequence.

    boundary: "hard" resets state exactly to zero through a straight-through
    threshold; "soft" scales the state by (1 - gate), fully differentiable;
    "off" disables the gate (plain LSTM).  summary: "final" returns the last
    hidden state, "mean" averages the states emitted at boundaries together
    with the final state.  force_gate ("on"/"off") is a test hook that pins
    the binarized gate.
    """
    if boundary not in ("hard", "soft", "off"):
        raise ValueError(f"unknown boundary mode {boundary!r}")
    if summary not in ("final", "mean"):
        raise ValueError(f"unknown summary mode {summary!r}")
    x = _as_batch(frames, p.cell.input_dim, "encode_visual")
    batch, steps, _ = x.shape
    if expected_len is not None and steps != expected_len:
        raise DimensionError(
            f"encode_visual: got {steps} frames, configured for {expected_len}"
        )
    hid = p.cell.hidden
    h = Tensor(np.zeros((batch, hid)))
    c = Tensor(np.zeros((batch, hid)))
    emitted_sum: Tensor | None = None
    emitted_cnt = np.zeros((batch, 1))
    for t in range(steps):
        x_t = Tensor(x[:, t])
        if boundary != "off":
            gate = T.sigmoid(T.affine(T.concat([x_t, h], axis=1), p.w_gate, p.b_gate))
            if force_gate == "on":
                fired = Tensor(np.ones((batch, 1)))
            elif force_gate == "off":
                fired = Tensor(np.zeros((batch, 1)))
            elif boundary == "hard":
                fired = T.st_threshold(gate, 0.5)
            else:
                fired = gate
            if gate_trace is not None:
                gate_trace.append(fired.data.copy())
            if summary == "mean":
                emitted = T.scale_rows(h, fired)
                emitted_sum = emitted if emitted_sum is None else T.add(emitted_sum, emitted)
                emitted_cnt = emitted_cnt + fired.data
            keep = T.add(T.neg(fired), 1.0)
            h = T.scale_rows(h, keep)
            c = T.scale_rows(c, keep)
        h, c = lstm_step(x_t, h, c, p.cell)
    if summary == "mean" and emitted_sum is not None:
        # Divisor treated as a constant: the emission count is discrete.
        inv = Tensor(1.0 / (emitted_cnt + 1.0))
        return T.scale_rows(T.add(emitted_sum, h), inv)
    return h


def encode_sensor(
    signals,
    p: SensorEncoderParams,
    *,
    expected_len: int | None = None,
) -> Tensor:
    """Plain recurrent encoding of a resampled sensor stream."""
    x = _as_batch(signals, p.cell.input_dim, "encode_sensor")
    batch, steps, _ = x.shape
    if expected_len is not None and steps != expected_len:
        raise DimensionError(
            f"encode_sensor: got {steps} samples, configured for {expected_len}"
        )
    hid = p.cell.hidden
    h = Tensor(np.zeros((batch, hid)))
    c = Tensor(np.zeros((batch, hid)))
    for t in range(steps):
        h, c = lstm_step(Tensor(x[:, t]), h, c, p.cell)
    return h
