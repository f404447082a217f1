"""Forward-pass runtime for the learned virtual-point predictor.

The network maps four correspondences across three views (a 4x6 matrix of
normalized coordinates) to a 2D shift in (-1, 1)^2, applied to the mean
point of the first three correspondences in view 2. Rows are processed by
shared dense layers with channel-wise max pooling, so the output is exactly
permutation-invariant over correspondences.

Weights travel in a self-describing binary container (little-endian, 64-bit
floats) so an independently written trainer can produce them.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .virtual import VirtualCorrespondence

#: (name, in_dim, out_dim, activation) for every dense layer, in order.
#: Between enc3 and mix1 the per-row features are concatenated with their
#: channel-wise max; after mix3 the rows are max-pooled to one vector.
ARCHITECTURE = (
    ("enc1", 6, 32, "leaky_relu"),
    ("enc2", 32, 32, "leaky_relu"),
    ("enc3", 32, 32, "relu"),
    ("mix1", 64, 64, "leaky_relu"),
    ("mix2", 64, 64, "leaky_relu"),
    ("mix3", 64, 64, "relu"),
    ("head1", 64, 64, "leaky_relu"),
    ("head2", 64, 32, "leaky_relu"),
    ("head3", 32, 2, "tanh"),
)

LEAKY_SLOPE = 0.01

_MAGIC = b"TVCW"
_VERSION = 1


def _activation(name, v):
    if name == "leaky_relu":
        return np.where(v > 0, v, LEAKY_SLOPE * v)
    if name == "relu":
        return np.maximum(v, 0.0)
    if name == "tanh":
        return np.tanh(v)
    raise ConfigurationError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class PredictorWeights:
    """Dense layer parameters keyed by layer name: W of shape (out, in) and
    b of shape (out,), matching :data:`ARCHITECTURE` exactly."""

    tensors: dict

    def __post_init__(self):
        for name, d_in, d_out, _ in ARCHITECTURE:
            if name not in self.tensors:
                raise ConfigurationError(f"missing layer {name!r}")
            W, b = self.tensors[name]
            if W.shape != (d_out, d_in):
                raise ConfigurationError(
                    f"layer {name!r}: weight shape {W.shape} != {(d_out, d_in)}"
                )
            if b.shape != (d_out,):
                raise ConfigurationError(
                    f"layer {name!r}: bias shape {b.shape} != {(d_out,)}"
                )
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ConfigurationError(f"layer {name!r}: non-finite parameters")
        extra = set(self.tensors) - {name for name, *_ in ARCHITECTURE}
        if extra:
            raise ConfigurationError(f"unexpected layers {sorted(extra)}")

    @classmethod
    def random(cls, seed: int, zero_head: bool = True) -> "PredictorWeights":
        """Small random weights; with ``zero_head`` the final layer is zero
        so the untrained predictor reproduces the mean point exactly."""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, d_in, d_out, _ in ARCHITECTURE:
            scale = 1.0 / math.sqrt(d_in)
            W = rng.uniform(-scale, scale, size=(d_out, d_in))
            b = rng.uniform(-scale, scale, size=d_out)
            if zero_head and name == ARCHITECTURE[-1][0]:
                W = np.zeros((d_out, d_in))
                b = np.zeros(d_out)
            tensors[name] = (W, b)
        return cls(tensors)


def forward(weights: PredictorWeights, rows) -> np.ndarray:
    """Network output in (-1, 1)^2 for a (4, 6) input matrix."""
    h = np.asarray(rows, dtype=np.float64)
    if h.shape != (4, 6):
        raise ConfigurationError(f"predictor input must be (4, 6), got {h.shape}")
    for name, _i, _o, act in ARCHITECTURE[:3]:
        W, b = weights.tensors[name]
        h = _activation(act, h @ W.T + b)
    pooled = h.max(axis=0)
    h = np.concatenate([h, np.broadcast_to(pooled, h.shape)], axis=1)
    for name, _i, _o, act in ARCHITECTURE[3:6]:
        W, b = weights.tensors[name]
        h = _activation(act, h @ W.T + b)
    g = h.max(axis=0)
    for name, _i, _o, act in ARCHITECTURE[6:]:
        W, b = weights.tensors[name]
        g = _activation(act, g @ W.T + b)
    return g


@dataclass(frozen=True)
class NormalizationFrame:
    """Rigid per-view transform: p_norm = R(angle) @ (p - translation)."""

    translation: np.ndarray
    angle: float
    degenerate: bool = False
    _rot: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c, s = math.cos(self.angle), math.sin(self.angle)
        object.__setattr__(self, "_rot", np.array([[c, -s], [s, c]]))

    def apply(self, p):
        p = np.asarray(p, dtype=np.float64)
        return (p - self.translation) @ self._rot.T

    def invert(self, q):
        q = np.asarray(q, dtype=np.float64)
        return q @ self._rot + self.translation


def _frame_for_view(points, center):
    """Frame sending ``center`` to the origin and the fourth point onto the
    +y axis."""
    p4 = points[3] - center
    r = math.hypot(p4[0], p4[1])
    if r < 1e-12:
        return NormalizationFrame(center.copy(), 0.0, degenerate=True)
    angle = math.pi / 2.0 - math.atan2(p4[1], p4[0])
    return NormalizationFrame(center.copy(), angle)


def normalize_instance(corr, view2_center=None):
    """Normalize a (4, 3, 2) correspondence block per view: the mean of the
    first three points goes to (0, 0) and the fourth point onto the +y
    axis (rotation only, no scaling).

    ``view2_center`` overrides the view-2 translation target; the learned
    shift is anchored there (used by the shifted-initialization solver
    variants). Returns (rows, frames): a (4, 6) matrix and one
    :class:`NormalizationFrame` per view.
    """
    corr = np.asarray(corr, dtype=np.float64)
    if corr.shape != (4, 3, 2):
        raise ConfigurationError(f"expected a (4, 3, 2) block, got {corr.shape}")
    frames = []
    cols = []
    for v in range(3):
        pts = corr[:, v, :]
        center = pts[:3].mean(axis=0)
        if v == 1 and view2_center is not None:
            center = np.asarray(view2_center, dtype=np.float64)
        frame = _frame_for_view(pts, center)
        frames.append(frame)
        cols.append(frame.apply(pts))
    rows = np.concatenate(cols, axis=1)
    return rows, frames


def shift_scale_for(tri2_normalized) -> float:
    """Default output scaling: half the longest bounding-box side of the
    view-2 triangle in the normalized frame."""
    tri = np.asarray(tri2_normalized, dtype=np.float64)
    ext = tri.max(axis=0) - tri.min(axis=0)
    return 0.5 * float(ext.max())


def predict_virtual_point(
    weights: PredictorWeights,
    corr,
    shift_scale: float | None = None,
    init2=None,
) -> VirtualCorrespondence:
    """Learned virtual correspondence for a (4, 3, 2) block.

    The view-1 point is the mean of the first three correspondences; the
    view-2 point is ``init2`` (default: the view-2 mean) displaced by the
    network output scaled by ``shift_scale`` and mapped back through the
    view-2 frame. A zero network output returns the initialization exactly.
    """
    corr = np.asarray(corr, dtype=np.float64)
    p1 = corr[:3, 0, :].mean(axis=0)
    if init2 is None:
        init2 = corr[:3, 1, :].mean(axis=0)
    else:
        init2 = np.asarray(init2, dtype=np.float64)
    rows, frames = normalize_instance(corr, view2_center=init2)
    out = forward(weights, rows)
    if shift_scale is None:
        shift_scale = shift_scale_for(frames[1].apply(corr[:3, 1, :]))
    p2 = frames[1].invert(frames[1].apply(init2) + shift_scale * out)
    return VirtualCorrespondence(p1, p2, "learned")


def save_weights(weights: PredictorWeights, path):
    """Write the self-describing container: magic, version, record count,
    then per-record (name, rows, cols, row-major float64 LE)."""
    records = []
    for name, *_ in ARCHITECTURE:
        W, b = weights.tensors[name]
        records.append((f"{name}.weight", W))
        records.append((f"{name}.bias", b.reshape(-1, 1)))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(records)))
        for name, M in records:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", M.shape[0], M.shape[1]))
            fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def load_weights(path) -> PredictorWeights:
    """Read and validate a weights container. Raises ConfigurationError on
    truncation, bad magic/version, or any shape mismatch."""
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(n, what):
        nonlocal off
        if off + n > len(blob):
            raise ConfigurationError(f"truncated weights file while reading {what}")
        out = blob[off : off + n]
        off += n
        return out

    off = 0
    if take(4, "magic") != _MAGIC:
        raise ConfigurationError("not a predictor weights file (bad magic)")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != _VERSION:
        raise ConfigurationError(f"unsupported weights version {version}")
    raw = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4, "record name length"))
        name = take(nlen, "record name").decode("utf-8")
        rows, cols = struct.unpack("<II", take(8, f"shape of {name}"))
        data = np.frombuffer(
            take(8 * rows * cols, f"data of {name}"), dtype="<f8"
        ).reshape(rows, cols)
        raw[name] = data.astype(np.float64)
    if off != len(blob):
        raise ConfigurationError("trailing bytes after final record")

    tensors = {}
    for name, d_in, d_out, _ in ARCHITECTURE:
        wname, bname = f"{name}.weight", f"{name}.bias"
        if wname not in raw or bname not in raw:
            raise ConfigurationError(f"missing records for layer {name!r}")
        W = raw.pop(wname)
        b = raw.pop(bname)
        if b.shape[1] != 1:
            raise ConfigurationError(f"layer {name!r}: bias must be a column")
        tensors[name] = (W, b[:, 0])
    if raw:
        raise ConfigurationError(f"unexpected records {sorted(raw)}")
    return PredictorWeights(tensors)
