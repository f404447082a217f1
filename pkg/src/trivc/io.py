"""Correspondence files, ground-truth sidecars, and deterministic writers.

The correspondence format is line-oriented text:

    # trivc-corr v1
    nviews 3
    calibrated 1
    px_per_unit 1000.0
    focal none
    n 500
    <x1> <y1> <x2> <y2> <x3> <y3> <vis3>

Two-view files use ``nviews 2`` and rows of four coordinates. Floats are
serialized with ``repr`` so rewriting a parsed file is byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import RelativePose, TripletHypothesis

FORMAT_HEADER = "# trivc-corr v1"
GT_SCHEMA = "trivc-gt v1"


@dataclass
class CorrespondenceSet:
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray | None
    vis3: np.ndarray | None
    calibrated: bool
    px_per_unit: float
    focal: float | None

    @property
    def n(self) -> int:
        return self.x1.shape[0]


def fmt(x: float) -> str:
    """Shortest round-trip decimal form; deterministic across runs."""
    return repr(float(x))


def write_correspondences(path, cs: CorrespondenceSet):
    lines = [FORMAT_HEADER]
    nviews = 2 if cs.x3 is None else 3
    lines.append(f"nviews {nviews}")
    lines.append(f"calibrated {1 if cs.calibrated else 0}")
    lines.append(f"px_per_unit {fmt(cs.px_per_unit)}")
    lines.append(f"focal {'none' if cs.focal is None else fmt(cs.focal)}")
    lines.append(f"n {cs.n}")
    vis = cs.vis3 if cs.vis3 is not None else np.ones(cs.n, dtype=bool)
    for i in range(cs.n):
        parts = [fmt(cs.x1[i, 0]), fmt(cs.x1[i, 1]), fmt(cs.x2[i, 0]), fmt(cs.x2[i, 1])]
        if nviews == 3:
            parts += [fmt(cs.x3[i, 0]), fmt(cs.x3[i, 1]), str(int(vis[i]))]
        lines.append(" ".join(parts))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_correspondences(path) -> CorrespondenceSet:
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()

    def fail(lineno, msg):
        raise ConfigurationError(f"{path}:{lineno}: {msg}")

    if not raw or raw[0].strip() != FORMAT_HEADER:
        fail(1, f"expected header {FORMAT_HEADER!r}")
    fields = {}
    lineno = 1
    for key, conv in [
        ("nviews", int),
        ("calibrated", int),
        ("px_per_unit", float),
        ("focal", str),
        ("n", int),
    ]:
        lineno += 1
        if lineno > len(raw):
            fail(lineno, f"missing {key} line")
        parts = raw[lineno - 1].split()
        if len(parts) != 2 or parts[0] != key:
            fail(lineno, f"expected '{key} <value>'")
        try:
            fields[key] = conv(parts[1])
        except ValueError:
            fail(lineno, f"bad value for {key}: {parts[1]!r}")

    nviews = fields["nviews"]
    if nviews not in (2, 3):
        fail(2, f"nviews must be 2 or 3, got {nviews}")
    focal = None if fields["focal"] == "none" else _parse_float(fields["focal"], path, 5)
    n = fields["n"]
    if n < 1:
        fail(6, "need at least one correspondence")
    want = 4 if nviews == 2 else 7
    if len(raw) - lineno < n:
        fail(len(raw) + 1, f"expected {n} data rows, found {len(raw) - lineno}")

    x1 = np.empty((n, 2))
    x2 = np.empty((n, 2))
    x3 = np.empty((n, 2)) if nviews == 3 else None
    vis = np.ones(n, dtype=bool) if nviews == 3 else None
    for i in range(n):
        lineno += 1
        parts = raw[lineno - 1].split()
        if len(parts) != want:
            fail(lineno, f"expected {want} fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts[: want - 1 if nviews == 3 else want]]
            if nviews == 3:
                flag = int(parts[-1])
                if flag not in (0, 1):
                    raise ValueError
        except ValueError:
            fail(lineno, "malformed numeric row")
        x1[i] = vals[0:2]
        x2[i] = vals[2:4]
        if nviews == 3:
            x3[i] = vals[4:6]
            vis[i] = bool(flag)
        if not all(math.isfinite(v) for v in vals):
            fail(lineno, "non-finite coordinate")
    return CorrespondenceSet(
        x1, x2, x3, vis, bool(fields["calibrated"]), fields["px_per_unit"], focal
    )


def _parse_float(s, path, lineno):
    try:
        return float(s)
    except ValueError:
        raise ConfigurationError(f"{path}:{lineno}: bad focal {s!r}") from None


def rotation_to_quaternion(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def quaternion_to_rotation(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _pose_dict(pose: RelativePose):
    return {
        "quaternion_wxyz": [fmt(v) for v in rotation_to_quaternion(pose.rotation)],
        "translation": [fmt(v) for v in pose.translation],
    }


def _pose_from_dict(d) -> RelativePose:
    R = quaternion_to_rotation([float(v) for v in d["quaternion_wxyz"]])
    t = np.array([float(v) for v in d["translation"]])
    return RelativePose(R, t / np.linalg.norm(t))


def write_ground_truth(path, gt: TripletHypothesis, inlier_mask=None):
    doc = {
        "schema": GT_SCHEMA,
        "pose12": _pose_dict(gt.pose12),
        "pose13": _pose_dict(gt.pose13),
        "focal": None if gt.focal is None else fmt(gt.focal),
    }
    if inlier_mask is not None:
        doc["inlier_mask"] = [int(v) for v in inlier_mask]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_ground_truth(path) -> tuple[TripletHypothesis, np.ndarray | None]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != GT_SCHEMA:
        raise ConfigurationError(f"{path}: unknown ground-truth schema")
    gt = TripletHypothesis(
        _pose_from_dict(doc["pose12"]),
        _pose_from_dict(doc["pose13"]),
        focal=None if doc["focal"] is None else float(doc["focal"]),
    )
    mask = None
    if "inlier_mask" in doc:
        mask = np.array([bool(v) for v in doc["inlier_mask"]])
    return gt, mask


def write_csv(path, header_comment: str, columns, rows):
    """Byte-deterministic CSV: one comment line naming the schema, a header
    row, then data rows. Floats must already be strings (use fmt)."""
    lines = [header_comment, ",".join(columns)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
