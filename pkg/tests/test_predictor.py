import itertools

import numpy as np
import pytest

from trivc.errors import ConfigurationError
from trivc.predictor import (
    ARCHITECTURE,
    LEAKY_SLOPE,
    PredictorWeights,
    forward,
    load_weights,
    normalize_instance,
    predict_virtual_point,
    save_weights,
    shift_scale_for,
)

from conftest import make_three_view


def random_block(rng):
    _, _, x1, x2, x3 = make_three_view(rng, 4)
    return np.stack([x1, x2, x3], axis=1)  # (4, 3, 2)


def reference_forward(weights, rows):
    """Straight-line reimplementation used as the oracle: explicit loops,
    no shared code with the module under test."""

    def act(name, v):
        if name == "leaky_relu":
            return [x if x > 0 else LEAKY_SLOPE * x for x in v]
        if name == "relu":
            return [max(x, 0.0) for x in v]
        return [np.tanh(x) for x in v]

    def dense(name, v):
        W, b = weights.tensors[name]
        return [sum(W[o][i] * v[i] for i in range(len(v))) + b[o] for o in range(W.shape[0])]

    feats = []
    for r in range(4):
        v = list(rows[r])
        for name, _i, _o, a in ARCHITECTURE[:3]:
            v = act(a, dense(name, v))
        feats.append(v)
    pooled = [max(feats[r][c] for r in range(4)) for c in range(32)]
    feats = [f + pooled for f in feats]
    mixed = []
    for v in feats:
        for name, _i, _o, a in ARCHITECTURE[3:6]:
            v = act(a, dense(name, v))
        mixed.append(v)
    g = [max(mixed[r][c] for r in range(4)) for c in range(64)]
    for name, _i, _o, a in ARCHITECTURE[6:]:
        g = act(a, dense(name, g))
    return np.array(g)


class TestForward:
    def test_zero_weights_give_zero_output(self):
        tensors = {
            name: (np.zeros((o, i)), np.zeros(o)) for name, i, o, _ in ARCHITECTURE
        }
        w = PredictorWeights(tensors)
        out = forward(w, np.random.default_rng(0).normal(size=(4, 6)))
        assert np.allclose(out, 0.0)

    def test_output_in_open_unit_square(self, rng):
        w = PredictorWeights.random(3, zero_head=False)
        out = forward(w, rng.normal(size=(4, 6)))
        assert np.all(np.abs(out) < 1.0)

    def test_permutation_invariant(self, rng):
        w = PredictorWeights.random(1, zero_head=False)
        rows = rng.normal(size=(4, 6))
        base = forward(w, rows)
        for perm in itertools.permutations(range(4)):
            assert np.allclose(forward(w, rows[list(perm)]), base, atol=1e-12)

    def test_matches_reference_implementation(self, rng):
        w = PredictorWeights.random(7, zero_head=False)
        rows = rng.normal(size=(4, 6))
        assert np.allclose(forward(w, rows), reference_forward(w, rows), atol=1e-12)

    def test_deterministic(self, rng):
        w = PredictorWeights.random(5, zero_head=False)
        rows = rng.normal(size=(4, 6))
        a = forward(w, rows)
        b = forward(w, rows)
        assert np.array_equal(a, b)

    def test_shape_mismatch_rejected(self, rng):
        w = PredictorWeights.random(0)
        with pytest.raises(ConfigurationError):
            forward(w, np.zeros((5, 6)))


class TestWeightsValidation:
    def test_missing_layer(self):
        tensors = {
            name: (np.zeros((o, i)), np.zeros(o)) for name, i, o, _ in ARCHITECTURE
        }
        tensors.pop("mix2")
        with pytest.raises(ConfigurationError, match="mix2"):
            PredictorWeights(tensors)

    def test_wrong_shape_names_layer(self):
        tensors = {
            name: (np.zeros((o, i)), np.zeros(o)) for name, i, o, _ in ARCHITECTURE
        }
        tensors["head2"] = (np.zeros((32, 60)), np.zeros(32))
        with pytest.raises(ConfigurationError, match="head2"):
            PredictorWeights(tensors)


class TestNormalizeInstance:
    def test_centroid_and_fourth_point_constraints(self, rng):
        corr = random_block(rng)
        rows, frames = normalize_instance(corr)
        for v in range(3):
            view = rows[:, 2 * v : 2 * v + 2]
            assert np.allclose(view[:3].mean(axis=0), 0.0, atol=1e-12)
            assert abs(view[3, 0]) <= 1e-12
            assert view[3, 1] >= 0.0

    def test_already_normalized_gives_identity_frames(self):
        # construct a block already satisfying the constraints
        tri = np.array([(0.1, 0.0), (-0.1, 0.1), (0.0, -0.1)])
        p4 = np.array([0.0, 0.4])
        view = np.concatenate([tri - tri.mean(axis=0), p4[None]], axis=0)
        corr = np.stack([view, view, view], axis=1)
        rows, frames = normalize_instance(corr)
        for f in frames:
            assert np.allclose(f.translation, 0.0, atol=1e-12)
            assert abs(f.angle) <= 1e-12
        assert np.allclose(rows[:, 0:2], view, atol=1e-12)

    def test_round_trip(self, rng):
        corr = random_block(rng)
        rows, frames = normalize_instance(corr)
        for v in range(3):
            rebuilt = frames[v].invert(rows[:, 2 * v : 2 * v + 2])
            assert np.allclose(rebuilt, corr[:, v, :], atol=1e-12)

    def test_degenerate_fourth_point_flagged(self):
        tri = np.array([(1.0, 0.0), (-1.0, 1.0), (0.0, -1.0)])
        p4 = tri.mean(axis=0)
        view = np.concatenate([tri, p4[None]], axis=0)
        corr = np.stack([view, view, view], axis=1)
        _rows, frames = normalize_instance(corr)
        assert all(f.degenerate for f in frames)
        assert all(f.angle == 0.0 for f in frames)


class TestPredictVirtualPoint:
    def test_zero_head_returns_mean(self, rng):
        w = PredictorWeights.random(11, zero_head=True)
        corr = random_block(rng)
        vc = predict_virtual_point(w, corr)
        m1 = corr[:3, 0, :].mean(axis=0)
        m2 = corr[:3, 1, :].mean(axis=0)
        assert np.array_equal(vc.p1, m1)
        assert np.allclose(vc.p2, m2, atol=0.0)
        assert vc.provenance == "learned"

    def test_unit_output_moves_by_shift_scale(self, rng):
        # a doctored head that always outputs (tanh(bias), 0)
        tensors = {
            name: (np.zeros((o, i)), np.zeros(o)) for name, i, o, _ in ARCHITECTURE
        }
        tensors["head3"] = (np.zeros((2, 32)), np.array([np.arctanh(0.5), 0.0]))
        w = PredictorWeights(tensors)
        corr = random_block(rng)
        s = 0.02
        vc = predict_virtual_point(w, corr, shift_scale=s)
        m2 = corr[:3, 1, :].mean(axis=0)
        # output (0.5, 0) in the normalized frame: displacement s/2 along
        # the frame's x axis
        _rows, frames = normalize_instance(corr)
        expected = frames[1].invert(frames[1].apply(m2) + np.array([s * 0.5, 0.0]))
        assert np.allclose(vc.p2, expected, atol=1e-12)
        assert np.linalg.norm(vc.p2 - m2) == pytest.approx(s * 0.5, abs=1e-12)

    def test_default_shift_scale_is_half_bbox(self, rng):
        corr = random_block(rng)
        _rows, frames = normalize_instance(corr)
        tri_n = frames[1].apply(corr[:3, 1, :])
        assert shift_scale_for(tri_n) == pytest.approx(
            0.5 * (tri_n.max(axis=0) - tri_n.min(axis=0)).max()
        )

    def test_custom_init_anchors_prediction(self, rng):
        w = PredictorWeights.random(12, zero_head=True)
        corr = random_block(rng)
        init = corr[:3, 1, :].mean(axis=0) + np.array([0.01, -0.02])
        vc = predict_virtual_point(w, corr, init2=init)
        assert np.allclose(vc.p2, init, atol=1e-15)


class TestWeightsFile:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        w = PredictorWeights.random(21, zero_head=False)
        path = tmp_path / "w.bin"
        save_weights(w, path)
        w2 = load_weights(path)
        for name, *_ in ARCHITECTURE:
            assert np.array_equal(w.tensors[name][0], w2.tensors[name][0])
            assert np.array_equal(w.tensors[name][1], w2.tensors[name][1])

    def test_truncated_file_rejected(self, rng, tmp_path):
        w = PredictorWeights.random(22)
        path = tmp_path / "w.bin"
        save_weights(w, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 17])
        with pytest.raises(ConfigurationError, match="truncated"):
            load_weights(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "w.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ConfigurationError, match="magic"):
            load_weights(path)

    def test_wrong_shape_names_offending_layer(self, rng, tmp_path):
        w = PredictorWeights.random(23)
        # corrupt one layer's shape but keep the container well-formed
        tensors = {k: (v[0].copy(), v[1].copy()) for k, v in w.tensors.items()}
        tensors["enc2"] = (np.zeros((32, 31)), tensors["enc2"][1])
        path = tmp_path / "w.bin"
        records = []
        for name, *_ in ARCHITECTURE:
            W, b = tensors[name]
            records.append((f"{name}.weight", W))
            records.append((f"{name}.bias", b.reshape(-1, 1)))
        import struct

        with open(path, "wb") as fh:
            fh.write(b"TVCW")
            fh.write(struct.pack("<II", 1, len(records)))
            for name, M in records:
                raw = name.encode()
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<II", M.shape[0], M.shape[1]))
                fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())
        with pytest.raises(ConfigurationError, match="enc2"):
            load_weights(path)
