import math

import numpy as np
import pytest

from asrswitch.errors import ArchitectureMismatchError, FormatError, InvalidInputError
from asrswitch.features import FeatureStats
from asrswitch.model import (
    Architecture, attention_pool, attention_weights, bce_loss, forward, grad, init_model,
    load_checkpoint, loss, loss_and_grad, predict_proba, save_checkpoint,
)

SMALL = Architecture(input_dim=6, hidden=4, num_layers=2, attn_dim=3, fc_dim=5)


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def _reference_forward(params, arch, x):
    """Step-by-step forward pass written without vectorisation over time."""
    def lstm(seq, Wx, Wh, b):
        H = arch.hidden
        h, c, out = np.zeros(H), np.zeros(H), []
        for xt in seq:
            z = xt @ Wx + h @ Wh + b
            i = np.array([_sig(v) for v in z[:H]])
            f = np.array([_sig(v) for v in z[H:2 * H]])
            g = np.tanh(z[2 * H:3 * H])
            o = np.array([_sig(v) for v in z[3 * H:]])
            c = f * c + i * g
            h = o * np.tanh(c)
            out.append(h)
        return np.array(out)

    h = x
    for layer in range(arch.num_layers):
        fw = lstm(h, *(params[f"lstm{layer}_fw_{k}"] for k in ("Wx", "Wh", "b")))
        bw = lstm(h[::-1], *(params[f"lstm{layer}_bw_{k}"] for k in ("Wx", "Wh", "b")))[::-1]
        h = np.concatenate([fw, bw], axis=1)
    scores = np.array([np.tanh(ht @ params["attn_W"] + params["attn_b"]) @ params["attn_v"]
                       for ht in h])
    alpha = np.exp(scores - scores.max())
    alpha /= alpha.sum()
    pooled = sum(a * ht for a, ht in zip(alpha, h))
    r = np.maximum(pooled @ params["fc1_W"] + params["fc1_b"], 0)
    logits = r @ params["fc2_W"] + params["fc2_b"]
    e = np.exp(logits - logits.max())
    return e / e.sum(), alpha


@pytest.fixture(scope="module")
def small_model():
    m = init_model(SMALL, seed=7)
    # Keep the ReLU layer live so every parameter receives gradient.
    m.params["fc1_b"][:] = 0.5
    return m


class TestArchitecture:
    def test_default_shapes(self):
        shapes = Architecture().param_shapes()
        assert shapes["lstm0_fw_Wx"] == (512, 512)
        assert shapes["lstm1_fw_Wx"] == (256, 512)
        assert shapes["lstm2_bw_Wh"] == (128, 512)
        assert shapes["fc1_W"] == (256, 128)
        assert shapes["fc2_W"] == (128, 2)
        assert len(shapes) == 3 * 2 * 3 + 7

    def test_param_count_closed_form(self):
        h, d = 128, 512
        lstm = 2 * ((d + h + 1) * 4 * h) + 2 * 2 * ((2 * h + h + 1) * 4 * h)
        attn = 2 * h * 128 + 128 + 128
        fc = 2 * h * 128 + 128 + 128 * 2 + 2
        assert Architecture().num_params() == lstm + attn + fc == 1511042

    def test_init_forget_bias(self):
        m = init_model(Architecture(), seed=0)
        b = m.params["lstm0_fw_b"]
        np.testing.assert_array_equal(b[128:256], 1.0)
        assert np.all(np.abs(m.params["lstm0_fw_Wx"]) <= 1 / math.sqrt(128))


class TestForward:
    def test_matches_reference(self, small_model):
        rng = np.random.default_rng(0)
        for T in (1, 2, 5, 9):
            x = rng.normal(size=(T, 6))
            post = forward(small_model, x)
            ref, alpha = _reference_forward(small_model.params, SMALL, x)
            np.testing.assert_allclose([post.p0, post.p1], ref, atol=1e-12)
            np.testing.assert_allclose(attention_weights(small_model, [x])[0], alpha, atol=1e-12)

    def test_posterior_valid(self, small_model):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = forward(small_model, rng.normal(scale=5, size=(rng.integers(1, 8), 6)))
            assert p.p0 >= 0 and p.p1 >= 0
            assert abs(p.p0 + p.p1 - 1) <= 1e-6

    def test_single_frame_attention(self, small_model):
        x = np.random.default_rng(2).normal(size=(1, 6))
        assert attention_weights(small_model, [x])[0].tolist() == [1.0]

    def test_deterministic(self, small_model):
        x = np.random.default_rng(3).normal(size=(4, 6))
        assert forward(small_model, x) == forward(small_model, x.copy())

    def test_time_reversal_changes_posterior(self, small_model):
        x = np.random.default_rng(4).normal(size=(6, 6))
        assert forward(small_model, x) != forward(small_model, x[::-1])

    def test_padded_batch_matches_single(self, small_model):
        rng = np.random.default_rng(5)
        feats = [rng.normal(size=(n, 6)) for n in (3, 1, 7, 2, 5)]
        batched = predict_proba(small_model, feats)
        for f, row in zip(feats, batched):
            p = forward(small_model, f)
            np.testing.assert_allclose(row, [p.p0, p.p1], atol=1e-12)
        for f, a in zip(feats, attention_weights(small_model, feats)):
            assert a.shape == (f.shape[0],)
            assert np.all(a >= 0) and abs(a.sum() - 1) < 1e-12

    def test_shape_mismatch(self, small_model):
        with pytest.raises(InvalidInputError):
            forward(small_model, np.zeros((3, 7)))
        with pytest.raises(InvalidInputError):
            forward(small_model, np.zeros((0, 6)))

    def test_feature_stats_applied(self):
        stats = FeatureStats(np.full(6, 2.0), np.full(6, 3.0))
        m = init_model(SMALL, seed=1, feature_stats=stats)
        plain = init_model(SMALL, seed=1)
        x = np.random.default_rng(6).normal(size=(4, 6))
        assert forward(m, x) == forward(plain, (x - 2.0) / 3.0)


class TestAttentionPool:
    def test_identical_rows(self):
        rng = np.random.default_rng(0)
        row = rng.normal(size=8)
        H = np.tile(row, (5, 1))
        out, _ = attention_pool(H, rng.normal(size=(8, 3)), rng.normal(size=3), rng.normal(size=3))
        np.testing.assert_allclose(out, row, atol=1e-12)

    def test_single_frame(self):
        rng = np.random.default_rng(1)
        H = rng.normal(size=(1, 8))
        out, alpha = attention_pool(H, rng.normal(size=(8, 3)), rng.normal(size=3), rng.normal(size=3))
        np.testing.assert_array_equal(out, H[0])
        assert alpha.tolist() == [1.0]

    def test_convex_hull(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            H = rng.normal(size=(rng.integers(2, 10), 8))
            out, alpha = attention_pool(H, rng.normal(size=(8, 3)), rng.normal(size=3),
                                        rng.normal(scale=4, size=3))
            assert np.all(out >= H.min(axis=0) - 1e-12)
            assert np.all(out <= H.max(axis=0) + 1e-12)
            assert np.all(alpha >= 0) and abs(alpha.sum() - 1) < 1e-12


class TestLoss:
    def test_examples(self):
        assert bce_loss([1.0, 0.0], [1, 0]) <= 1e-11
        assert bce_loss([0.5, 0.5], [0, 1]) == pytest.approx(math.log(2))
        assert bce_loss([0.9, 0.1], [0, 1]) == pytest.approx(-math.log(0.1))
        assert bce_loss([1.0, 0.0], [0, 1]) == pytest.approx(-math.log(1e-12))

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        p = rng.dirichlet([1, 1], size=100)
        assert np.all(bce_loss(p, np.eye(2)[rng.integers(2, size=100)]) >= 0)


def _fd_check(model, feats_list, labels, h=1e-4, floor=1e-7, per_tensor=None, seed=0):
    """Fourth-order central differences against the analytic gradient.

    Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
    roundoff in entries that are numerically zero from dominating.
    """
    _, g, _ = loss_and_grad(model, feats_list, labels)
    rng = np.random.default_rng(seed)
    worst = {}
    for name, p in model.params.items():
        flat, gf = p.reshape(-1), g[name].reshape(-1)
        idx = np.arange(flat.size) if per_tensor is None else \
            rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
        errs = []
        for i in idx:
            old = flat[i]
            vals = []
            for k in (2, 1, -1, -2):
                flat[i] = old + k * h
                vals.append(loss(model, feats_list, labels))
            flat[i] = old
            n = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
            errs.append(abs(gf[i] - n) / max(abs(gf[i]), abs(n), floor))
        worst[name] = max(errs)
    return worst


class TestGradient:
    def test_every_entry_small_model(self, small_model):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(3, 6))
        _, g, _ = loss_and_grad(small_model, [x], [1])
        assert all(np.abs(v).max() > 1e-8 for v in g.values())
        worst = _fd_check(small_model.copy(), [x], [1])
        assert max(worst.values()) < 1e-4, worst

    def test_batched_padded(self, small_model):
        rng = np.random.default_rng(11)
        feats = [rng.normal(size=(n, 6)) for n in (2, 5, 3)]
        worst = _fd_check(small_model.copy(), feats, [0, 1, 1])
        assert max(worst.values()) < 1e-4, worst

    def test_fc_out_bias_closed_form(self, small_model):
        x = np.random.default_rng(12).normal(size=(4, 6))
        p = forward(small_model, x)
        g = grad(small_model, x, 1)
        np.testing.assert_allclose(g["fc2_b"], [p.p0 - 0, p.p1 - 1], atol=1e-14)

    def test_descent_direction(self, small_model):
        m = small_model.copy()
        x = np.random.default_rng(13).normal(size=(4, 6))
        before, g, _ = loss_and_grad(m, [x], [0])
        for k in m.params:
            m.params[k] = m.params[k] - 1e-3 * g[k]
        assert loss(m, [x], [0]) < before


class TestCheckpoint:
    def test_round_trip(self, tmp_path, small_model):
        path = tmp_path / "m.ckpt"
        save_checkpoint(small_model, path)
        m = load_checkpoint(path)
        assert m.arch == SMALL
        for k, v in small_model.params.items():
            assert np.array_equal(m.params[k], v)
        x = np.random.default_rng(0).normal(size=(3, 6))
        assert forward(m, x) == forward(small_model, x)

    def test_round_trip_with_stats(self, tmp_path):
        stats = FeatureStats(np.arange(6.0), np.full(6, 2.0))
        m = init_model(SMALL, seed=2, feature_stats=stats)
        save_checkpoint(m, tmp_path / "m.ckpt")
        back = load_checkpoint(tmp_path / "m.ckpt")
        np.testing.assert_array_equal(back.feature_stats.mean, stats.mean)
        np.testing.assert_array_equal(back.feature_stats.std, stats.std)

    def test_truncated(self, tmp_path, small_model):
        save_checkpoint(small_model, tmp_path / "m.ckpt")
        data = (tmp_path / "m.ckpt").read_bytes()
        for cut in (4, 40, len(data) - 8):
            (tmp_path / "t.ckpt").write_bytes(data[:cut])
            with pytest.raises(FormatError):
                load_checkpoint(tmp_path / "t.ckpt")

    def test_bad_magic(self, tmp_path, small_model):
        save_checkpoint(small_model, tmp_path / "m.ckpt")
        data = bytearray((tmp_path / "m.ckpt").read_bytes())
        data[0] ^= 0xFF
        (tmp_path / "m.ckpt").write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "m.ckpt")

    def test_architecture_mismatch(self, tmp_path, small_model):
        save_checkpoint(small_model, tmp_path / "m.ckpt")
        other = Architecture(input_dim=6, hidden=8, num_layers=2, attn_dim=3, fc_dim=5)
        with pytest.raises(ArchitectureMismatchError):
            load_checkpoint(tmp_path / "m.ckpt", arch=other)
