"""BLSTM switch classifier with attention pooling, in plain numpy.

Architecture: a stack of bidirectional LSTM layers over the paired log-mel
frames, attention pooling over time, a ReLU hidden layer and a 2-way
softmax.  Class 0 means "the observed mixture is better for ASR", class 1
"the enhanced signal is better".

Batches are zero-padded to the longest utterance; padded frames are masked
out of the pooling, and the backward-direction LSTM reads every sequence
from its own last valid frame, so results do not depend on padding.
All arithmetic is float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decision import Posterior
from .errors import ArchitectureMismatchError, FormatError, InvalidInputError
from .features import FeatureStats

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class Architecture:
    input_dim: int = 512
    hidden: int = 128
    num_layers: int = 3
    attn_dim: int = 128
    fc_dim: int = 128
    num_classes: int = 2

    def as_tuple(self):
        return (self.input_dim, self.hidden, self.num_layers,
                self.attn_dim, self.fc_dim, self.num_classes)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter names and shapes in checkpoint order."""
        h = self.hidden
        shapes = {}
        for layer in range(self.num_layers):
            in_dim = self.input_dim if layer == 0 else 2 * h
            for d in ("fw", "bw"):
                shapes[f"lstm{layer}_{d}_Wx"] = (in_dim, 4 * h)
                shapes[f"lstm{layer}_{d}_Wh"] = (h, 4 * h)
                shapes[f"lstm{layer}_{d}_b"] = (4 * h,)
        shapes["attn_W"] = (2 * h, self.attn_dim)
        shapes["attn_b"] = (self.attn_dim,)
        shapes["attn_v"] = (self.attn_dim,)
        shapes["fc1_W"] = (2 * h, self.fc_dim)
        shapes["fc1_b"] = (self.fc_dim,)
        shapes["fc2_W"] = (self.fc_dim, self.num_classes)
        shapes["fc2_b"] = (self.num_classes,)
        return shapes

    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())


@dataclass
class SwitchModel:
    arch: Architecture
    params: dict[str, np.ndarray]
    feature_stats: FeatureStats | None = None

    def copy(self) -> "SwitchModel":
        return SwitchModel(self.arch, {k: v.copy() for k, v in self.params.items()},
                           self.feature_stats)


def init_model(arch: Architecture = Architecture(), seed: int = 0,
               feature_stats: FeatureStats | None = None) -> SwitchModel:
    """Uniform(-k, k) init with k = 1/sqrt(hidden); LSTM forget-gate bias +1."""
    rng = np.random.default_rng(seed)
    params = {}
    h = arch.hidden
    for name, shape in arch.param_shapes().items():
        if name.startswith("lstm"):
            k = 1.0 / np.sqrt(h)
        elif name.endswith("_b"):
            k = 0.0
        else:
            k = 1.0 / np.sqrt(shape[0])
        params[name] = rng.uniform(-k, k, size=shape)
        if name.startswith("lstm") and name.endswith("_b"):
            params[name][h:2 * h] = 1.0
    return SwitchModel(arch, params, feature_stats)


# -- helpers ---------------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(x, axis=-1):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def pad_batch(feats_list) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length ``(frames, dim)`` matrices into ``(B, T, dim)``."""
    if not feats_list:
        raise InvalidInputError("empty batch")
    lengths = np.array([f.shape[0] for f in feats_list])
    if lengths.min() < 1:
        raise InvalidInputError("every utterance needs at least one frame")
    dim = feats_list[0].shape[1]
    x = np.zeros((len(feats_list), int(lengths.max()), dim))
    for b, f in enumerate(feats_list):
        if f.ndim != 2 or f.shape[1] != dim:
            raise InvalidInputError("feature matrices have inconsistent shapes")
        x[b, :f.shape[0]] = f
    return x, lengths


def _reverse_index(lengths, T):
    """Per-row index that reverses the valid prefix and leaves padding in place."""
    t = np.arange(T)[None, :]
    L = lengths[:, None]
    return np.where(t < L, L - 1 - t, t)


# -- LSTM ------------------------------------------------------------------

def _lstm_forward(x, Wx, Wh, b):
    B, T, _ = x.shape
    H = Wh.shape[0]
    a_in = x @ Wx + b
    hs = np.empty((B, T + 1, H))
    cs = np.empty((B, T + 1, H))
    hs[:, 0] = 0.0
    cs[:, 0] = 0.0
    gates = np.empty((B, T, 4 * H))
    tanh_c = np.empty((B, T, H))
    for t in range(T):
        a = a_in[:, t] + hs[:, t] @ Wh
        g = gates[:, t]
        g[:, :2 * H] = _sigmoid(a[:, :2 * H])
        g[:, 2 * H:3 * H] = np.tanh(a[:, 2 * H:3 * H])
        g[:, 3 * H:] = _sigmoid(a[:, 3 * H:])
        cs[:, t + 1] = g[:, H:2 * H] * cs[:, t] + g[:, :H] * g[:, 2 * H:3 * H]
        tanh_c[:, t] = np.tanh(cs[:, t + 1])
        hs[:, t + 1] = g[:, 3 * H:] * tanh_c[:, t]
    return hs[:, 1:], (x, hs, cs, gates, tanh_c)


def _lstm_backward(dh_out, cache, Wx, Wh):
    x, hs, cs, gates, tanh_c = cache
    B, T, H = dh_out.shape
    da = np.empty((B, T, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        g = gates[:, t]
        i, f, gg, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        dh = dh_out[:, t] + dh_next
        dc = dh * o * (1.0 - tanh_c[:, t] ** 2) + dc_next
        d = da[:, t]
        d[:, :H] = dc * gg * i * (1.0 - i)
        d[:, H:2 * H] = dc * cs[:, t] * f * (1.0 - f)
        d[:, 2 * H:3 * H] = dc * i * (1.0 - gg ** 2)
        d[:, 3 * H:] = dh * tanh_c[:, t] * o * (1.0 - o)
        dc_next = dc * f
        dh_next = d @ Wh.T
    dWx = np.tensordot(x, da, axes=([0, 1], [0, 1]))
    dWh = np.tensordot(hs[:, :-1], da, axes=([0, 1], [0, 1]))
    db = da.sum(axis=(0, 1))
    dx = da @ Wx.T
    return dx, dWx, dWh, db


# -- forward / backward ----------------------------------------------------

def _forward(model: SwitchModel, x, lengths, keep_cache=False):
    p = model.params
    arch = model.arch
    B, T, _ = x.shape
    if x.shape[2] != arch.input_dim:
        raise InvalidInputError(f"expected {arch.input_dim}-dim features, got {x.shape[2]}")
    if model.feature_stats is not None:
        x = model.feature_stats.apply(x)
    mask = np.arange(T)[None, :] < lengths[:, None]
    x = x * mask[:, :, None]
    rev = _reverse_index(lengths, T)
    rows = np.arange(B)[:, None]
    caches = []
    h = x
    for layer in range(arch.num_layers):
        hf, cf = _lstm_forward(h, p[f"lstm{layer}_fw_Wx"], p[f"lstm{layer}_fw_Wh"],
                               p[f"lstm{layer}_fw_b"])
        hb_rev, cb = _lstm_forward(h[rows, rev], p[f"lstm{layer}_bw_Wx"],
                                   p[f"lstm{layer}_bw_Wh"], p[f"lstm{layer}_bw_b"])
        h = np.concatenate([hf, hb_rev[rows, rev]], axis=2)
        if keep_cache:
            caches.append((cf, cb))
    # attention pooling
    u = np.tanh(h @ p["attn_W"] + p["attn_b"])
    scores = np.where(mask, u @ p["attn_v"], -np.inf)
    alpha = _softmax(scores, axis=1)
    pooled = np.einsum("bt,btd->bd", alpha, h)
    z1 = pooled @ p["fc1_W"] + p["fc1_b"]
    r = np.maximum(z1, 0.0)
    logits = r @ p["fc2_W"] + p["fc2_b"]
    probs = _softmax(logits, axis=1)
    cache = None
    if keep_cache:
        cache = dict(mask=mask, rev=rev, rows=rows, lstm=caches, h=h, u=u, alpha=alpha,
                     pooled=pooled, z1=z1, r=r)
    return probs, alpha, cache


def predict_proba(model: SwitchModel, feats_list, batch_size: int = 64) -> np.ndarray:
    """Posteriors for a list of feature matrices, shape ``(N, num_classes)``."""
    out = []
    for start in range(0, len(feats_list), batch_size):
        x, lengths = pad_batch(feats_list[start:start + batch_size])
        out.append(_forward(model, x, lengths)[0])
    return np.concatenate(out, axis=0)


def forward(model: SwitchModel, feats: np.ndarray) -> Posterior:
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise InvalidInputError("features must be a (frames >= 1, dim) matrix")
    probs, _, _ = _forward(model, feats[None], np.array([feats.shape[0]]))
    return Posterior(float(probs[0, 0]), float(probs[0, 1]))


def attention_weights(model: SwitchModel, feats_list) -> list[np.ndarray]:
    x, lengths = pad_batch(feats_list)
    _, alpha, _ = _forward(model, x, lengths)
    return [alpha[b, :L] for b, L in enumerate(lengths)]


def attention_pool(H, W, b, v, mask=None):
    """Pool ``(frames, D)`` rows: u = tanh(H W + b), alpha = softmax(u v)."""
    H = np.asarray(H, dtype=np.float64)
    scores = np.tanh(H @ W + b) @ v
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    alpha = _softmax(scores, axis=-1)
    return alpha @ H, alpha


def bce_loss(probs, targets) -> np.ndarray:
    """Cross-entropy ``-sum_k p_k ln(clamp(q_k))`` per row."""
    q = np.clip(np.asarray(probs, dtype=np.float64), PROB_FLOOR, 1.0)
    return -np.sum(np.asarray(targets, dtype=np.float64) * np.log(q), axis=-1)


def one_hot(labels, num_classes=2) -> np.ndarray:
    return np.eye(num_classes)[np.asarray(labels, dtype=int)]


def loss_and_grad(model: SwitchModel, feats_list, labels):
    """Mean cross-entropy over the batch and its exact gradient.

    ``labels`` holds class indices (0 = mixture better).  The gradient of the
    probability clamp is ignored; it only matters below 1e-12.
    """
    p = model.params
    arch = model.arch
    x, lengths = pad_batch(feats_list)
    B = x.shape[0]
    probs, alpha, c = _forward(model, x, lengths, keep_cache=True)
    y = one_hot(labels, arch.num_classes)
    loss = float(np.mean(bce_loss(probs, y)))

    g = {}
    dlogits = (probs - y) / B
    g["fc2_W"] = c["r"].T @ dlogits
    g["fc2_b"] = dlogits.sum(axis=0)
    dz1 = (dlogits @ p["fc2_W"].T) * (c["z1"] > 0)
    g["fc1_W"] = c["pooled"].T @ dz1
    g["fc1_b"] = dz1.sum(axis=0)
    dpooled = dz1 @ p["fc1_W"].T

    h, u = c["h"], c["u"]
    dalpha = np.einsum("btd,bd->bt", h, dpooled)
    dscore = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
    g["attn_v"] = np.einsum("bt,bta->a", dscore, u)
    dpre = dscore[:, :, None] * p["attn_v"] * (1.0 - u ** 2)
    g["attn_W"] = np.tensordot(h, dpre, axes=([0, 1], [0, 1]))
    g["attn_b"] = dpre.sum(axis=(0, 1))
    dh = alpha[:, :, None] * dpooled[:, None, :] + dpre @ p["attn_W"].T

    rev, rows = c["rev"], c["rows"]
    H = arch.hidden
    for layer in range(arch.num_layers - 1, -1, -1):
        cf, cb = c["lstm"][layer]
        pre = f"lstm{layer}_"
        dx_f, g[pre + "fw_Wx"], g[pre + "fw_Wh"], g[pre + "fw_b"] = _lstm_backward(
            dh[:, :, :H], cf, p[pre + "fw_Wx"], p[pre + "fw_Wh"])
        dx_b, g[pre + "bw_Wx"], g[pre + "bw_Wh"], g[pre + "bw_b"] = _lstm_backward(
            dh[:, :, H:][rows, rev], cb, p[pre + "bw_Wx"], p[pre + "bw_Wh"])
        dh = dx_f + dx_b[rows, rev]
    grads = {name: g[name] for name in p}
    return loss, grads, probs


def grad(model: SwitchModel, feats: np.ndarray, label: int) -> dict[str, np.ndarray]:
    """Gradient of the single-utterance loss with respect to every parameter."""
    return loss_and_grad(model, [np.asarray(feats, dtype=np.float64)], [label])[1]


def loss(model: SwitchModel, feats_list, labels) -> float:
    x, lengths = pad_batch(feats_list)
    probs, _, _ = _forward(model, x, lengths)
    return float(np.mean(bce_loss(probs, one_hot(labels, model.arch.num_classes))))


# -- checkpoints -----------------------------------------------------------

MAGIC = b"ASWCKPT\x00"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<8sI6II")


def save_checkpoint(model: SwitchModel, path) -> None:
    """Magic, version, architecture constants, then float64 LE arrays in order."""
    arch = model.arch
    stats = model.feature_stats
    chunks = [_HEAD.pack(MAGIC, FORMAT_VERSION, *arch.as_tuple(), int(stats is not None))]
    for name, shape in arch.param_shapes().items():
        arr = model.params[name]
        if arr.shape != shape:
            raise InvalidInputError(f"{name} has shape {arr.shape}, expected {shape}")
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if stats is not None:
        chunks.append(np.ascontiguousarray(stats.mean, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(stats.std, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path, arch: Architecture | None = None) -> SwitchModel:
    """Load a checkpoint; if ``arch`` is given the stored one must match it."""
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, *consts, has_stats = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a switch-model checkpoint")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    stored = Architecture(*consts)
    if arch is not None and stored != arch:
        raise ArchitectureMismatchError(f"{path}: checkpoint architecture {stored} != {arch}")
    shapes = stored.param_shapes()
    n_vals = stored.num_params() + (2 * stored.input_dim if has_stats else 0)
    if len(data) != _HEAD.size + 8 * n_vals:
        raise FormatError(f"{path}: expected {n_vals} float64 values after the header")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEAD.size).astype(np.float64)
    params, pos = {}, 0
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        params[name] = flat[pos:pos + n].reshape(shape).copy()
        pos += n
    stats = None
    if has_stats:
        d = stored.input_dim
        stats = FeatureStats(flat[pos:pos + d].copy(), flat[pos + d:pos + 2 * d].copy())
    return SwitchModel(stored, params, stats)
