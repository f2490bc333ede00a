"""Origin-conditioned trajectory encoder.

Pipeline for a feature sequence ``X`` (seq_len x F) from origin ``k``::

    H     = BiLSTM(X)                           seq_len x 2*d_h
    alpha = softmax(H @ E[k] / sqrt(d_e))       seq_len
    c     = alpha @ H                           2*d_h
    z     = W2 relu(W1 [c; E[k]] + b1) + b2     d_z = [z_shared | z_specific]
    recon = V2 relu(V1 z + a1) + a2             seq_len x F

Everything is float64 numpy with a hand-written reverse pass
(:func:`backward`), batched over the leading axis.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, ParameterError, SchemaError

CHECKPOINT_FORMAT = "asymcity-checkpoint"


@dataclass(frozen=True)
class EncoderConfig:
    n_origins: int = 8
    input_dim: int = 2
    seq_len: int = 21
    lstm_hidden: int = 32
    origin_embed_dim: int = 64
    latent_dim: int = 64
    shared_dim: int = 32
    fusion_hidden: int = 128
    decoder_hidden: int = 128

    def validate(self):
        if self.origin_embed_dim != 2 * self.lstm_hidden:
            raise ParameterError("origin_embed_dim", "must equal 2 * lstm_hidden")
        if not 0 < self.shared_dim < self.latent_dim:
            raise ParameterError("shared_dim", "must lie in (0, latent_dim)")
        for name in ("n_origins", "input_dim", "seq_len", "lstm_hidden",
                     "fusion_hidden", "decoder_hidden"):
            if getattr(self, name) < 1:
                raise ParameterError(name, "must be >= 1")


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    F, h = cfg.input_dim, cfg.lstm_hidden
    shapes = {}
    for d in ("fw", "bw"):
        shapes[f"{d}_Wx"] = (F, 4 * h)
        shapes[f"{d}_Wh"] = (h, 4 * h)
        shapes[f"{d}_b"] = (4 * h,)
    shapes["embed"] = (cfg.n_origins, cfg.origin_embed_dim)
    shapes["fus_W1"] = (2 * h + cfg.origin_embed_dim, cfg.fusion_hidden)
    shapes["fus_b1"] = (cfg.fusion_hidden,)
    shapes["fus_W2"] = (cfg.fusion_hidden, cfg.latent_dim)
    shapes["fus_b2"] = (cfg.latent_dim,)
    shapes["dec_W1"] = (cfg.latent_dim, cfg.decoder_hidden)
    shapes["dec_b1"] = (cfg.decoder_hidden,)
    shapes["dec_W2"] = (cfg.decoder_hidden, cfg.seq_len * F)
    shapes["dec_b2"] = (cfg.seq_len * F,)
    return shapes


def init_params(cfg: EncoderConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases except LSTM forget gates (1.0), N(0, 0.1) embeddings.

    LSTM gate blocks are laid out as [input, forget, output, candidate].
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    h = cfg.lstm_hidden
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name == "embed":
            params[name] = rng.normal(0.0, 0.1, size=shape)
        elif len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape)
    for d in ("fw", "bw"):
        params[f"{d}_b"][h:2 * h] = 1.0
    return params


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(X, Wx, Wh, b):
    """Unidirectional LSTM over ``X`` (B, T, F) from zero state; returns (H, cache)."""
    B, T, _ = X.shape
    h_dim = Wh.shape[0]
    h = np.zeros((B, h_dim))
    c = np.zeros((B, h_dim))
    H = np.zeros((B, T, h_dim))
    steps = []
    xw = X @ Wx + b
    for t in range(T):
        a = xw[:, t] + h @ Wh
        i = _sigmoid(a[:, :h_dim])
        f = _sigmoid(a[:, h_dim:2 * h_dim])
        o = _sigmoid(a[:, 2 * h_dim:3 * h_dim])
        g = np.tanh(a[:, 3 * h_dim:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        H[:, t] = h
        steps.append((i, f, o, g, c_prev, h_prev, tc))
    return H, (X, Wx, Wh, steps)


def lstm_backward(dH, cache):
    """Backpropagation through time; returns (dX, dWx, dWh, db)."""
    X, Wx, Wh, steps = cache
    B, T, _ = X.shape
    h_dim = Wh.shape[0]
    dWh = np.zeros_like(Wh)
    dA = np.zeros((B, T, 4 * h_dim))
    dh_next = np.zeros((B, h_dim))
    dc_next = np.zeros((B, h_dim))
    for t in range(T - 1, -1, -1):
        i, f, o, g, c_prev, h_prev, tc = steps[t]
        dh = dH[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = dA[:, t]
        da[:, :h_dim] = dc * g * i * (1.0 - i)
        da[:, h_dim:2 * h_dim] = dc * c_prev * f * (1.0 - f)
        da[:, 2 * h_dim:3 * h_dim] = dh * tc * o * (1.0 - o)
        da[:, 3 * h_dim:] = dc * i * (1.0 - g * g)
        dWh += h_prev.T @ da
        dh_next = da @ Wh.T
        dc_next = dc * f
    dWx = np.einsum("btf,btg->fg", X, dA)
    db = dA.sum(axis=(0, 1))
    dX = dA @ Wx.T
    return dX, dWx, dWh, db


def bilstm(params, X):
    """Bidirectional LSTM; ``X`` is (seq_len, F) or (B, seq_len, F).

    Row t of the result is [forward state at t ; backward state at t].
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != params["fw_Wx"].shape[0]:
        raise DomainError(f"expected features of width {params['fw_Wx'].shape[0]}, got shape {X.shape}")
    H, _ = _bilstm(params, X)
    return H[0] if single else H


def _bilstm(params, X):
    Hf, cf = lstm_forward(X, params["fw_Wx"], params["fw_Wh"], params["fw_b"])
    Hb, cb = lstm_forward(X[:, ::-1], params["bw_Wx"], params["bw_Wh"], params["bw_b"])
    return np.concatenate([Hf, Hb[:, ::-1]], axis=2), (cf, cb)


def attention(H, e):
    """Scaled dot-product attention of one query ``e`` over the rows of ``H``.

    Works on a single sequence (H: T x D, e: D) or a batch (B x T x D, B x D).
    """
    H = np.asarray(H, dtype=float)
    e = np.asarray(e, dtype=float)
    s = np.einsum("...td,...d->...t", H, e) / np.sqrt(e.shape[-1])
    s = s - s.max(axis=-1, keepdims=True)
    w = np.exp(s)
    alpha = w / w.sum(axis=-1, keepdims=True)
    c = np.einsum("...t,...td->...d", alpha, H)
    return alpha, c


@dataclass
class LatentRepr:
    z: np.ndarray
    shared_dim: int

    @property
    def z_shared(self):
        return self.z[..., :self.shared_dim]

    @property
    def z_specific(self):
        return self.z[..., self.shared_dim:]


@dataclass
class ForwardOutput:
    H: np.ndarray
    alpha: np.ndarray
    c: np.ndarray
    latent: LatentRepr
    recon: np.ndarray
    cache: tuple | None = None

    @property
    def z(self):
        return self.latent.z


def forward_batch(params, X, k, shared_dim: int, keep_cache: bool = True) -> ForwardOutput:
    """Run the encoder on a batch ``X`` (B, T, F) with origin indices ``k`` (B,)."""
    X = np.asarray(X, dtype=float)
    k = np.asarray(k, dtype=int)
    K = params["embed"].shape[0]
    if np.any(k < 0) or np.any(k >= K):
        raise DomainError(f"origin index out of range [0, {K})")
    if X.ndim != 3 or X.shape[2] != params["fw_Wx"].shape[0]:
        raise DomainError(f"expected features shaped (B, T, {params['fw_Wx'].shape[0]}), got {X.shape}")
    B, T, F = X.shape
    if params["dec_W2"].shape[1] != T * F:
        raise DomainError(f"sequence length {T} does not match the decoder")

    H, lstm_cache = _bilstm(params, X)
    e = params["embed"][k]
    alpha, c = attention(H, e)
    u = np.concatenate([c, e], axis=1)
    a1 = u @ params["fus_W1"] + params["fus_b1"]
    r1 = np.maximum(a1, 0.0)
    z = r1 @ params["fus_W2"] + params["fus_b2"]
    a2 = z @ params["dec_W1"] + params["dec_b1"]
    r2 = np.maximum(a2, 0.0)
    y = r2 @ params["dec_W2"] + params["dec_b2"]
    recon = y.reshape(B, T, F)
    cache = (X, k, lstm_cache, H, e, alpha, u, a1, r1, z, a2, r2) if keep_cache else None
    return ForwardOutput(H, alpha, c, LatentRepr(z, shared_dim), recon, cache)


def forward(params, features, k: int, shared_dim: int = 32) -> ForwardOutput:
    """Single-trajectory forward pass."""
    out = forward_batch(params, np.asarray(features, dtype=float)[None], [k], shared_dim, keep_cache=False)
    return ForwardOutput(out.H[0], out.alpha[0], out.c[0], LatentRepr(out.z[0], shared_dim), out.recon[0])


def backward(params, out: ForwardOutput, dz, drecon) -> dict[str, np.ndarray]:
    """Parameter gradients given upstream gradients on ``z`` and ``recon``."""
    X, k, (cf, cb), H, e, alpha, u, a1, r1, z, a2, r2 = out.cache
    B, T, F = X.shape
    g = {}

    dy = drecon.reshape(B, T * F)
    g["dec_W2"] = r2.T @ dy
    g["dec_b2"] = dy.sum(axis=0)
    da2 = (dy @ params["dec_W2"].T) * (a2 > 0)
    g["dec_W1"] = z.T @ da2
    g["dec_b1"] = da2.sum(axis=0)
    dz = dz + da2 @ params["dec_W1"].T

    g["fus_W2"] = r1.T @ dz
    g["fus_b2"] = dz.sum(axis=0)
    da1 = (dz @ params["fus_W2"].T) * (a1 > 0)
    g["fus_W1"] = u.T @ da1
    g["fus_b1"] = da1.sum(axis=0)
    du = da1 @ params["fus_W1"].T
    D = H.shape[2]
    dc, de = du[:, :D], du[:, D:].copy()

    dH = alpha[:, :, None] * dc[:, None, :]
    dalpha = np.einsum("btd,bd->bt", H, dc)
    ds = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    scale = 1.0 / np.sqrt(e.shape[1])
    dH += ds[:, :, None] * e[:, None, :] * scale
    de += np.einsum("bt,btd->bd", ds, H) * scale
    g["embed"] = np.zeros_like(params["embed"])
    np.add.at(g["embed"], k, de)

    h = D // 2
    _, g["fw_Wx"], g["fw_Wh"], g["fw_b"] = lstm_backward(dH[:, :, :h], cf)
    _, g["bw_Wx"], g["bw_Wh"], g["bw_b"] = lstm_backward(dH[:, ::-1, h:], cb)
    return {name: g[name] for name in params}


def save_checkpoint(params, cfg: EncoderConfig, path, extra: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "config": asdict(cfg),
        "extra": extra or {},
        "tensors": {name: {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}
                    for name, arr in params.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path):
    """Return ``(params, cfg, extra)`` from a checkpoint file."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise SchemaError("$.format", f"expected {CHECKPOINT_FORMAT!r}")
    cfg = EncoderConfig(**doc["config"])
    expected = param_shapes(cfg)
    params = {}
    for name, shape in expected.items():
        t = doc["tensors"].get(name)
        if t is None:
            raise SchemaError(f"$.tensors.{name}", "missing tensor")
        if tuple(t["shape"]) != shape:
            raise SchemaError(f"$.tensors.{name}.shape", f"expected {list(shape)}")
        params[name] = np.array(t["data"], dtype=float).reshape(shape)
    return params, cfg, doc.get("extra", {})
