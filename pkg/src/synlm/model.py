"""Dense transformer core with a syntax-aggregation pathway.

Per layer, activations H are combined with a syntax view
Hhat = act(H W1 + (S H) W2 + b) built from the strength matrix S, mixed as
H' = (1 - alpha) H + alpha Hhat, and fed through a standard post-norm
transformer block. Forward caches everything needed for exact reverse-mode
gradients; no autodiff framework is involved.

All tensors are batched (B, T, ...) with a 0/1 padding mask; 1-D token id
arrays are promoted to a batch of one.
"""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import erf

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class NumericsError(ArithmeticError):
    """Non-finite values encountered where finite ones are required."""


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


ACTIVATIONS = {
    "identity": (lambda x: x, lambda x: np.ones_like(x)),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x: (x > 0).astype(x.dtype)),
    "gelu": (_gelu, _gelu_grad),
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ModelConfig:
    n_layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 512
    vocab_size: int = 1024
    max_len: int = 128
    dist_classes: int = 16
    alpha_init: float = 0.1
    alpha_enabled: bool = True
    syntax_enabled: bool = True
    per_layer_alpha: bool = False
    syntax_bias: bool = True
    activation: str = "gelu"
    dropout: float = 0.1
    # 1e-12 keeps normalized rows at unit variance to ~1e-9 on live
    # activations while still guarding the zero-variance division.
    ln_eps: float = 1e-12
    dtype: str = "float64"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.n_heads} heads")
        if not 0.0 <= self.alpha_init < 1.0:
            raise ValueError(f"alpha_init must be in [0, 1), got {self.alpha_init}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.alpha_enabled and not self.syntax_enabled:
            raise ValueError("alpha_enabled requires syntax_enabled")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_kv(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_kv(cls, text: str) -> "ModelConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            if key not in kinds:
                raise ValueError(f"unknown model config key {key!r}")
            kind = kinds[key]
            if kind == "bool":
                kwargs[key] = value == "True"
            elif kind == "int":
                kwargs[key] = int(value)
            elif kind == "float":
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

INIT_STD = 0.02


def seeded_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per tensor name, so that adding or removing tensors
    (ablation arms) never shifts the initialization of the others."""
    return np.random.default_rng(np.random.SeedSequence((seed, zlib.crc32(name.encode()))))


def init_tensor(name: str, shape: tuple[int, ...], seed: int, dtype,
                std: float = INIT_STD) -> np.ndarray:
    return (seeded_rng(seed, name).standard_normal(shape) * std).astype(dtype)


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Backbone parameters: scaled-normal weights, zero biases, unit LN gains.

    Task-head parameters are created by the pre-training and fine-tuning
    code. Deterministic for a fixed seed.
    """
    L, d, dff = cfg.n_layers, cfg.d_model, cfg.d_ff
    dt = cfg.np_dtype
    p: dict[str, np.ndarray] = {}
    p["tok_emb"] = init_tensor("tok_emb", (cfg.vocab_size, d), seed, dt)
    p["pos_emb"] = init_tensor("pos_emb", (cfg.max_len, d), seed, dt)
    for stem in ("attn_q", "attn_k", "attn_v", "attn_o"):
        p[f"{stem}_w"] = init_tensor(f"{stem}_w", (L, d, d), seed, dt)
        if stem != "attn_k":
            # a key bias shifts every score in a row by the same amount,
            # which softmax cancels exactly; it is not an effective parameter
            p[f"{stem}_b"] = np.zeros((L, d), dtype=dt)
    p["ffn_1_w"] = init_tensor("ffn_1_w", (L, d, dff), seed, dt)
    p["ffn_1_b"] = np.zeros((L, dff), dtype=dt)
    p["ffn_2_w"] = init_tensor("ffn_2_w", (L, dff, d), seed, dt)
    p["ffn_2_b"] = np.zeros((L, d), dtype=dt)
    for ln in ("ln_1", "ln_2"):
        p[f"{ln}_g"] = np.ones((L, d), dtype=dt)
        p[f"{ln}_b"] = np.zeros((L, d), dtype=dt)
    if cfg.syntax_enabled:
        p["syn_1_w"] = init_tensor("syn_1_w", (L, d, d), seed, dt)
        p["syn_2_w"] = init_tensor("syn_2_w", (L, d, d), seed, dt)
        if cfg.syntax_bias:
            p["syn_b"] = np.zeros((L, d), dtype=dt)
        if cfg.alpha_enabled:
            if cfg.alpha_init == 0.0:
                warnings.warn("alpha_init is 0: the syntax pathway starts inert")
            shape = (L,) if cfg.per_layer_alpha else ()
            p["alpha"] = np.full(shape, cfg.alpha_init, dtype=dt)
    return p


def no_weight_decay(name: str) -> bool:
    """Biases, layer-norm parameters and the mixing scalar are not decayed."""
    return name == "alpha" or name.startswith("ln_") or name.endswith("_b")


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

@dataclass
class ForwardTrace:
    """Everything the backward pass needs: inputs plus per-layer caches."""

    ids: np.ndarray
    mask: np.ndarray
    strength: np.ndarray | None
    h0: np.ndarray
    layers: list[dict] = field(default_factory=list)
    h_final: np.ndarray | None = None
    squeezed: bool = False  # input was a single unbatched sequence


def _layer_norm(x, gain, bias, eps):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return gain * xhat + bias, xhat, inv


def _layer_norm_backward(dout, xhat, inv, gain):
    dxhat = dout * gain
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    dgain = (dout * xhat).sum(axis=(0, 1))
    dbias = dout.sum(axis=(0, 1))
    return dx, dgain, dbias


def _softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _dropout(x, rate, rng):
    if rate <= 0.0 or rng is None:
        return x, None
    keep = 1.0 - rate
    m = (rng.random(x.shape) < keep).astype(x.dtype) / keep
    return x * m, m


def _split_heads(x, n_heads):
    B, T, d = x.shape
    return x.reshape(B, T, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, h, T, hd = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, h * hd)


def _promote(ids, strength, mask, dtype):
    ids = np.asarray(ids, dtype=np.int64)
    squeezed = ids.ndim == 1
    if squeezed:
        ids = ids[None, :]
        if strength is not None:
            strength = np.asarray(strength, dtype=dtype)[None, :, :]
    elif strength is not None:
        strength = np.asarray(strength, dtype=dtype)
    if mask is None:
        mask = np.ones(ids.shape, dtype=dtype)
    else:
        mask = np.asarray(mask, dtype=dtype)
        if squeezed and mask.ndim == 1:
            mask = mask[None, :]
    return ids, strength, mask, squeezed


def mix(h, h_hat, alpha):
    """Convex-style combination (1 - alpha) h + alpha h_hat."""
    return (1.0 - alpha) * h + alpha * h_hat


def forward(params: dict, cfg: ModelConfig, ids, strength=None, mask=None,
            train: bool = False, rng: np.random.Generator | None = None) -> ForwardTrace:
    """Run the full stack and cache intermediates for the backward pass.

    `strength` is the (B, T, T) row-normalized matrix; required when the
    syntax pathway is enabled. Dropout is active only when train=True and an
    rng is supplied.
    """
    ids, strength, mask, squeezed = _promote(ids, strength, mask, cfg.np_dtype)
    B, T = ids.shape
    if T > cfg.max_len:
        raise ValueError(f"sequence length {T} exceeds max_len {cfg.max_len}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ValueError("token id out of vocabulary range")
    if cfg.syntax_enabled and strength is None:
        raise ValueError("syntax pathway enabled but no strength matrix given")
    drop_rng = rng if (train and cfg.dropout > 0.0) else None
    rate = cfg.dropout if drop_rng is not None else 0.0
    act, _ = ACTIVATIONS[cfg.activation]

    h = params["tok_emb"][ids] + params["pos_emb"][:T]
    trace = ForwardTrace(ids=ids, mask=mask, strength=strength, h0=h, squeezed=squeezed)
    # -1e9 on padded keys removes them from every softmax
    attn_bias = ((mask - 1.0) * 1e9)[:, None, None, :]

    for l in range(cfg.n_layers):
        c: dict = {"h_in": h}
        if cfg.syntax_enabled:
            sh = strength @ h
            z = h @ params["syn_1_w"][l] + sh @ params["syn_2_w"][l]
            if cfg.syntax_bias:
                z = z + params["syn_b"][l]
            h_hat = act(z)
            c["syn_sh"], c["syn_z"], c["h_hat"] = sh, z, h_hat
            if cfg.alpha_enabled:
                a = params["alpha"][l] if cfg.per_layer_alpha else params["alpha"]
                h_mix = mix(h, h_hat, a)
            else:
                h_mix = h + h_hat  # mixing scalar ablated: plain sum
        else:
            h_mix = h
        c["h_mix"] = h_mix

        q = _split_heads(h_mix @ params["attn_q_w"][l] + params["attn_q_b"][l], cfg.n_heads)
        k = _split_heads(h_mix @ params["attn_k_w"][l], cfg.n_heads)
        v = _split_heads(h_mix @ params["attn_v_w"][l] + params["attn_v_b"][l], cfg.n_heads)
        scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(cfg.head_dim) + attn_bias
        probs = _softmax(scores)
        probs_d, c["attn_pmask"] = _dropout(probs, rate, drop_rng)
        ctx = _merge_heads(probs_d @ v)
        attn_out = ctx @ params["attn_o_w"][l] + params["attn_o_b"][l]
        attn_out, c["attn_omask"] = _dropout(attn_out, rate, drop_rng)
        c.update(q=q, k=k, v=v, attn_probs=probs, attn_probs_dropped=probs_d, ctx=ctx)

        g, c["ln1_xhat"], c["ln1_inv"] = _layer_norm(
            h_mix + attn_out, params["ln_1_g"][l], params["ln_1_b"][l], cfg.ln_eps)
        c["g"] = g

        ffn_z = g @ params["ffn_1_w"][l] + params["ffn_1_b"][l]
        ffn_h = act(ffn_z)
        ffn_out = ffn_h @ params["ffn_2_w"][l] + params["ffn_2_b"][l]
        ffn_out, c["ffn_omask"] = _dropout(ffn_out, rate, drop_rng)
        c.update(ffn_z=ffn_z, ffn_h=ffn_h)

        h, c["ln2_xhat"], c["ln2_inv"] = _layer_norm(
            g + ffn_out, params["ln_2_g"][l], params["ln_2_b"][l], cfg.ln_eps)
        trace.layers.append(c)

    trace.h_final = h
    return trace


def syntax_repr(h, strength, layer: int, params: dict, cfg: ModelConfig) -> np.ndarray:
    """Syntax view of one layer's activations (convenience, forward only)."""
    act, _ = ACTIVATIONS[cfg.activation]
    z = h @ params["syn_1_w"][layer] + (strength @ h) @ params["syn_2_w"][layer]
    if cfg.syntax_bias:
        z = z + params["syn_b"][layer]
    return act(z)


def transformer_layer(h_mix, layer: int, params: dict, cfg: ModelConfig) -> np.ndarray:
    """One post-norm transformer block (convenience, forward only)."""
    single = h_mix.ndim == 2
    x = h_mix[None] if single else h_mix
    q = _split_heads(x @ params["attn_q_w"][layer] + params["attn_q_b"][layer], cfg.n_heads)
    k = _split_heads(x @ params["attn_k_w"][layer], cfg.n_heads)
    v = _split_heads(x @ params["attn_v_w"][layer] + params["attn_v_b"][layer], cfg.n_heads)
    probs = _softmax(q @ k.transpose(0, 1, 3, 2) / np.sqrt(cfg.head_dim))
    attn_out = _merge_heads(probs @ v) @ params["attn_o_w"][layer] + params["attn_o_b"][layer]
    g, _, _ = _layer_norm(x + attn_out, params["ln_1_g"][layer], params["ln_1_b"][layer], cfg.ln_eps)
    act, _ = ACTIVATIONS[cfg.activation]
    ffn_out = act(g @ params["ffn_1_w"][layer] + params["ffn_1_b"][layer]) @ params["ffn_2_w"][layer]
    ffn_out = ffn_out + params["ffn_2_b"][layer]
    out, _, _ = _layer_norm(g + ffn_out, params["ln_2_g"][layer], params["ln_2_b"][layer], cfg.ln_eps)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def backward(params: dict, cfg: ModelConfig, trace: ForwardTrace,
             d_h_final: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of every backbone parameter.

    `d_h_final` is the loss gradient w.r.t. the final hidden states, shaped
    like trace.h_final (a 2-D array is accepted for unbatched traces).
    """
    if trace.h_final is None:
        raise ValueError("trace has no final hidden state")
    dh = np.asarray(d_h_final, dtype=cfg.np_dtype)
    if trace.squeezed and dh.ndim == 2:
        dh = dh[None]
    if dh.shape != trace.h_final.shape:
        raise ValueError(f"output grad shape {dh.shape} != trace shape {trace.h_final.shape}")

    _, dact = ACTIVATIONS[cfg.activation]
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    d = cfg.d_model
    scale = 1.0 / np.sqrt(cfg.head_dim)
    strength = trace.strength

    for l in reversed(range(cfg.n_layers)):
        c = trace.layers[l]

        # second residual block: h_out = LN(g + ffn_out)
        d_resid2, dg_ln, db_ln = _layer_norm_backward(dh, c["ln2_xhat"], c["ln2_inv"],
                                                      params["ln_2_g"][l])
        grads["ln_2_g"][l] += dg_ln
        grads["ln_2_b"][l] += db_ln
        d_ffn_out = d_resid2 if c["ffn_omask"] is None else d_resid2 * c["ffn_omask"]
        ffn_h2d = c["ffn_h"].reshape(-1, cfg.d_ff)
        grads["ffn_2_w"][l] += ffn_h2d.T @ d_ffn_out.reshape(-1, d)
        grads["ffn_2_b"][l] += d_ffn_out.sum(axis=(0, 1))
        d_ffn_z = (d_ffn_out @ params["ffn_2_w"][l].T) * dact(c["ffn_z"])
        g2d = c["g"].reshape(-1, d)
        grads["ffn_1_w"][l] += g2d.T @ d_ffn_z.reshape(-1, cfg.d_ff)
        grads["ffn_1_b"][l] += d_ffn_z.sum(axis=(0, 1))
        dg = d_resid2 + d_ffn_z @ params["ffn_1_w"][l].T

        # first residual block: g = LN(h_mix + attn_out)
        d_resid1, dg_ln, db_ln = _layer_norm_backward(dg, c["ln1_xhat"], c["ln1_inv"],
                                                      params["ln_1_g"][l])
        grads["ln_1_g"][l] += dg_ln
        grads["ln_1_b"][l] += db_ln
        d_attn_out = d_resid1 if c["attn_omask"] is None else d_resid1 * c["attn_omask"]
        ctx2d = c["ctx"].reshape(-1, d)
        grads["attn_o_w"][l] += ctx2d.T @ d_attn_out.reshape(-1, d)
        grads["attn_o_b"][l] += d_attn_out.sum(axis=(0, 1))
        d_ctx = _split_heads(d_attn_out @ params["attn_o_w"][l].T, cfg.n_heads)

        probs_d, probs = c["attn_probs_dropped"], c["attn_probs"]
        d_probs = d_ctx @ c["v"].transpose(0, 1, 3, 2)
        dv = probs_d.transpose(0, 1, 3, 2) @ d_ctx
        if c["attn_pmask"] is not None:
            d_probs = d_probs * c["attn_pmask"]
        d_scores = probs * (d_probs - (d_probs * probs).sum(axis=-1, keepdims=True))
        dq = (d_scores @ c["k"]) * scale
        dk = (d_scores.transpose(0, 1, 3, 2) @ c["q"]) * scale

        h_mix2d = c["h_mix"].reshape(-1, d)
        d_h_mix = d_resid1
        for name, dx in (("attn_q", dq), ("attn_k", dk), ("attn_v", dv)):
            dx2d = _merge_heads(dx).reshape(-1, d)
            grads[f"{name}_w"][l] += h_mix2d.T @ dx2d
            if name != "attn_k":
                grads[f"{name}_b"][l] += dx2d.sum(axis=0)
            d_h_mix = d_h_mix + dx2d.reshape(c["h_mix"].shape) @ params[f"{name}_w"][l].T

        # mixing and syntax pathway
        if cfg.syntax_enabled:
            h_in, h_hat = c["h_in"], c["h_hat"]
            if cfg.alpha_enabled:
                a = params["alpha"][l] if cfg.per_layer_alpha else params["alpha"]
                d_alpha = float((d_h_mix * (h_hat - h_in)).sum())
                if cfg.per_layer_alpha:
                    grads["alpha"][l] += d_alpha
                else:
                    grads["alpha"] += d_alpha
                dh_prev = (1.0 - a) * d_h_mix
                d_h_hat = a * d_h_mix
            else:
                dh_prev = d_h_mix
                d_h_hat = d_h_mix
            dz = d_h_hat * dact(c["syn_z"])
            dz2d = dz.reshape(-1, d)
            grads["syn_1_w"][l] += c["h_in"].reshape(-1, d).T @ dz2d
            grads["syn_2_w"][l] += c["syn_sh"].reshape(-1, d).T @ dz2d
            if cfg.syntax_bias:
                grads["syn_b"][l] += dz.sum(axis=(0, 1))
            d_sh = dz @ params["syn_2_w"][l].T
            dh_prev = dh_prev + dz @ params["syn_1_w"][l].T
            dh_prev = dh_prev + strength.transpose(0, 2, 1) @ d_sh
            dh = dh_prev
        else:
            dh = d_h_mix

    # embeddings
    np.add.at(grads["tok_emb"], trace.ids.reshape(-1), dh.reshape(-1, d))
    grads["pos_emb"][: dh.shape[1]] += dh.sum(axis=0)
    return grads


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def finite_diff_check(params: dict, loss_fn, epsilon: float = 1e-5,
                      n_samples: int = 200,
                      rng: np.random.Generator | None = None,
                      param_names: list[str] | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn(params) must return (loss, grads-dict). Coordinates are sampled
    evenly across the named parameters (all of them by default), so every
    family is covered. Relative error is |a - b| / max(|a|, |b|, 1e-8).
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in [1e-7, 1e-3], got {epsilon}")
    rng = rng or np.random.default_rng(0)
    names = param_names if param_names is not None else sorted(params)
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise NumericsError(f"non-finite loss {loss}")

    per = max(1, n_samples // len(names))
    worst = 0.0
    for name in names:
        flat = params[name].reshape(-1)
        size = flat.size
        picks = rng.choice(size, size=min(per, size), replace=False)
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + epsilon
            lp, _ = loss_fn(params)
            flat[idx] = orig - epsilon
            lm, _ = loss_fn(params)
            flat[idx] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericsError("non-finite loss during finite differencing")
            fd = (lp - lm) / (2.0 * epsilon)
            an = grads[name].reshape(-1)[idx]
            rel = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
            worst = max(worst, rel)
    return worst
