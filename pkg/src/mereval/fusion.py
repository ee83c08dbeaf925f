"""Double-precision reference kernels for audio-video pre-fusion.

Two fusion variants are provided: a Q-Former style block in which K learned
query tokens cross-attend to the time-concatenated audio and video features,
and a pooled variant that mean-pools each modality and mixes the two pooled
vectors with a learned 2 x 2d score matrix. Every kernel has a hand-written
backward pass so it can be checked against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.special import erf

from .errors import DimMismatch, IndexOutOfRange, NonFinite, OddDim

Array = np.ndarray

LN_EPS = 1e-5


def _finite(name: str, *arrays: Array) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite(f"non-finite values in {name}")


def _matrix(x: Any, name: str) -> Array:
    data = x.data if isinstance(x, FeatureSequence) else x
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimMismatch(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """A t x d feature matrix tagged with its modality."""

    data: Array
    modality: str = "fused"

    def __post_init__(self) -> None:
        if self.modality not in ("audio", "video", "fused"):
            raise ValueError(f"unknown modality {self.modality!r}")
        arr = _matrix(self.data, "feature sequence")
        _finite("feature sequence", arr)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass
class ModalInputs:
    """Symbolic holders for raw inputs and projected tokens; no kernel consumes them."""

    video: Any = None
    audio: Any = None
    text: str | None = None
    instruction: str | None = None
    prompt: str | None = None
    video_tokens: Array | None = None
    audio_tokens: Array | None = None


def concat_temporal(z_a, z_v) -> FeatureSequence:
    """Stack audio rows then video rows along time."""
    a, v = _matrix(z_a, "Z_a"), _matrix(z_v, "Z_v")
    if a.shape[1] != v.shape[1]:
        raise DimMismatch(f"feature dims differ: {a.shape[1]} vs {v.shape[1]}")
    return FeatureSequence(np.concatenate([a, v], axis=0), "fused")


def positional_encoding(t: int, d: int) -> Array:
    if d % 2:
        raise OddDim(f"sinusoidal encoding needs an even dimension, got {d}")
    if t < 1 or d < 1:
        raise DimMismatch(f"need t >= 1 and d >= 1, got t={t}, d={d}")
    pos = np.arange(t, dtype=np.float64)[:, None]
    rate = 10000.0 ** (np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.empty((t, d))
    pe[:, 0::2] = np.sin(pos / rate)
    pe[:, 1::2] = np.cos(pos / rate)
    return pe


def mean_pool(z) -> Array:
    return _matrix(z, "Z").mean(axis=0)


# -- primitive layers with backward passes ------------------------------------


def softmax(x: Array, axis: int = -1) -> Array:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _softmax_back(p: Array, dp: Array) -> Array:
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def layer_norm(x: Array, gain: Array, bias: Array, eps: float = LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(((x - mu) ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = (x - mu) * inv
    return gain * xhat + bias, (xhat, inv, gain)


def _layer_norm_back(dy: Array, cache) -> tuple[Array, Array, Array]:
    xhat, inv, gain = cache
    n = xhat.shape[-1]
    dxhat = dy * gain
    dx = inv / n * (n * dxhat - dxhat.sum(-1, keepdims=True) - xhat * (dxhat * xhat).sum(-1, keepdims=True))
    return dx, (dy * xhat).sum(0), dy.sum(0)


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Array) -> Array:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_grad(x: Array) -> Array:
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


# -- Q-Former block --------------------------------------------------------------


@dataclass(eq=False)
class QFormerParams:
    """One cross-attention + feed-forward block.

    Projections act on row vectors (``x @ w``). The feed-forward width is
    ``w1.shape[1]`` (4d by convention).
    """

    wq: Array
    wk: Array
    wv: Array
    wo: Array
    w1: Array
    w2: Array
    ln1_gain: Array
    ln1_bias: Array
    ln2_gain: Array
    ln2_bias: Array
    heads: int = 1

    def __post_init__(self) -> None:
        for f in self.array_fields():
            setattr(self, f, np.asarray(getattr(self, f), dtype=np.float64))
        d = self.wq.shape[0]
        if self.heads < 1 or d % self.heads:
            raise DimMismatch(f"head count {self.heads} must divide d={d}")
        for name in ("wq", "wk", "wv", "wo"):
            if getattr(self, name).shape != (d, d):
                raise DimMismatch(f"{name} must be {d}x{d}, got {getattr(self, name).shape}")
        hidden = self.w1.shape[1] if self.w1.ndim == 2 else -1
        if self.w1.shape != (d, hidden) or self.w2.shape != (hidden, d):
            raise DimMismatch(f"feed-forward shapes {self.w1.shape}, {self.w2.shape} do not fit d={d}")
        for name in ("ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias"):
            if getattr(self, name).shape != (d,):
                raise DimMismatch(f"{name} must have shape ({d},)")
        _finite("Q-Former parameters", *(getattr(self, f) for f in self.array_fields()))

    @property
    def d(self) -> int:
        return self.wq.shape[0]

    @staticmethod
    def array_fields() -> list[str]:
        return [f.name for f in fields(QFormerParams) if f.name != "heads"]

    def as_dict(self) -> dict[str, Array]:
        return {f: getattr(self, f) for f in self.array_fields()}

    @classmethod
    def from_dict(cls, arrays: Mapping[str, Array], heads: int) -> "QFormerParams":
        return cls(**{f: arrays[f] for f in cls.array_fields()}, heads=heads)

    @classmethod
    def zeros(cls, d: int, heads: int = 1, ff_mult: int = 4) -> "QFormerParams":
        z = np.zeros
        return cls(z((d, d)), z((d, d)), z((d, d)), z((d, d)), z((d, ff_mult * d)), z((ff_mult * d, d)),
                   np.ones(d), z(d), np.ones(d), z(d), heads)

    @classmethod
    def random(cls, d: int, heads: int, rng: np.random.Generator, ff_mult: int = 4, low=-1.0, high=1.0):
        u = lambda *shape: rng.uniform(low, high, size=shape)  # noqa: E731
        return cls(u(d, d), u(d, d), u(d, d), u(d, d), u(d, ff_mult * d), u(ff_mult * d, d),
                   u(d), u(d), u(d), u(d), heads)


def _split(x: Array, h: int) -> Array:
    n, d = x.shape
    return x.reshape(n, h, d // h).transpose(1, 0, 2)


def _merge(x: Array) -> Array:
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def _block_forward(q: Array, x: Array, p: QFormerParams):
    # overflow surfaces as NonFinite below rather than as numpy warnings
    with np.errstate(all="ignore"):
        return _block_forward_raw(q, x, p)


def _block_forward_raw(q: Array, x: Array, p: QFormerParams):
    h = p.heads
    dh = p.d // h
    scale = 1.0 / np.sqrt(dh)
    Q, Kx, V = q @ p.wq, x @ p.wk, x @ p.wv
    Qh, Kh, Vh = _split(Q, h), _split(Kx, h), _split(V, h)
    attn = softmax(Qh @ Kh.transpose(0, 2, 1) * scale)
    O = _merge(attn @ Vh)
    h1, ln1 = layer_norm(q + O @ p.wo, p.ln1_gain, p.ln1_bias)
    u = h1 @ p.w1
    g = gelu(u)
    out, ln2 = layer_norm(h1 + g @ p.w2, p.ln2_gain, p.ln2_bias)
    _finite("Q-Former block", attn, h1, out)
    cache = (q, x, Qh, Kh, Vh, attn, O, h1, ln1, u, g, ln2, scale)
    return out, attn, cache


def _block_backward(dout: Array, p: QFormerParams, cache):
    q, x, Qh, Kh, Vh, attn, O, h1, ln1, u, g, ln2, scale = cache
    grads: dict[str, Array] = {}
    dr2, grads["ln2_gain"], grads["ln2_bias"] = _layer_norm_back(dout, ln2)
    grads["w2"] = g.T @ dr2
    du = (dr2 @ p.w2.T) * _gelu_grad(u)
    grads["w1"] = h1.T @ du
    dh1 = dr2 + du @ p.w1.T
    dr1, grads["ln1_gain"], grads["ln1_bias"] = _layer_norm_back(dh1, ln1)
    grads["wo"] = O.T @ dr1
    dOh = _split(dr1 @ p.wo.T, p.heads)
    dattn = dOh @ Vh.transpose(0, 2, 1)
    dVh = attn.transpose(0, 2, 1) @ dOh
    ds = _softmax_back(attn, dattn) * scale
    dQ = _merge(ds @ Kh)
    dK = _merge(ds.transpose(0, 2, 1) @ Qh)
    dV = _merge(dVh)
    grads["wq"] = q.T @ dQ
    grads["wk"] = x.T @ dK
    grads["wv"] = x.T @ dV
    dq = dr1 + dQ @ p.wq.T
    dx = dK @ p.wk.T + dV @ p.wv.T
    return dq, dx, grads


def _qformer_inputs(q, z_av, blocks) -> tuple[Array, Array, list[QFormerParams]]:
    blocks = [blocks] if isinstance(blocks, QFormerParams) else list(blocks)
    if not blocks:
        raise ValueError("need at least one Q-Former block")
    qm, zm = _matrix(q, "query tokens"), _matrix(z_av, "Z_av")
    _finite("inputs", qm, zm)
    d = blocks[0].d
    if qm.shape[1] != d or zm.shape[1] != d or any(b.d != d for b in blocks):
        raise DimMismatch(f"query dim {qm.shape[1]}, feature dim {zm.shape[1]}, block dim {d} must agree")
    return qm, zm, blocks


def qformer_fuse(q, z_av, params: QFormerParams | Sequence[QFormerParams], *, return_attention: bool = False):
    """Distill a (t x d) sequence into K query outputs of shape (K x d).

    Sinusoidal positions are added to ``z_av`` once; every block cross-attends
    from the running queries to that same memory.
    """
    qm, zm, blocks = _qformer_inputs(q, z_av, params)
    x = zm + positional_encoding(*zm.shape)
    out = qm
    attentions = []
    for p in blocks:
        out, attn, _ = _block_forward(out, x, p)
        attentions.append(attn)
    return (out, attentions) if return_attention else out


def qformer_grad(q, z_av, params, dout: Array) -> tuple[Array, Array, list[dict[str, Array]]]:
    """Backpropagate ``dout`` through :func:`qformer_fuse`.

    Returns gradients for the queries, for ``z_av`` and one dict per block.
    """
    qm, zm, blocks = _qformer_inputs(q, z_av, params)
    x = zm + positional_encoding(*zm.shape)
    caches = []
    out = qm
    for p in blocks:
        out, _, cache = _block_forward(out, x, p)
        caches.append(cache)
    dq = np.asarray(dout, dtype=np.float64)
    dx = np.zeros_like(x)
    block_grads = []
    for p, cache in zip(reversed(blocks), reversed(caches)):
        dq, dx_block, grads = _block_backward(dq, p, cache)
        dx += dx_block
        block_grads.append(grads)
    return dq, dx, block_grads[::-1]


# -- pooled attention fusion ---------------------------------------------------------


@dataclass(eq=False)
class AttentionFusionParams:
    W: Array
    mode: str = "exact"

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.mode not in ("exact", "softmax"):
            raise ValueError(f"mode must be 'exact' or 'softmax', got {self.mode!r}")
        if self.W.ndim != 2 or self.W.shape[0] != 2 or self.W.shape[1] % 2:
            raise DimMismatch(f"W must be 2 x 2d, got {self.W.shape}")

    @property
    def d(self) -> int:
        return self.W.shape[1] // 2


def _attention_inputs(za, zv, p: AttentionFusionParams) -> Array:
    a = np.asarray(za, dtype=np.float64).reshape(-1)
    v = np.asarray(zv, dtype=np.float64).reshape(-1)
    if a.shape != v.shape or a.size != p.d:
        raise DimMismatch(f"pooled vectors {a.shape}, {v.shape} do not fit W {p.W.shape}")
    _finite("inputs", a, v, p.W)
    return np.stack([a, v])


def attention_weights(za, zv, p: AttentionFusionParams) -> Array:
    """Per-modality scores W @ flatten([za; zv]); softmax-normalized in softmax mode."""
    z = _attention_inputs(za, zv, p)
    s = p.W @ z.reshape(-1)
    return softmax(s) if p.mode == "softmax" else s


def attention_fuse(za, zv, p: AttentionFusionParams) -> Array:
    z = _attention_inputs(za, zv, p)
    return z.T @ attention_weights(za, zv, p)


def attention_fuse_grad(za, zv, p: AttentionFusionParams, dout: Array) -> dict[str, Array]:
    z = _attention_inputs(za, zv, p)
    flat = z.reshape(-1)
    s = p.W @ flat
    weights = softmax(s) if p.mode == "softmax" else s
    dout = np.asarray(dout, dtype=np.float64)
    dweights = z @ dout
    ds = _softmax_back(weights, dweights) if p.mode == "softmax" else dweights
    dz = np.outer(weights, dout) + (p.W.T @ ds).reshape(z.shape)
    return {"za": dz[0], "zv": dz[1], "W": np.outer(ds, flat)}


# -- autoregressive objective ------------------------------------------------------------


def _nll_inputs(logits, ids, vocab_size: int | None):
    lg = _matrix(logits, "logits")
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    V = lg.shape[1] if vocab_size is None else vocab_size
    if lg.shape[1] != V:
        raise DimMismatch(f"logits have {lg.shape[1]} columns but vocab size is {V}")
    if ids.size < 1 or ids.size != lg.shape[0]:
        raise DimMismatch(f"{ids.size} target tokens for {lg.shape[0]} logit rows")
    if np.any(ids < 0) or np.any(ids >= V):
        raise IndexOutOfRange(f"token ids must lie in [0, {V})")
    _finite("logits", lg)
    return lg, ids


def log_softmax(x: Array) -> Array:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def token_nll(logits, ids, vocab_size: int | None = None) -> Array:
    """Per-position negative log-probabilities of the target tokens (natural log)."""
    lg, ids = _nll_inputs(logits, ids, vocab_size)
    return -log_softmax(lg)[np.arange(ids.size), ids]


def autoregressive_nll(logits, ids, vocab_size: int | None = None) -> float:
    return float(np.sum(token_nll(logits, ids, vocab_size)))


def autoregressive_nll_grad(logits, ids, vocab_size: int | None = None) -> Array:
    lg, ids = _nll_inputs(logits, ids, vocab_size)
    grad = softmax(lg)
    grad[np.arange(ids.size), ids] -= 1.0
    return grad


# -- finite-difference verification ---------------------------------------------------------


@dataclass
class GradCheckCase:
    """A scalar loss over named parameter arrays together with its analytic gradient."""

    kernel: str
    params: dict[str, Array]
    loss: Callable[[dict[str, Array]], float]
    grad: Callable[[dict[str, Array]], dict[str, Array]]
    meta: dict[str, Any] = field(default_factory=dict)


def relative_error(analytic: Array, numeric: Array, floor: float = 1e-6) -> Array:
    """|a - n| / max(|a|, |n|, floor), elementwise.

    The floor keeps entries whose true gradient is essentially zero from
    turning round-off into a large ratio.
    """
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(loss: Callable[[dict[str, Array]], float], params: dict[str, Array], eps: float):
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        flat = value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = loss(params)
            flat[i] = orig - eps
            minus = loss(params)
            flat[i] = orig
            gflat[i] = (plus - minus) / (2.0 * eps)
        grads[name] = g
    return grads


@dataclass
class GradCheckResult:
    kernel: str
    max_rel_error: float
    per_param: dict[str, float]
    meta: dict[str, Any] = field(default_factory=dict)


def finite_diff_check(case: GradCheckCase, eps: float = 1e-5) -> GradCheckResult:
    """Compare the analytic gradient with central differences; report the worst relative error."""
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    params = {k: np.array(v, dtype=np.float64, copy=True) for k, v in case.params.items()}
    analytic = case.grad(params)
    numeric = numeric_gradient(case.loss, params, eps)
    per_param = {}
    for name in params:
        a, n = analytic[name], numeric[name]
        _finite(f"gradient of {name}", a, n)
        per_param[name] = float(relative_error(a, n).max()) if a.size else 0.0
    return GradCheckResult(case.kernel, max(per_param.values()), per_param, dict(case.meta))


def attention_case(d: int = 3, seed: int = 0, mode: str = "exact", weights: Array | None = None) -> GradCheckCase:
    rng = np.random.default_rng(seed)
    params = {"za": rng.uniform(-1, 1, d), "zv": rng.uniform(-1, 1, d), "W": rng.uniform(-1, 1, (2, 2 * d))}
    w = np.ones(d) if weights is None else np.asarray(weights, dtype=np.float64)

    def loss(ps):
        return float(w @ attention_fuse(ps["za"], ps["zv"], AttentionFusionParams(ps["W"], mode)))

    def grad(ps):
        return attention_fuse_grad(ps["za"], ps["zv"], AttentionFusionParams(ps["W"], mode), w)

    return GradCheckCase("attention_fuse", params, loss, grad, {"d": d, "seed": seed, "mode": mode})


def qformer_case(
    K: int = 2, t: int = 5, d: int = 4, heads: int = 2, blocks: int = 1, seed: int = 0,
) -> GradCheckCase:
    rng = np.random.default_rng(seed)
    params: dict[str, Array] = {"q": rng.uniform(-1, 1, (K, d)), "z_av": rng.uniform(-1, 1, (t, d))}
    for b in range(blocks):
        for name, value in QFormerParams.random(d, heads, rng).as_dict().items():
            params[f"b{b}.{name}"] = value

    def unpack(ps):
        return [
            QFormerParams.from_dict({f: ps[f"b{b}.{f}"] for f in QFormerParams.array_fields()}, heads)
            for b in range(blocks)
        ]

    def loss(ps):
        return float(qformer_fuse(ps["q"], ps["z_av"], unpack(ps)).sum())

    def grad(ps):
        dq, dz, block_grads = qformer_grad(ps["q"], ps["z_av"], unpack(ps), np.ones((K, d)))
        out = {"q": dq, "z_av": dz}
        for b, g in enumerate(block_grads):
            out.update({f"b{b}.{k}": v for k, v in g.items()})
        return out

    meta = {"K": K, "t": t, "d": d, "heads": heads, "blocks": blocks, "seed": seed}
    return GradCheckCase("qformer_fuse", params, loss, grad, meta)


def nll_case(length: int = 4, vocab: int = 6, seed: int = 0) -> GradCheckCase:
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, vocab, size=length)
    params = {"logits": rng.uniform(-1, 1, (length, vocab))}
    return GradCheckCase(
        "autoregressive_nll",
        params,
        lambda ps: autoregressive_nll(ps["logits"], ids),
        lambda ps: {"logits": autoregressive_nll_grad(ps["logits"], ids)},
        {"L_r": length, "V": vocab, "seed": seed},
    )


KERNELS = {"attention_fuse": attention_case, "qformer_fuse": qformer_case, "autoregressive_nll": nll_case}


# -- plain-text matrix fixtures -------------------------------------------------------------


def load_matrix(path) -> Array:
    """Read a whitespace-delimited numeric matrix; ``#`` starts a comment."""
    return np.atleast_2d(np.loadtxt(path, dtype=np.float64, comments="#", ndmin=2))


def save_matrix(path, m: Array) -> None:
    np.savetxt(path, np.atleast_2d(m), fmt="%.17g")
