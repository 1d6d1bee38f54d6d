"""LSTM + 1D-CNN patch classifier with hand-written gradients.

Data layout is (batch, time, feature) throughout. A patch of ``w`` steps
and 5 features goes through

    LSTM(h) -> concat[x, h_t] -> conv1(16, k3, s2) + ReLU -> maxpool(2, 2)
            -> conv2(32, k3, s2) + ReLU -> maxpool(2, 2)
            -> flatten (channel-major) -> dropout -> dense(2) -> softmax

Class index 0 is HC, 1 is PD. LSTM gate order is i, f, g, o.
"""
import json
import math
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kernels
from .errors import FormatError, ParameterError, ShapeError, UsageError

REFERENCE_PARAMS_K = 83.89
REFERENCE_FLOPS_K = 590.21


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 5
    window: int = 128
    lstm_hidden: int = 128
    conv1_filters: int = 16
    conv2_filters: int = 32
    kernel: int = 3
    conv_stride: int = 2
    pool_kernel: int = 2
    pool_stride: int = 2
    dropout_p: float = 0.5
    num_classes: int = 2
    concat: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("dropout_p", "concat"):
                continue
            if v < 1:
                raise ParameterError(f"{f.name} must be positive, got {v}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ParameterError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.pooled2_length < 1:
            raise ParameterError(
                f"window {self.window} is too short for two conv/pool stages "
                f"(lengths {self.layer_lengths()})"
            )

    @property
    def conv_in(self):
        return self.input_dim + self.lstm_hidden if self.concat else self.lstm_hidden

    def layer_lengths(self):
        """Sequence length after each stage: input, conv1, pool1, conv2, pool2."""

        def conv(n):
            return (n - self.kernel) // self.conv_stride + 1 if n >= self.kernel else 0

        def pool(n):
            return (n - self.pool_kernel) // self.pool_stride + 1 if n >= self.pool_kernel else 0

        a = self.window
        b = conv(a)
        c = pool(b)
        d = conv(c)
        e = pool(d)
        return a, b, c, d, e

    @property
    def pooled2_length(self):
        return self.layer_lengths()[4]

    @property
    def flat_dim(self):
        return self.conv2_filters * self.pooled2_length

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def param_shapes(cfg):
    h, d = cfg.lstm_hidden, cfg.input_dim
    return {
        "lstm.W": (4 * h, d),
        "lstm.U": (4 * h, h),
        "lstm.b": (4 * h,),
        "conv1.kernel": (cfg.conv1_filters, cfg.conv_in, cfg.kernel),
        "conv1.bias": (cfg.conv1_filters,),
        "conv2.kernel": (cfg.conv2_filters, cfg.conv1_filters, cfg.kernel),
        "conv2.bias": (cfg.conv2_filters,),
        "dense.W": (cfg.num_classes, cfg.flat_dim),
        "dense.b": (cfg.num_classes,),
    }


class ModelParams:
    """Named float64 tensors in a fixed declaration order.

    Also used for gradients and optimizer moments, which share the layout.
    """

    def __init__(self, tensors):
        self.tensors = dict(tensors)

    @classmethod
    def zeros(cls, cfg):
        return cls({k: np.zeros(s) for k, s in param_shapes(cfg).items()})

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        self.tensors[name] = value

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self):
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self):
        return ModelParams({k: np.zeros_like(v) for k, v in self.tensors.items()})

    @property
    def size(self):
        return sum(v.size for v in self.tensors.values())

    def flat(self):
        return np.concatenate([v.ravel() for v in self.tensors.values()])

    def equals(self, other):
        return list(self.tensors) == list(other.tensors) and all(
            np.array_equal(v, other.tensors[k]) for k, v in self.tensors.items()
        )


def init_params(cfg, rng):
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, LSTM forget bias 1."""
    h = cfg.lstm_hidden
    fan_in = {
        "lstm.W": cfg.input_dim,
        "lstm.U": h,
        "conv1.kernel": cfg.conv_in * cfg.kernel,
        "conv2.kernel": cfg.conv1_filters * cfg.kernel,
        "dense.W": cfg.flat_dim,
    }
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        if name in fan_in:
            bound = 1.0 / math.sqrt(fan_in[name])
            tensors[name] = rng.uniform(-bound, bound, int(np.prod(shape))).reshape(shape)
        else:
            tensors[name] = np.zeros(shape)
    tensors["lstm.b"][h : 2 * h] = 1.0
    return ModelParams(tensors)


# ---------------------------------------------------------------- layers


def _batched(x, ndim=3):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ShapeError(f"expected a {ndim - 1}-D block or a batch of them, got shape {x.shape}")
    return x, False


def lstm_forward(x, W, U, b):
    """Hidden state at every step for a (T, d) block or a (B, T, d) batch.

    Returns ``(H, cache)``; ``H`` has the batch-ness of ``x``.
    """
    xb, single = _batched(x)
    if xb.shape[2] != W.shape[1]:
        raise ShapeError(f"LSTM input width {xb.shape[2]} does not match weights ({W.shape[1]})")
    xw = np.ascontiguousarray(xb @ W.T + b)
    H, C, A = kernels.lstm_forward(xw, U)
    cache = {"x": xb, "H": H, "C": C, "A": A}
    return (H[0] if single else H), cache


def lstm_backward(dH, cache, U):
    """Gradients of W, U, b given dL/dH for every step."""
    x, H, C, A = cache["x"], cache["H"], cache["C"], cache["A"]
    dZ = kernels.lstm_backward(np.ascontiguousarray(dH), A, C, U)
    B, T, G = dZ.shape
    h = G // 4
    dz2 = dZ.reshape(B * T, G)
    h_prev = np.zeros_like(H)
    h_prev[:, 1:] = H[:, :-1]
    dW = dz2.T @ x.reshape(B * T, -1)
    dU = dz2.T @ h_prev.reshape(B * T, h)
    db = dz2.sum(axis=0)
    return dW, dU, db


def concat_skip(x, hseq):
    """Input features first, then LSTM features, along the last axis."""
    x = np.asarray(x)
    hseq = np.asarray(hseq)
    if x.shape[:-1] != hseq.shape[:-1]:
        raise ShapeError(f"concat: input has shape {x.shape}, LSTM output has shape {hseq.shape}")
    return np.concatenate([x, hseq], axis=-1)


def conv_length(n, k, s):
    return (n - k) // s + 1


def conv1d_forward(x, kernel, bias, stride, relu=True):
    """Valid cross-correlation over time, optionally followed by ReLU.

    ``x`` is (L, C) or (B, L, C); ``kernel`` is (out, C, k).
    """
    xb, single = _batched(x)
    O, Cin, k = kernel.shape
    L = xb.shape[1]
    if xb.shape[2] != Cin:
        raise ShapeError(f"conv input has {xb.shape[2]} channels, kernel expects {Cin}")
    if L < k:
        raise ShapeError(f"conv input length {L} is shorter than kernel size {k}")
    Lo = conv_length(L, k, stride)
    cols = np.lib.stride_tricks.sliding_window_view(xb, k, axis=1)[:, ::stride][:, :Lo]
    pre = np.tensordot(cols, kernel, axes=([2, 3], [1, 2])) + bias
    out = np.maximum(pre, 0.0) if relu else pre
    cache = {"cols": cols, "pre": pre, "L": L, "stride": stride, "relu": relu}
    return (out[0] if single else out), cache


def conv1d_backward(dout, cache, kernel):
    """Returns (dx, dkernel, dbias) for a batched forward."""
    if cache["relu"]:
        dout = dout * (cache["pre"] > 0.0)
    cols = cache["cols"]
    B, Lo = dout.shape[:2]
    O, Cin, k = kernel.shape
    s = cache["stride"]
    dkernel = np.tensordot(dout, cols, axes=([0, 1], [0, 1]))
    dbias = dout.sum(axis=(0, 1))
    dcols = np.tensordot(dout, kernel, axes=([2], [0]))  # (B, Lo, Cin, k)
    dx = np.zeros((B, cache["L"], Cin))
    span = s * (Lo - 1) + 1
    for j in range(k):
        dx[:, j : j + span : s] += dcols[..., j]
    return dx, dkernel, dbias


def maxpool1d_forward(x, k=2, s=2):
    """Per-channel window max over time; ties go to the earliest position."""
    xb, single = _batched(x)
    L = xb.shape[1]
    if L < k:
        raise ShapeError(f"pool input length {L} is shorter than pool size {k}")
    Lo = conv_length(L, k, s)
    win = np.lib.stride_tricks.sliding_window_view(xb, k, axis=1)[:, ::s][:, :Lo]
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    cache = {"arg": arg, "L": L, "k": k, "s": s}
    return (out[0] if single else out), cache


def maxpool1d_backward(dout, cache):
    arg, k, s = cache["arg"], cache["k"], cache["s"]
    B, Lo, C = dout.shape
    dx = np.zeros((B, cache["L"], C))
    span = s * (Lo - 1) + 1
    for j in range(k):
        dx[:, j : j + span : s] += dout * (arg == j)
    return dx


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------- full model


@dataclass
class ForwardCache:
    x: np.ndarray
    lstm: dict
    conv1: dict
    pool1: dict
    conv2: dict
    pool2: dict
    flat: np.ndarray
    mask: np.ndarray | None
    probs: np.ndarray
    cfg: ModelConfig


def model_forward(x, params, cfg, training=False, rng=None):
    """Class probabilities (HC, PD) for one patch (w, 5) or a batch (B, w, 5).

    Returns ``(probs, cache)``; ``cache`` is only built when ``training``.
    Training applies inverted dropout to the flattened features, drawing the
    mask from ``rng``.
    """
    xb, single = _batched(x)
    if xb.shape[1:] != (cfg.window, cfg.input_dim):
        raise ShapeError(f"patch shape {xb.shape[1:]} does not match config ({cfg.window}, {cfg.input_dim})")
    B = xb.shape[0]
    H, lc = lstm_forward(xb, params["lstm.W"], params["lstm.U"], params["lstm.b"])
    z0 = concat_skip(xb, H) if cfg.concat else H
    r1, c1 = conv1d_forward(z0, params["conv1.kernel"], params["conv1.bias"], cfg.conv_stride)
    p1, q1 = maxpool1d_forward(r1, cfg.pool_kernel, cfg.pool_stride)
    r2, c2 = conv1d_forward(p1, params["conv2.kernel"], params["conv2.bias"], cfg.conv_stride)
    p2, q2 = maxpool1d_forward(r2, cfg.pool_kernel, cfg.pool_stride)
    flat = p2.transpose(0, 2, 1).reshape(B, -1)
    mask = None
    if training and cfg.dropout_p > 0.0:
        if rng is None:
            raise UsageError("training-mode forward with dropout needs an rng")
        keep = rng.random(flat.size).reshape(flat.shape) >= cfg.dropout_p
        mask = keep / (1.0 - cfg.dropout_p)
        feats = flat * mask
    else:
        feats = flat
    probs = softmax(feats @ params["dense.W"].T + params["dense.b"])
    cache = None
    if training:
        cache = ForwardCache(xb, lc, c1, q1, c2, q2, feats, mask, probs, cfg)
    return (probs[0] if single else probs), cache


def model_backward(cache, target, params, sample_weight=None):
    """Gradients of the mean cross-entropy over the batch held in ``cache``.

    ``target`` is a class index or an array of them. ``sample_weight``
    turns the mean into a weighted mean.
    """
    if cache is None:
        raise UsageError("model_backward needs the cache of a training-mode forward")
    cfg = cache.cfg
    probs = cache.probs
    B = probs.shape[0]
    target = np.broadcast_to(np.asarray(target, dtype=np.int64), (B,))
    grads = {}
    dlogits = probs.copy()
    dlogits[np.arange(B), target] -= 1.0
    if sample_weight is None:
        dlogits /= B
    else:
        w = np.asarray(sample_weight, dtype=np.float64)
        dlogits *= (w / w.sum())[:, None]
    grads["dense.W"] = dlogits.T @ cache.flat
    grads["dense.b"] = dlogits.sum(axis=0)
    dfeat = dlogits @ params["dense.W"]
    if cache.mask is not None:
        dfeat = dfeat * cache.mask
    Lp2 = cfg.pooled2_length
    dp2 = dfeat.reshape(B, cfg.conv2_filters, Lp2).transpose(0, 2, 1)
    dr2 = maxpool1d_backward(dp2, cache.pool2)
    dp1, grads["conv2.kernel"], grads["conv2.bias"] = conv1d_backward(dr2, cache.conv2, params["conv2.kernel"])
    dr1 = maxpool1d_backward(dp1, cache.pool1)
    dz0, grads["conv1.kernel"], grads["conv1.bias"] = conv1d_backward(dr1, cache.conv1, params["conv1.kernel"])
    dH = dz0[:, :, cfg.input_dim :] if cfg.concat else dz0
    grads["lstm.W"], grads["lstm.U"], grads["lstm.b"] = lstm_backward(dH, cache.lstm, params["lstm.U"])
    return ModelParams({k: grads[k] for k in params})


def predict_proba(x, params, cfg, batch_size=256):
    """Inference-mode probabilities for a stack of patches, chunked."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return np.zeros((0, cfg.num_classes))
    out = [model_forward(x[i : i + batch_size], params, cfg)[0] for i in range(0, len(x), batch_size)]
    return np.concatenate(out)


# ---------------------------------------------------------------- accounting


def count_params(cfg):
    """Closed-form trainable-parameter counts per layer and in total."""
    h, d = cfg.lstm_hidden, cfg.input_dim
    layers = {
        "lstm": 4 * (h * (d + h) + h),
        "conv1": cfg.conv1_filters * cfg.conv_in * cfg.kernel + cfg.conv1_filters,
        "conv2": cfg.conv2_filters * cfg.conv1_filters * cfg.kernel + cfg.conv2_filters,
        "dense": cfg.num_classes * cfg.flat_dim + cfg.num_classes,
    }
    return {"layers": layers, "total": sum(layers.values()), "reference_total_k": REFERENCE_PARAMS_K}


FLOP_CONVENTION = (
    "1 MAC = 2 FLOPs; headline counts multiply-accumulates of the LSTM matmuls "
    "(all w steps), both convolutions and the dense layer; activations, pooling, "
    "bias adds and softmax excluded"
)


def count_flops(cfg):
    """Per-patch multiply-accumulate and FLOP counts under ``FLOP_CONVENTION``.

    Also reports the cost of a single LSTM step and the total obtained when the
    LSTM is charged for one step only, the convention per-layer profilers often
    apply to recurrent cells.
    """
    h, d = cfg.lstm_hidden, cfg.input_dim
    _, l1, _, l3, _ = cfg.layer_lengths()
    step = 4 * h * (d + h)
    macs = {
        "lstm": cfg.window * step,
        "conv1": l1 * cfg.conv1_filters * cfg.conv_in * cfg.kernel,
        "conv2": l3 * cfg.conv2_filters * cfg.conv1_filters * cfg.kernel,
        "dense": cfg.num_classes * cfg.flat_dim,
    }
    total = sum(macs.values())
    one_step_total = total - macs["lstm"] + step
    return {
        "convention": FLOP_CONVENTION,
        "macs": macs,
        "flops": {k: 2 * v for k, v in macs.items()},
        "total_macs": total,
        "total_flops": 2 * total,
        "lstm_step_macs": step,
        "lstm_step_flops": 2 * step,
        "single_step_total_macs": one_step_total,
        "single_step_total_flops": 2 * one_step_total,
        "reference_flops_k": REFERENCE_FLOPS_K,
    }


def complexity_report(cfg):
    """Human-readable parameter / FLOP table with the published reference totals."""
    p = count_params(cfg)
    f = count_flops(cfg)
    L = cfg.layer_lengths()
    lines = [
        "parameters",
        *(f"  {k:<6} = {v}" for k, v in p["layers"].items()),
        f"  total  = {p['total']} ({p['total'] / 1000:.2f}K)",
        f"  published reference: {REFERENCE_PARAMS_K:.2f}K  (delta {p['total'] / 1000 - REFERENCE_PARAMS_K:+.2f}K)",
        "flops",
        f"  convention: {f['convention']}",
        *(f"  {k:<6} macs = {v}  flops = {2 * v}" for k, v in f["macs"].items()),
        f"  total  flops = {f['total_flops']} ({f['total_flops'] / 1000:.2f}K)",
        f"  lstm per step: macs = {f['lstm_step_macs']}  flops = {f['lstm_step_flops']}",
        f"  lstm charged one step: macs = {f['single_step_total_macs']} ({f['single_step_total_macs'] / 1000:.2f}K)"
        f"  flops = {f['single_step_total_flops']} ({f['single_step_total_flops'] / 1000:.2f}K)",
        f"  published reference: {REFERENCE_FLOPS_K:.2f}K",
        "notes",
        f"  lengths {' -> '.join(map(str, L))}; flattened {cfg.flat_dim}; "
        f"pool {cfg.pool_kernel}/{cfg.pool_stride}; head {cfg.num_classes}-logit softmax",
        "  the reference totals depend on the pooling size and output-head width, which are",
        "  not given with the architecture; the deltas above come from those two choices and",
        "  from how the recurrent layer is charged, so no exact match is expected",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------- checkpoints

MAGIC = b"LCNN"
VERSION = 1


def save_checkpoint(params, cfg, path):
    """Little-endian: magic, u16 version, u32 config-json length + json,
    u16 tensor count, per tensor (u16 name len, name, u8 ndim, u32 dims),
    then raw float64 data in declaration order."""
    cfg_json = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<H", VERSION), struct.pack("<I", len(cfg_json)), cfg_json]
    parts.append(struct.pack("<H", len(params.tensors)))
    for name, arr in params.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    for arr in params.tensors.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != MAGIC:
        raise FormatError("bad magic; not a checkpoint file")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (n,) = r.unpack("<I")
    try:
        cfg = ModelConfig.from_dict(json.loads(r.take(n).decode("utf-8")))
    except (ValueError, TypeError, ParameterError) as exc:
        raise FormatError(f"bad config block: {exc}") from None
    expected = param_shapes(cfg)
    (count,) = r.unpack("<H")
    table = []
    for _ in range(count):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<B")
        table.append((name, r.unpack(f"<{ndim}I")))
    if [t[0] for t in table] != list(expected):
        raise FormatError(f"tensor table {[t[0] for t in table]} does not match {list(expected)}")
    for name, shape in table:
        if tuple(shape) != expected[name]:
            raise FormatError(f"{name}: stored shape {shape} != expected {expected[name]}")
    tensors = {}
    for name, shape in table:
        size = int(np.prod(shape))
        tensors[name] = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes after tensor data")
    return ModelParams(tensors), cfg


def checkpoint_scalar_count(path):
    params, _ = load_checkpoint(path)
    return params.size
