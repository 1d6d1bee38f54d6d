"""Shared oracles for the test-suite: nested-loop layers and finite differences."""
import math

import numpy as np

from handpd.errors import ParameterError
from handpd.model import ModelConfig, init_params, model_backward, model_forward
from handpd.numkit import Rng
from handpd.train import cross_entropy


def conv1d_loops(x, kernel, bias, stride, relu=True):
    L, C = x.shape
    O, _, k = kernel.shape
    Lo = (L - k) // stride + 1
    out = np.zeros((Lo, O))
    for t in range(Lo):
        for o in range(O):
            acc = bias[o]
            for c in range(C):
                for j in range(k):
                    acc += kernel[o, c, j] * x[t * stride + j, c]
            out[t, o] = max(acc, 0.0) if relu else acc
    return out


def maxpool_loops(x, k, s):
    L, C = x.shape
    Lo = (L - k) // s + 1
    out = np.zeros((Lo, C))
    for t in range(Lo):
        for c in range(C):
            out[t, c] = max(x[t * s + j, c] for j in range(k))
    return out


def lstm_loops(x, W, U, b):
    """Textbook LSTM, gate order i, f, g, o, zero initial state."""
    h = U.shape[1]
    hp, cp = np.zeros(h), np.zeros(h)
    out = []
    sig = lambda z: 1.0 / (1.0 + np.exp(-z))  # noqa: E731
    for xt in x:
        z = W @ xt + U @ hp + b
        i, f, g, o = sig(z[:h]), sig(z[h : 2 * h]), np.tanh(z[2 * h : 3 * h]), sig(z[3 * h :])
        cp = f * cp + i * g
        hp = o * np.tanh(cp)
        out.append(hp)
    return np.array(out)


def random_tiny_config(r):
    """Draw a valid tiny architecture (w in 4..16, h in 2..8, filters <= 4)."""
    while True:
        kw = dict(
            input_dim=5,
            window=int(r.integers(4, 17)),
            lstm_hidden=int(r.integers(2, 9)),
            conv1_filters=int(r.integers(1, 5)),
            conv2_filters=int(r.integers(1, 5)),
            kernel=int(r.integers(1, 4)),
            conv_stride=int(r.integers(1, 3)),
            pool_kernel=int(r.integers(1, 3)),
            pool_stride=int(r.integers(1, 3)),
            dropout_p=float(r.choice([0.0, 0.5])),
            concat=bool(r.integers(0, 2)),
        )
        try:
            return ModelConfig(**kw)
        except ParameterError:
            continue


def gradient_check(cfg, seed, eps=1e-5, batch=3):
    """Max relative error between analytic and central-difference gradients.

    Relative error is |a - n| / max(|a|, |n|, 1e-6); the floor keeps entries
    whose true gradient is ~0 from dividing rounding noise by zero.
    """
    r = np.random.default_rng(seed)
    params = init_params(cfg, Rng(seed))
    for k, v in params.items():
        params[k] = v + 0.1 * r.normal(size=v.shape)  # nonzero biases, break symmetry
    x = r.normal(size=(batch, cfg.window, cfg.input_dim))
    y = r.integers(0, 2, size=batch)

    def loss(p):
        probs, _ = model_forward(x, p, cfg, training=True, rng=Rng(seed + 1))
        return cross_entropy(probs, y)

    _, cache = model_forward(x, params, cfg, training=True, rng=Rng(seed + 1))
    grads = model_backward(cache, y, params)
    worst = 0.0
    for name, arr in params.items():
        g = grads[name]
        flat = arr.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp = loss(params)
            flat[i] = old - eps
            lm = loss(params)
            flat[i] = old
            num = (lp - lm) / (2 * eps)
            a = g.reshape(-1)[i]
            rel = abs(a - num) / max(abs(a), abs(num), 1e-6)
            worst = max(worst, rel)
    return worst


def ref_mcc(tp, tn, fp, fn):
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    return None if den == 0 else (tp * tn - fp * fn) / math.sqrt(den)
