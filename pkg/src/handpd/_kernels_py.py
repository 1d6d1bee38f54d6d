"""Pure numpy / Python implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` must agree with them.
Arrays follow the (batch, time, feature) layout and gate order i, f, g, o.
"""
import numpy as np

MASK64 = (1 << 64) - 1
_XS_MULT = 0x2545F4914F6CDD1D
_INV_2_53 = 1.0 / 9007199254740992.0


def xorshift_uniform(state, n):
    """Draw ``n`` floats in [0, 1) from a xorshift64* stream.

    Returns the draws and the advanced state.
    """
    out = np.empty(n, dtype=np.float64)
    x = state
    for i in range(n):
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        out[i] = (((x * _XS_MULT) & MASK64) >> 11) * _INV_2_53
    return out, x


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_forward(xw, U):
    """Run the LSTM recursion from zero state.

    Parameters
    ----------
    xw : (B, T, 4h) array
        Input projection ``x_t @ W.T + b`` for every step.
    U : (4h, h) array
        Recurrent weights.

    Returns
    -------
    H, C : (B, T, h) hidden and cell states
    A : (B, T, 4h) gate activations
    """
    B, T, G = xw.shape
    h = G // 4
    H = np.empty((B, T, h))
    C = np.empty((B, T, h))
    A = np.empty((B, T, G))
    Ut = np.ascontiguousarray(U.T)
    hp = np.zeros((B, h))
    cp = np.zeros((B, h))
    for t in range(T):
        z = xw[:, t] + hp @ Ut
        a = A[:, t]
        a[:, : 2 * h] = _sigmoid(z[:, : 2 * h])
        a[:, 2 * h : 3 * h] = np.tanh(z[:, 2 * h : 3 * h])
        a[:, 3 * h :] = _sigmoid(z[:, 3 * h :])
        cp = a[:, h : 2 * h] * cp + a[:, :h] * a[:, 2 * h : 3 * h]
        hp = a[:, 3 * h :] * np.tanh(cp)
        C[:, t] = cp
        H[:, t] = hp
    return H, C, A


def lstm_backward(dH, A, C, U):
    """Backpropagate through time; returns pre-activation gate gradients (B, T, 4h)."""
    B, T, h = dH.shape
    dZ = np.empty((B, T, 4 * h))
    tc = np.tanh(C)
    dh_next = np.zeros((B, h))
    dc_next = np.zeros((B, h))
    zeros = np.zeros((B, h))
    for t in range(T - 1, -1, -1):
        a = A[:, t]
        i, f, g, o = a[:, :h], a[:, h : 2 * h], a[:, 2 * h : 3 * h], a[:, 3 * h :]
        c_prev = C[:, t - 1] if t > 0 else zeros
        dh = dH[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc[:, t] ** 2)
        dz = dZ[:, t]
        dz[:, :h] = dc * g * i * (1.0 - i)
        dz[:, h : 2 * h] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * h : 3 * h] = dc * i * (1.0 - g * g)
        dz[:, 3 * h :] = dh * tc[:, t] * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ U
    return dZ
