"""Pure numpy versions of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_ckernels`` module. Outputs agree to floating point round-off.
"""

import numpy as np

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

# rows of path data processed per block in synthesize; bounds peak memory
_SYNTH_BLOCK = 512


def selu(z):
    out = np.empty_like(z)
    pos = z > 0
    out[pos] = SELU_SCALE * z[pos]
    neg = ~pos
    out[neg] = SELU_SCALE * SELU_ALPHA * np.expm1(z[neg])
    return out


def selu_grad(z, da):
    """Gradient of selu at ``z`` times the upstream gradient ``da``."""
    slope = np.where(z > 0, SELU_SCALE, SELU_SCALE * SELU_ALPHA * np.exp(np.minimum(z, 0.0)))
    return slope * da


def adam_update(param, grad, m, v, mask, lr, beta1, beta2, eps, t):
    """In-place bias-corrected Adam step. ``mask`` may be None."""
    if mask is not None:
        grad = grad * mask
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    step = lr * m_hat / (np.sqrt(v_hat) + eps)
    if mask is not None:
        step *= mask
    param -= step


def quantize(x, bits):
    levels = 1 << bits
    step = 2.0 / levels
    codes = np.floor((np.asarray(x, dtype=np.float64) + 1.0) / step)
    return np.clip(codes, 0, levels - 1).astype(np.int64)


def synthesize(aods, gains, n_ant, d_over_lambda):
    """Sum of steering vectors weighted by path gains.

    ``aods`` is (n, P) real, ``gains`` is (n, P) complex; returns (n, n_ant).
    """
    aods = np.atleast_2d(aods)
    gains = np.atleast_2d(gains)
    n = aods.shape[0]
    out = np.empty((n, n_ant), dtype=np.complex128)
    k = np.arange(n_ant, dtype=np.float64)
    for lo in range(0, n, _SYNTH_BLOCK):
        hi = min(lo + _SYNTH_BLOCK, n)
        phase = (-2.0 * np.pi * d_over_lambda) * np.sin(aods[lo:hi])[:, :, None] * k
        steer = np.cos(phase) + 1j * np.sin(phase)
        out[lo:hi] = np.einsum("np,npk->nk", gains[lo:hi], steer)
    return out


def pilot_apply(p_re, p_im, h_re, h_im):
    """Per-sample complex matrix-vector product, split into real parts.

    ``p_re``/``p_im`` are (B, M, N); ``h_re``/``h_im`` are (B, N).
    Returns ``(y_re, y_im)`` each (B, M).
    """
    hr = h_re[:, :, None]
    hi = h_im[:, :, None]
    y_re = (np.matmul(p_re, hr) - np.matmul(p_im, hi))[:, :, 0]
    y_im = (np.matmul(p_im, hr) + np.matmul(p_re, hi))[:, :, 0]
    return y_re, y_im


def pilot_grad(dy_re, dy_im, h_re, h_im):
    """Gradients of ``pilot_apply`` with respect to the pilot matrices."""
    dp_re = dy_re[:, :, None] * h_re[:, None, :] + dy_im[:, :, None] * h_im[:, None, :]
    dp_im = dy_im[:, :, None] * h_re[:, None, :] - dy_re[:, :, None] * h_im[:, None, :]
    return dp_re, dp_im
