"""Independent reference implementations used as test oracles.

These stay deliberately naive (nested loops, two-pass sums) and never call
the library's fast paths.
"""

import numpy as np


def conv2d_oracle(x, w, b=None, stride=(1, 1), pad=(0, 0), groups=1):
    """Direct nested-loop cross-correlation."""
    n, cin, h, wd = x.shape
    cout, cin_g, kh, kw = w.shape
    sh, sw = stride
    ph, pw = pad
    hout = (h + 2 * ph - kh) // sh + 1
    wout = (wd + 2 * pw - kw) // sw + 1
    xp = np.zeros((n, cin, h + 2 * ph, wd + 2 * pw), dtype=np.float64)
    xp[:, :, ph : ph + h, pw : pw + wd] = x
    out = np.zeros((n, cout, hout, wout), dtype=np.float64)
    cout_g = cout // groups
    for img in range(n):
        for oc in range(cout):
            g = oc // cout_g
            for y in range(hout):
                for xo in range(wout):
                    acc = 0.0
                    for ic in range(cin_g):
                        for u in range(kh):
                            for v in range(kw):
                                acc += (
                                    xp[img, g * cin_g + ic, y * sh + u, xo * sw + v]
                                    * w[oc, ic, u, v]
                                )
                    out[img, oc, y, xo] = acc
            if b is not None:
                out[img, oc] += b[oc]
    return out


def moments_oracle(x, axes):
    """Straight two-pass summation: mean first, then squared deviations."""
    count = 1
    for a in axes:
        count *= x.shape[a]
    mu = x.sum(axis=axes, keepdims=True) / count
    var = ((x - mu) ** 2).sum(axis=axes, keepdims=True) / count
    return mu, var


def numeric_grad(f, x, h=1e-3):
    """Central differences of scalar f() with respect to 64-bit array x."""
    g = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = g.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        up = f()
        flat_x[i] = orig - h
        down = f()
        flat_x[i] = orig
        flat_g[i] = (up - down) / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-4):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return (np.abs(a - b) / denom).max()
