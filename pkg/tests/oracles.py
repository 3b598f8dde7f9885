"""Independent reference implementations used to check the real code.

Everything here is deliberately written the slow, obvious way (loops,
full sorts, direct summation) so a bug in the library cannot hide in a
shared code path.
"""

import numpy as np


def finite_diff_param_grads(model, loss_fn, eps=1e-5):
    """Central finite differences of loss_fn() w.r.t. every model parameter.

    Returns [(dw, db), ...] per layer. loss_fn takes no arguments and must
    read the live model, which is restored exactly after probing.
    """
    grads = []
    for layer in model.layers:
        pair = []
        for arr in (layer.w, layer.b):
            flat = arr.reshape(-1)
            g = np.zeros(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = loss_fn()
                flat[i] = orig - eps
                f_minus = loss_fn()
                flat[i] = orig
                g[i] = (f_plus - f_minus) / (2.0 * eps)
            pair.append(g.reshape(arr.shape))
        grads.append(tuple(pair))
    return grads


def finite_diff_logit_grads(z, loss_fn, eps=1e-5):
    """Central finite differences of loss_fn(z) w.r.t. each logit entry."""
    z = np.array(z, dtype=np.float64)
    g = np.zeros_like(z)
    it = np.nditer(z, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = z[idx]
        z[idx] = orig + eps
        f_plus = loss_fn(z)
        z[idx] = orig - eps
        f_minus = loss_fn(z)
        z[idx] = orig
        g[idx] = (f_plus - f_minus) / (2.0 * eps)
        it.iternext()
    return g


def grad_mismatches(analytic, reference, rel=1e-4, floor=1e-8):
    """Entries where |a - r| exceeds rel * max(|a|, |r|), with tiny entries
    compared absolutely against the floor. Returns a list of descriptions."""
    a = np.asarray(analytic).ravel()
    r = np.asarray(reference).ravel()
    bad = []
    for i, (ai, ri) in enumerate(zip(a, r)):
        scale = max(abs(ai), abs(ri))
        tol = floor if scale < floor else rel * scale
        if abs(ai - ri) > tol:
            bad.append(f"entry {i}: analytic={ai!r} reference={ri!r}")
    return bad


def topk_by_repeated_extraction(scores, k):
    """Select k best (score desc, index asc) by repeatedly pulling the max."""
    remaining = list(scores)
    chosen = []
    while remaining and len(chosen) < k:
        best = remaining[0]
        for s in remaining[1:]:
            if s.score > best.score or (s.score == best.score and s.index < best.index):
                best = s
        chosen.append(best.index)
        remaining.remove(best)
    return sorted(chosen)


def avg_accuracy_direct(a):
    """Mean of the last row by explicit summation."""
    t = len(a)
    total = 0.0
    for col in range(t):
        total += a[t - 1][col]
    return total / t


def forgetting_direct(a):
    """Average peak-minus-final drop over all but the last task."""
    t = len(a)
    total = 0.0
    for col in range(t - 1):
        peak = max(a[row][col] for row in range(t - 1))
        total += peak - a[t - 1][col]
    return total / (t - 1)


def rotate_bilinear_reference(img, theta):
    """Per-pixel loop version of mass-distributing bilinear rotation."""
    h, w = img.shape
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    out = np.zeros_like(img)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    for r in range(h):
        for c in range(w):
            x_i, y_i = c - cc, cr - r
            x_d = cos_t * x_i - sin_t * y_i
            y_d = sin_t * x_i + cos_t * y_i
            r_d, c_d = cr - y_d, cc + x_d
            r0, c0 = int(np.floor(r_d)), int(np.floor(c_d))
            fr, fc = r_d - r0, c_d - c0
            for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                                (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
                rr, cc2 = r0 + dr, c0 + dc
                if 0 <= rr < h and 0 <= cc2 < w:
                    out[rr, cc2] += wgt * img[r, c]
    return out
