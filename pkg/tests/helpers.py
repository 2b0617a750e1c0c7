"""Shared test utilities: an independent IDX writer, two-pass statistics,
and finite-difference gradient oracles. Everything here is written from
the definitions, not by calling back into the package internals, so tests
compare two independent formulations."""

import struct

import numpy as np


def write_idx(dir_path, images, labels):
    """Write (N, 28, 28) uint8 images and uint8 labels as an IDX file pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    img_path = dir_path / "images-idx3-ubyte"
    lbl_path = dir_path / "labels-idx1-ubyte"
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.tobytes())
    with open(lbl_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())
    return img_path, lbl_path


def two_pass_moments(h, labels, num_classes):
    """Centered sums computed directly over the full arrays."""
    n = h.shape[0]
    y = np.zeros((n, num_classes))
    y[np.arange(n), labels] = 1.0
    mean_h = h.mean(axis=0)
    mean_y = y.mean(axis=0)
    hc = h - mean_h
    yc = y - mean_y
    return {
        "n": n,
        "mean_h": mean_h,
        "m2_h": (hc * hc).sum(axis=0),
        "mean_y": mean_y,
        "m2_y": (yc * yc).sum(axis=0),
        "cross": hc.T @ yc,
    }


def two_pass_st(h, labels, num_classes, var_floor=1e-8, rho_clamp=1.0 - 1e-12):
    """Symmetrical uncertainty from scratch on stored data."""
    stats = two_pass_moments(h, labels, num_classes)
    n = stats["n"]
    var_h = stats["m2_h"] / n
    var_y = stats["m2_y"] / n
    out = np.zeros((h.shape[1], num_classes))
    for j in range(h.shape[1]):
        for o in range(num_classes):
            if stats["m2_h"][j] <= 0 or stats["m2_y"][o] <= 0:
                rho = 0.0
            else:
                rho = (stats["cross"][j, o] / n) / (
                    np.sqrt(var_h[j]) * np.sqrt(var_y[o]))
                rho = min(max(rho, -rho_clamp), rho_clamp)
            info = -0.5 * np.log1p(-rho * rho)
            h_h = 0.5 * (1 + np.log(2 * np.pi * max(var_h[j], var_floor)))
            h_y = 0.5 * (1 + np.log(2 * np.pi * max(var_y[o], var_floor)))
            denom = h_h + h_y
            raw = 2 * info / denom if denom > 0 else min(1.0, info)
            out[j, o] = min(max(raw, 0.0), 1.0)
    return out


def mlp_param_arrays(net):
    return [*net.weights, net.w_out, *net.biases, net.b_out]


def fd_gradients_mlp(net, x, targets, loss_fn, eps=1e-5):
    """Central finite differences of loss_fn over every parameter."""
    grads = []
    for p in mlp_param_arrays(net):
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            keep = p[idx]
            p[idx] = keep + eps
            lo_hi = loss_fn(net, x, targets)
            p[idx] = keep - eps
            lo_lo = loss_fn(net, x, targets)
            p[idx] = keep
            g[idx] = (lo_hi - lo_lo) / (2 * eps)
        grads.append(g)
    return grads


def sae_param_arrays(sae):
    return [*sae.enc_w, *sae.enc_b, *sae.dec_b]


def sae_loss(sae, x):
    """Tied-weight reconstruction loss, written out independently."""
    def sig(z):
        return 1.0 / (1.0 + np.exp(-z))

    h = x
    for w, b in zip(sae.enc_w, sae.enc_b):
        h = sig(h @ w.T + b)
    d = h
    for i in range(len(sae.enc_w)):
        w = sae.enc_w[len(sae.enc_w) - 1 - i]
        d = sig(d @ w + sae.dec_b[i])
    return float(np.mean((d - x) ** 2))


def fd_gradients_sae(sae, x, eps=1e-6):
    grads = []
    for p in sae_param_arrays(sae):
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            keep = p[idx]
            p[idx] = keep + eps
            hi = sae_loss(sae, x)
            p[idx] = keep - eps
            lo = sae_loss(sae, x)
            p[idx] = keep
            g[idx] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def max_rel_err(analytic, numeric, floor=1e-4):
    """Largest |a-n| / max(|a|, |n|, floor) across aligned array lists."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
