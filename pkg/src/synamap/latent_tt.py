"""Latent class prototypes and the task-relatedness map built on them.

A small tied-weight sigmoid autoencoder is trained online alongside the
classifier; its bottleneck codes feed running per-(task, class) mean
vectors ("clusters"). At a task boundary the current task's clusters are
frozen. Relatedness of the current task to a class seen earlier is scored
from the KL divergence between unit-covariance Gaussians centered on the
cluster means, mapped into [0,1].
"""

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .nn_core import sigmoid

KL_EPS = 1e-6


class FrozenClusterError(RuntimeError):
    """Raised when samples are routed to an already-consolidated cluster."""


@dataclass
class Sae:
    """Tied-weight autoencoder: decoder reuses transposed encoder weights
    but keeps its own biases."""

    sizes: list                # [inputs, hidden..., code]
    enc_w: list                # enc_w[l] is (sizes[l+1], sizes[l])
    enc_b: list
    dec_b: list                # dec_b[i] matches decode stage i output width


def sae_init(sizes, seed) -> Sae:
    if len(sizes) < 2:
        raise ValueError("autoencoder needs at least input and code sizes")
    rng = np.random.default_rng(seed)
    enc_w, enc_b = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        enc_w.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
        enc_b.append(np.zeros(fan_out))
    dec_b = [np.zeros(sizes[len(sizes) - 2 - i]) for i in range(len(sizes) - 1)]
    return Sae(list(sizes), enc_w, enc_b, dec_b)


def encode(sae: Sae, x: np.ndarray) -> np.ndarray:
    """Bottleneck codes for a batch (no decoder pass)."""
    h = x
    for w, b in zip(sae.enc_w, sae.enc_b):
        h = sigmoid(h @ w.T + b)
    return h


def sae_train_step(sae: Sae, x: np.ndarray, lr: float) -> float:
    """One SGD step on mean squared reconstruction error; returns the
    pre-step loss. Encoder weights receive gradient from both their
    encoding and (transposed) decoding roles."""
    depth = len(sae.enc_w)
    enc_acts = [x]
    h = x
    for w, b in zip(sae.enc_w, sae.enc_b):
        h = sigmoid(h @ w.T + b)
        enc_acts.append(h)
    dec_acts = []
    d = h
    for i in range(depth):
        w = sae.enc_w[depth - 1 - i]
        d = sigmoid(d @ w + sae.dec_b[i])
        dec_acts.append(d)
    xhat = dec_acts[-1]
    diff = xhat - x
    loss = float(np.mean(diff * diff))

    g_w = [np.zeros_like(w) for w in sae.enc_w]
    g_enc_b = [np.zeros_like(b) for b in sae.enc_b]
    g_dec_b = [np.zeros_like(b) for b in sae.dec_b]

    delta = (2.0 / diff.size) * diff * xhat * (1.0 - xhat)
    for i in range(depth - 1, -1, -1):
        w_idx = depth - 1 - i
        a_in = enc_acts[depth] if i == 0 else dec_acts[i - 1]
        g_w[w_idx] += a_in.T @ delta
        g_dec_b[i] += delta.sum(axis=0)
        delta = (delta @ sae.enc_w[w_idx].T) * a_in * (1.0 - a_in)
    for l in range(depth - 1, -1, -1):
        a_below = enc_acts[l]
        g_w[l] += delta.T @ a_below
        g_enc_b[l] += delta.sum(axis=0)
        if l > 0:
            delta = (delta @ sae.enc_w[l]) * a_below * (1.0 - a_below)

    for w, g in zip(sae.enc_w, g_w):
        w -= lr * g
    for b, g in zip(sae.enc_b, g_enc_b):
        b -= lr * g
    for b, g in zip(sae.dec_b, g_dec_b):
        b -= lr * g
    return loss


def kl_unit_gaussian(mu_a: np.ndarray, mu_b: np.ndarray) -> float:
    """KL divergence between unit-covariance Gaussians: half the squared
    distance between their means. Symmetric and zero iff the means match."""
    if mu_a.shape != mu_b.shape:
        raise ValueError("mean vectors differ in shape")
    d = mu_a - mu_b
    return float(0.5 * np.dot(d, d))


@dataclass
class ClassCluster:
    task_id: int
    class_id: int
    mu: np.ndarray
    count: int = 0
    frozen: bool = False


@dataclass
class TtMap:
    """Relatedness of the task in progress to each class, plus which
    entries are backed by data (unknown classes report 0 and known=False)."""

    values: np.ndarray
    known: np.ndarray


class ClassAtlas:
    """Running per-(task, class) latent mean vectors with freeze-on-consolidate."""

    def __init__(self, dim: int):
        self.dim = dim
        self.clusters = {}     # (task_id, class_id) -> ClassCluster

    def grow_clusters(self, latents: np.ndarray, labels: np.ndarray, task_id: int) -> None:
        """Fold a batch of codes into the running means of task_id's clusters."""
        if latents.shape[1] != self.dim:
            raise ValueError("latent width does not match atlas dimension")
        for cls in np.unique(labels):
            key = (task_id, int(cls))
            block = latents[labels == cls]
            cluster = self.clusters.get(key)
            if cluster is None:
                cluster = ClassCluster(task_id, int(cls), np.zeros(self.dim))
                self.clusters[key] = cluster
            if cluster.frozen:
                raise FrozenClusterError(f"cluster {key} is already consolidated")
            b = block.shape[0]
            total = cluster.count + b
            cluster.mu += (block.mean(axis=0) - cluster.mu) * (b / total)
            cluster.count = total

    def consolidate(self, task_id: int) -> None:
        """Freeze every cluster of task_id; their means become immutable."""
        open_clusters = [c for c in self.clusters.values()
                         if c.task_id == task_id and not c.frozen]
        if not open_clusters:
            warnings.warn(f"task {task_id} has no open clusters to consolidate",
                          stacklevel=2)
            return
        for c in open_clusters:
            c.frozen = True
            c.mu.flags.writeable = False

    def _latest_frozen(self, class_id: int):
        best = None
        for c in self.clusters.values():
            if c.class_id == class_id and c.frozen:
                if best is None or c.task_id > best.task_id:
                    best = c
        return best

    def tt_value(self, current_classes, current_task_id: int, class_id: int):
        """Relatedness of the running task to one class.

        Classes belonging to the current task score 1 outright. For a class
        from an earlier task the score is min(1, 1/(eps + mean KL)) where the
        mean runs over KL divergences from the current task's cluster means
        to that class's frozen mean. Returns (value, known)."""
        if class_id in current_classes:
            return 1.0, True
        target = self._latest_frozen(class_id)
        current = [c for (t, _), c in self.clusters.items() if t == current_task_id]
        if target is None or not current:
            return 0.0, False
        mean_kl = float(np.mean([kl_unit_gaussian(c.mu, target.mu) for c in current]))
        return min(1.0, 1.0 / (KL_EPS + mean_kl)), True

    def tt_map(self, current_classes, current_task_id: int, num_classes: int) -> TtMap:
        values = np.zeros(num_classes)
        known = np.zeros(num_classes, dtype=bool)
        for o in range(num_classes):
            values[o], known[o] = self.tt_value(current_classes, current_task_id, o)
        return TtMap(values=values, known=known)

    def frozen_fingerprint(self) -> dict:
        """Stable digest of every frozen mean, keyed by (task, class).

        Byte-exact: any drift in a consolidated mean changes its digest."""
        out = {}
        for key, c in sorted(self.clusters.items()):
            if c.frozen:
                out[key] = hashlib.sha256(c.mu.tobytes()).hexdigest()
        return out
