"""Streaming neuron-to-class dependence statistics.

Tracks, for every hidden neuron, running first and second co-moments of
its activation against the one-hot class indicators, and turns them into
a symmetrical-uncertainty score ST in [0,1]: 2*I / (H(h) + H(y)) under a
Gaussian model, where I comes from the Pearson correlation. Updates are
O(1) per sample (batched Chan-style merges), so one pass over the stream
suffices and nothing is ever stored per sample.
"""

from dataclasses import dataclass, field

import numpy as np

RHO_CLAMP = 1.0 - 1e-12
VAR_FLOOR = 1e-8
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class _HiddenMoments:
    mean: np.ndarray           # (width,)
    m2: np.ndarray             # (width,) centered sum of squares
    cross: np.ndarray          # (width, classes) centered cross products


@dataclass
class CoMoments:
    """Running co-moments of hidden activations vs one-hot labels."""

    widths: list
    num_classes: int
    n: int = 0
    mean_y: np.ndarray = field(init=False)
    m2_y: np.ndarray = field(init=False)
    layers: list = field(init=False)

    def __post_init__(self):
        m = self.num_classes
        self.mean_y = np.zeros(m)
        self.m2_y = np.zeros(m)
        self.layers = [_HiddenMoments(np.zeros(w), np.zeros(w), np.zeros((w, m)))
                       for w in self.widths]

    def update(self, hidden, labels) -> None:
        """Merge one batch of per-layer activations and integer labels."""
        if len(hidden) != len(self.layers):
            raise ValueError("activation list does not match tracked layer count")
        b = labels.shape[0]
        if b == 0:
            return
        y = np.zeros((b, self.num_classes))
        y[np.arange(b), labels] = 1.0
        by_mean = y.mean(axis=0)
        yc = y - by_mean
        by_m2 = (yc * yc).sum(axis=0)

        n_a, n_new = self.n, self.n + b
        scale = n_a * b / n_new
        dy = by_mean - self.mean_y
        for mom, h in zip(self.layers, hidden):
            if h.shape != (b, mom.mean.shape[0]):
                raise ValueError("activation batch has wrong shape")
            bh_mean = h.mean(axis=0)
            hc = h - bh_mean
            dh = bh_mean - mom.mean
            mom.m2 += (hc * hc).sum(axis=0) + dh * dh * scale
            mom.cross += hc.T @ yc + np.outer(dh, dy) * scale
            mom.mean += dh * (b / n_new)
        self.m2_y += by_m2 + dy * dy * scale
        self.mean_y += dy * (b / n_new)
        self.n = n_new


def update_moments(cm: CoMoments, hidden, labels) -> None:
    cm.update(hidden, labels)


def pearson(cm: CoMoments, layer: int, j: int, o: int) -> float:
    """Correlation of neuron j's activation with the indicator of class o.

    Degenerate (zero-variance) sides yield 0; the result is clamped just
    inside (-1, 1) so downstream logs stay finite.
    """
    mom = cm.layers[layer]
    m2_h, m2_y = mom.m2[j], cm.m2_y[o]
    if cm.n == 0 or m2_h <= 0.0 or m2_y <= 0.0:
        return 0.0
    var_h, var_y = m2_h / cm.n, m2_y / cm.n
    rho = (mom.cross[j, o] / cm.n) / (np.sqrt(var_h) * np.sqrt(var_y))
    return float(np.clip(rho, -RHO_CLAMP, RHO_CLAMP))


def mutual_info(rho: float) -> float:
    """Gaussian mutual information implied by a correlation coefficient."""
    return float(-0.5 * np.log1p(-rho * rho))


def diff_entropy(variance: float) -> float:
    """Differential entropy of a Gaussian with the given (floored) variance."""
    return float(0.5 * (1.0 + LOG_2PI + np.log(max(variance, VAR_FLOOR))))


def st_value(cm: CoMoments, layer: int, j: int, o: int) -> float:
    """Symmetrical-uncertainty coupling of neuron (layer, j) to class o.

    2*I/(H(h)+H(y)) clipped to [0,1]; when the entropy sum is not positive
    the raw mutual information (capped at 1) is used instead.
    """
    rho = pearson(cm, layer, j, o)
    info = mutual_info(rho)
    if cm.n == 0:
        return 0.0
    h_h = diff_entropy(cm.layers[layer].m2[j] / cm.n)
    h_y = diff_entropy(cm.m2_y[o] / cm.n)
    denom = h_h + h_y
    raw = 2.0 * info / denom if denom > 0.0 else min(1.0, info)
    return float(np.clip(raw, 0.0, 1.0))


class SuAtlas:
    """Per-layer ST tables (neurons x classes) kept in sync with a CoMoments.

    Tables are recomputed lazily after updates; `tables()` always returns
    values identical to elementwise st_value calls.
    """

    def __init__(self, widths, num_classes):
        self.cm = CoMoments(list(widths), num_classes)
        self._tables = [np.zeros((w, num_classes)) for w in widths]
        self._dirty = False

    def update(self, hidden, labels) -> None:
        self.cm.update(hidden, labels)
        self._dirty = True

    def tables(self):
        if self._dirty:
            self._refresh()
            self._dirty = False
        return self._tables

    def _refresh(self):
        cm = self.cm
        if cm.n == 0:
            return
        var_y = cm.m2_y / cm.n
        sd_y = np.sqrt(var_y)
        h_y = 0.5 * (1.0 + LOG_2PI + np.log(np.maximum(var_y, VAR_FLOOR)))
        ok_y = cm.m2_y > 0.0
        for l, mom in enumerate(cm.layers):
            var_h = mom.m2 / cm.n
            sd_h = np.sqrt(var_h)
            ok = (mom.m2 > 0.0)[:, np.newaxis] & ok_y[np.newaxis, :]
            denom_sd = sd_h[:, np.newaxis] * sd_y[np.newaxis, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                rho = np.where(ok, (mom.cross / cm.n) / denom_sd, 0.0)
            rho = np.clip(rho, -RHO_CLAMP, RHO_CLAMP)
            info = -0.5 * np.log1p(-rho * rho)
            h_h = 0.5 * (1.0 + LOG_2PI + np.log(np.maximum(var_h, VAR_FLOOR)))
            denom = h_h[:, np.newaxis] + h_y[np.newaxis, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(denom > 0.0, 2.0 * info / np.where(denom > 0.0, denom, 1.0),
                                 np.minimum(1.0, info))
            self._tables[l] = np.clip(ratio, 0.0, 1.0)
