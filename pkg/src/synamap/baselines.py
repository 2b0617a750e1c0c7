"""Training loops: plain SGD and the quadratic-penalty baselines.

All trainers share one epoch/batch loop with a deterministic batch order
derived from (seed, task_id, epoch), so two methods given the same seed
see exactly the same batches. Penalty terms are skipped outright when
their strength is zero, which keeps a zero-strength baseline bit-identical
to plain SGD.
"""

from dataclasses import dataclass, field

import numpy as np

from .data_tasks import Task
from .nn_core import (Mlp, backward, cross_entropy, forward, grad_list, one_hot,
                      param_list, sgd_step, uniform_rates)


class TrainingDivergedError(RuntimeError):
    """Raised when a batch loss stops being finite."""


@dataclass
class RunConfig:
    """Knobs shared by every method; defaults follow the benchmark setup."""

    layer_sizes: list = field(default_factory=lambda: [784, 500, 500, 10])
    epochs: int = 10
    batch_size: int = 128
    base_lr: float = 0.1
    ewc_lambda: float = 5000.0
    fisher_samples: int = 1024
    oewc_gamma: float = 1.0
    si_strength: float = 1.0
    si_damping: float = 0.1
    mod_a: float = 1.0
    mod_b: float = 1.0
    mod_c: float = -0.1
    sae_hidden: list = field(default_factory=lambda: [128, 32])
    sae_lr: float = 0.01
    force_uniform_eta: bool = False
    masked_eval: bool = False


def batch_order(seed: int, task_id: int, epoch: int, n: int) -> np.ndarray:
    """Shuffled indices for one epoch, a pure function of its coordinates.

    Keeping the stream of batches independent of any other random draws a
    method makes is what allows bit-for-bit trajectory comparisons."""
    return np.random.default_rng((seed, task_id, epoch, 0)).permutation(n)


class Trainer:
    """Epoch/batch driver; subclasses implement batch_step and task hooks."""

    method = "base"

    def __init__(self, net: Mlp, cfg: RunConfig, seed: int):
        self.net = net
        self.cfg = cfg
        self.seed = seed
        self.seen_classes = np.zeros(net.num_classes, dtype=bool)

    def train_task(self, task: Task) -> None:
        spec = task.spec
        self.seen_classes[list(spec.class_set)] = True
        mask = self.seen_classes.copy()
        x = task.train.images
        labels = task.train.labels
        targets = one_hot(labels, self.net.num_classes)
        self.before_task(task)
        n = x.shape[0]
        for epoch in range(self.cfg.epochs):
            order = batch_order(self.seed, spec.task_id, epoch, n)
            for start in range(0, n, self.cfg.batch_size):
                idx = order[start:start + self.cfg.batch_size]
                loss = self.batch_step(x[idx], labels[idx], targets[idx], mask, spec)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"{self.method}: non-finite loss in task {spec.task_id}, "
                        f"epoch {epoch}")
        self.after_task(task)

    def before_task(self, task: Task) -> None:
        pass

    def after_task(self, task: Task) -> None:
        pass

    def batch_step(self, x, labels, targets, class_mask, spec) -> float:
        raise NotImplementedError


class NaiveTrainer(Trainer):
    """Plain SGD at the base rate; the forgetting yardstick."""

    method = "naive"

    def batch_step(self, x, labels, targets, class_mask, spec) -> float:
        trace = forward(self.net, x, class_mask)
        loss = cross_entropy(trace.probs, targets)
        grads = backward(self.net, trace, targets)
        sgd_step(self.net, grads, uniform_rates(self.net, self.cfg.base_lr),
                 self.cfg.base_lr)
        return loss


def clone_params(net: Mlp):
    return [p.copy() for p in param_list(net)]


def fisher_diag(net: Mlp, images: np.ndarray, n_samples: int,
                rng: np.random.Generator, chunk: int = 256):
    """Diagonal empirical Fisher under the model's own label distribution.

    The expectation over labels is taken exactly (summing every class,
    weighted by its predicted probability) rather than by sampling, so the
    result is deterministic given the evaluation subset. Per-sample squared
    gradients of a dense layer reduce to a matmul between squared deltas
    and squared activations, so no per-sample loop is needed.
    Returns arrays aligned with param_list order."""
    n_total = min(n_samples, images.shape[0])
    pick = rng.choice(images.shape[0], size=n_total, replace=False) \
        if n_total < images.shape[0] else np.arange(images.shape[0])
    m = net.num_classes
    f_w = [np.zeros_like(w) for w in net.weights]
    f_b = [np.zeros_like(b) for b in net.biases]
    f_w_out = np.zeros_like(net.w_out)
    f_b_out = np.zeros_like(net.b_out)
    eye = np.eye(m)
    for start in range(0, n_total, chunk):
        x = images[pick[start:start + chunk]]
        trace = forward(net, x)
        probs = trace.probs
        h_last_sq = trace.hidden[-1] ** 2
        below_sq = [trace.inputs ** 2] + [h ** 2 for h in trace.hidden[:-1]]
        for o in range(m):
            w = probs[:, o] / n_total
            delta = probs - eye[o]
            wd2 = delta * delta * w[:, np.newaxis]
            f_w_out += wd2.T @ h_last_sq
            f_b_out += wd2.sum(axis=0)
            up_w = net.w_out
            d = delta
            for l in range(len(net.weights) - 1, -1, -1):
                h = trace.hidden[l]
                d = (d @ up_w) * h * (1.0 - h)
                wd2 = d * d * w[:, np.newaxis]
                f_w[l] += wd2.T @ below_sq[l]
                f_b[l] += wd2.sum(axis=0)
                up_w = net.weights[l]
    return [*f_w, f_w_out, *f_b, f_b_out]


class EwcTrainer(Trainer):
    """Quadratic anchoring to every previous task's parameters, weighted by
    that task's Fisher diagonal."""

    method = "ewc"

    def __init__(self, net, cfg, seed):
        super().__init__(net, cfg, seed)
        self.anchors = []      # (theta_star, fisher) pairs, one per past task

    def batch_step(self, x, labels, targets, class_mask, spec) -> float:
        trace = forward(self.net, x, class_mask)
        loss = cross_entropy(trace.probs, targets)
        grads = backward(self.net, trace, targets)
        lam = self.cfg.ewc_lambda
        if lam != 0.0 and self.anchors:
            params = param_list(self.net)
            glist = grad_list(grads)
            for theta_star, fisher in self.anchors:
                for p, g, t, f in zip(params, glist, theta_star, fisher):
                    drift = p - t
                    g += lam * f * drift
                    loss += 0.5 * lam * float(np.sum(f * drift * drift))
        sgd_step(self.net, grads, uniform_rates(self.net, self.cfg.base_lr),
                 self.cfg.base_lr)
        return loss

    def after_task(self, task: Task) -> None:
        rng = np.random.default_rng((self.seed, task.spec.task_id, 2))
        fisher = fisher_diag(self.net, task.train.images,
                             self.cfg.fisher_samples, rng)
        self.anchors.append((clone_params(self.net), fisher))


class OnlineEwcTrainer(Trainer):
    """Single running anchor: Fisher information decays by gamma and is
    refreshed after each task, so memory stays constant in task count."""

    method = "online_ewc"

    def __init__(self, net, cfg, seed):
        super().__init__(net, cfg, seed)
        self.fisher_run = None
        self.theta_star = None

    def batch_step(self, x, labels, targets, class_mask, spec) -> float:
        trace = forward(self.net, x, class_mask)
        loss = cross_entropy(trace.probs, targets)
        grads = backward(self.net, trace, targets)
        lam = self.cfg.ewc_lambda
        if lam != 0.0 and self.fisher_run is not None:
            params = param_list(self.net)
            glist = grad_list(grads)
            for p, g, t, f in zip(params, glist, self.theta_star, self.fisher_run):
                drift = p - t
                g += lam * f * drift
                loss += 0.5 * lam * float(np.sum(f * drift * drift))
        sgd_step(self.net, grads, uniform_rates(self.net, self.cfg.base_lr),
                 self.cfg.base_lr)
        return loss

    def after_task(self, task: Task) -> None:
        rng = np.random.default_rng((self.seed, task.spec.task_id, 2))
        f_new = fisher_diag(self.net, task.train.images,
                            self.cfg.fisher_samples, rng)
        if self.fisher_run is None:
            self.fisher_run = f_new
        else:
            self.fisher_run = [self.cfg.oewc_gamma * f_old + f for f_old, f
                               in zip(self.fisher_run, f_new)]
        self.theta_star = clone_params(self.net)


class SiTrainer(Trainer):
    """Path-integral importance: each step credits parameters by how much
    their motion reduced the task loss, and a per-parameter stiffness built
    from those credits anchors them afterwards."""

    method = "si"

    def __init__(self, net, cfg, seed):
        super().__init__(net, cfg, seed)
        params = param_list(net)
        self.omega_acc = None                      # per-task path credit
        self.big_omega = [np.zeros_like(p) for p in params]
        self.theta_star = None                     # end of previous task
        self.theta_task_start = None
        self.tasks_done = 0

    def before_task(self, task: Task) -> None:
        self.theta_task_start = clone_params(self.net)
        self.omega_acc = [np.zeros_like(p) for p in param_list(self.net)]

    def batch_step(self, x, labels, targets, class_mask, spec) -> float:
        trace = forward(self.net, x, class_mask)
        loss = cross_entropy(trace.probs, targets)
        grads = backward(self.net, trace, targets)
        glist = grad_list(grads)
        g_task = [g.copy() for g in glist]
        c = self.cfg.si_strength
        if c != 0.0 and self.tasks_done > 0:
            params = param_list(self.net)
            for p, g, t, om in zip(params, glist, self.theta_star, self.big_omega):
                drift = p - t
                g += c * om * drift
                loss += 0.5 * c * float(np.sum(om * drift * drift))
        sgd_step(self.net, grads, uniform_rates(self.net, self.cfg.base_lr),
                 self.cfg.base_lr)
        # the step moved theta by -lr * g_total; credit is -g_task . dtheta
        lr = self.cfg.base_lr
        for acc, gt, g_tot in zip(self.omega_acc, g_task, glist):
            acc += gt * (lr * g_tot)
        return loss

    def after_task(self, task: Task) -> None:
        params = param_list(self.net)
        xi = self.cfg.si_damping
        for om, acc, p, p0 in zip(self.big_omega, self.omega_acc,
                                  params, self.theta_task_start):
            moved = p - p0
            om += acc / (moved * moved + xi)
        self.theta_star = clone_params(self.net)
        self.tasks_done += 1
