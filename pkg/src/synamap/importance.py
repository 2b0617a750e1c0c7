"""Per-neuron learning-rate modulation from the two mappers.

Each hidden neuron's exposure is the task-relatedness-weighted sum of its
per-class couplings: phi = sum_o TT[o] * ST[neuron, o]. Irrelevance
Z = exp(-phi) is squashed into a bounded learning rate
eta = a * exp(-b * Z + c); with the default (1, 1, -0.1) that keeps every
rate inside [exp(-1.1), exp(-0.1)). Neurons that look uninvolved in what
the network currently knows (Z near 1) get the slow end and are thereby
shielded; strongly involved ones stay plastic.
"""

from dataclasses import dataclass

import numpy as np

from .baselines import Trainer
from .latent_tt import ClassAtlas, TtMap, encode, sae_init, sae_train_step
from .nn_core import backward, cross_entropy, forward, sgd_step, uniform_rates
from .stats_su import SuAtlas


@dataclass
class ImportanceZ:
    phi: list                  # per hidden layer, (width,) exposures in [0, classes]
    z: list                    # per hidden layer, (width,) irrelevance in (0, 1]


@dataclass
class EtaSchedule:
    eta: list                  # per hidden layer, (width,) learning rates
    eta_out: float             # scalar rate for the output layer
    phi: list
    z: list
    tt: TtMap


def phi_value(tt: TtMap, su: SuAtlas, layer: int, j: int) -> float:
    """Exposure of one neuron: its ST row weighted by task relatedness."""
    return float(su.tables()[layer][j] @ tt.values)


def z_matrix(phi_layers) -> ImportanceZ:
    """Irrelevance per neuron, exp(-phi); 1 means fully uninvolved."""
    return ImportanceZ(phi=list(phi_layers),
                       z=[np.exp(-p) for p in phi_layers])


def eta_schedule(zmat: ImportanceZ, a: float, b: float, c: float,
                 tt: TtMap = None) -> EtaSchedule:
    """Map irrelevance to per-neuron rates, eta = a * exp(-b*z + c).

    The output layer, which has no ST row of its own, runs at the fastest
    hidden rate so the head never lags the most plastic feature."""
    if a <= 0.0:
        raise ValueError("rate scale a must be positive")
    eta = [a * np.exp(-b * z + c) for z in zmat.z]
    eta_out = float(max(e.max() for e in eta))
    return EtaSchedule(eta=eta, eta_out=eta_out, phi=zmat.phi, z=zmat.z, tt=tt)


def compute_modulation(net, su: SuAtlas, atlas: ClassAtlas, spec,
                       a: float, b: float, c: float,
                       ablate_tt: bool = False) -> EtaSchedule:
    """Full schedule for the current batch: TT map, exposures, rates.

    ablate_tt switches the task-relatedness weighting off (all classes
    weighted 1), leaving only the neuron-to-class statistics in play."""
    m = net.num_classes
    if ablate_tt:
        tt = TtMap(values=np.ones(m), known=np.ones(m, dtype=bool))
    else:
        tt = atlas.tt_map(spec.class_set, spec.task_id, m)
    tables = su.tables()
    phi_layers = [table @ tt.values for table in tables]
    return eta_schedule(z_matrix(phi_layers), a, b, c, tt=tt)


class IsyanaTrainer(Trainer):
    """SGD whose per-neuron rates are recomputed every batch from streaming
    neuron-to-class statistics and latent task relatedness.

    Per batch: the autoencoder takes one reconstruction step, its codes
    update the current task's class clusters, the classifier's hidden
    activations update the coupling moments, and only then is the step
    taken at the freshly computed rates. Task end freezes the clusters."""

    method = "isyana"

    def __init__(self, net, cfg, seed, ablate_tt: bool = False):
        super().__init__(net, cfg, seed)
        self.ablate_tt = ablate_tt
        if ablate_tt:
            self.method = "isyana_no_tt"
        self.sae = sae_init([net.layer_sizes[0], *cfg.sae_hidden], (seed, 3))
        self.su = SuAtlas(net.hidden_sizes, net.num_classes)
        self.atlas = ClassAtlas(cfg.sae_hidden[-1])
        self.last_schedule = None
        self.last_sae_loss = None

    def batch_step(self, x, labels, targets, class_mask, spec) -> float:
        self.last_sae_loss = sae_train_step(self.sae, x, self.cfg.sae_lr)
        codes = encode(self.sae, x)
        self.atlas.grow_clusters(codes, labels, spec.task_id)
        trace = forward(self.net, x, class_mask)
        loss = cross_entropy(trace.probs, targets)
        self.su.update(trace.hidden, labels)
        if self.cfg.force_uniform_eta:
            rates = uniform_rates(self.net, self.cfg.base_lr)
            eta_out = self.cfg.base_lr
        else:
            sched = compute_modulation(self.net, self.su, self.atlas, spec,
                                       self.cfg.mod_a, self.cfg.mod_b,
                                       self.cfg.mod_c, self.ablate_tt)
            self.last_schedule = sched
            rates, eta_out = sched.eta, sched.eta_out
        grads = backward(self.net, trace, targets)
        sgd_step(self.net, grads, rates, eta_out)
        return loss

    def after_task(self, task) -> None:
        self.atlas.consolidate(task.spec.task_id)
