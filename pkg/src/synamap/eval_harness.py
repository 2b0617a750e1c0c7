"""Sequential-task protocol and the three transfer metrics.

After finishing task i the network is scored on every task's test set,
filling row i of the accuracy matrix S. From a completed matrix:

  ACC = mean of the last row (final accuracy over all tasks),
  BWT = mean of S[T-1, i] - S[i, i] over i < T-1 (forgetting when negative),
  FWT = mean of S[j-1, j] - b[j] over j >= 1, where b[j] is the accuracy an
        untrained copy of the network scores on task j (zero-shot transfer).

A single-task stream has no transfer to measure; both BWT and FWT are
reported as 0.0 with a degenerate flag raised.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import (EwcTrainer, NaiveTrainer, OnlineEwcTrainer, RunConfig,
                        SiTrainer, Trainer)
from .data_tasks import TaskStream
from .importance import IsyanaTrainer
from .nn_core import accuracy, init_network

TRAINER_FACTORIES = {
    "naive": NaiveTrainer,
    "ewc": EwcTrainer,
    "online_ewc": OnlineEwcTrainer,
    "si": SiTrainer,
    "isyana": IsyanaTrainer,
    "isyana_no_tt": lambda net, cfg, seed: IsyanaTrainer(net, cfg, seed, ablate_tt=True),
}


def make_trainer(method: str, net, cfg: RunConfig, seed: int) -> Trainer:
    try:
        factory = TRAINER_FACTORIES[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from "
                         f"{sorted(TRAINER_FACTORIES)}") from None
    return factory(net, cfg, seed)


@dataclass
class RunReport:
    method: str
    stream: str
    seed: int
    matrix: np.ndarray         # (T, T); row i = accuracies after task i+1
    b_hat: np.ndarray          # (T,) untrained-network accuracy per task
    acc: float
    bwt: float
    fwt: float
    degenerate_transfer: bool
    seconds: float
    config: dict
    trainer: object = field(default=None, repr=False, compare=False)


def acc_score(matrix: np.ndarray) -> float:
    """Mean accuracy over all tasks after the last one was learned."""
    return float(np.mean(matrix[-1]))


def bwt_score(matrix: np.ndarray) -> float:
    """How much earlier tasks lost (negative) or gained since being learned."""
    t = matrix.shape[0]
    if t < 2:
        return 0.0
    return float(np.mean([matrix[t - 1, i] - matrix[i, i] for i in range(t - 1)]))


def fwt_score(matrix: np.ndarray, b_hat: np.ndarray) -> float:
    """Zero-shot lift on each task just before it is trained, against the
    untrained-network baseline."""
    t = matrix.shape[0]
    if t < 2:
        return 0.0
    return float(np.mean([matrix[j - 1, j] - b_hat[j] for j in range(1, t)]))


def _mask_for(task, num_classes, masked_eval):
    if not masked_eval:
        return None
    mask = np.zeros(num_classes, dtype=bool)
    mask[list(task.spec.class_set)] = True
    return mask


def baseline_vector(net, stream: TaskStream, masked_eval: bool = False) -> np.ndarray:
    """Per-task test accuracy of the network as handed in (untrained)."""
    return np.array([accuracy(net, t.test.images, t.test.labels,
                              _mask_for(t, stream.total_classes, masked_eval))
                     for t in stream.tasks])


def run_protocol(method: str, stream: TaskStream, cfg: RunConfig,
                 seed: int) -> RunReport:
    """Train one method through the stream and return its filled report.

    The accuracy matrix covers every (trained-through, scored-on) pair,
    future tasks included, which is what FWT needs. Evaluation is
    single-head over all classes unless cfg.masked_eval restricts scoring
    to each task's own classes (a diagnostic mode)."""
    start = time.perf_counter()
    net = init_network(cfg.layer_sizes, seed)
    trainer = make_trainer(method, net, cfg, seed)
    b_hat = baseline_vector(net, stream, cfg.masked_eval)
    t_count = len(stream)
    matrix = np.zeros((t_count, t_count))
    for i, task in enumerate(stream.tasks):
        trainer.train_task(task)
        for j, scored in enumerate(stream.tasks):
            matrix[i, j] = accuracy(net, scored.test.images, scored.test.labels,
                                    _mask_for(scored, stream.total_classes,
                                              cfg.masked_eval))
    degenerate = t_count < 2
    return RunReport(
        method=method, stream=stream.name, seed=seed,
        matrix=matrix, b_hat=b_hat,
        acc=acc_score(matrix),
        bwt=bwt_score(matrix),
        fwt=fwt_score(matrix, b_hat),
        degenerate_transfer=degenerate,
        seconds=time.perf_counter() - start,
        config=asdict(cfg),
        trainer=trainer,
    )


def summarize(reports) -> dict:
    """Mean and spread of each metric over a list of same-method reports."""
    accs = np.array([r.acc for r in reports])
    bwts = np.array([r.bwt for r in reports])
    fwts = np.array([r.fwt for r in reports])
    return {
        "n_seeds": len(reports),
        "acc_mean": float(accs.mean()), "acc_sd": float(accs.std()),
        "bwt_mean": float(bwts.mean()), "bwt_sd": float(bwts.std()),
        "fwt_mean": float(fwts.mean()), "fwt_sd": float(fwts.std()),
    }
