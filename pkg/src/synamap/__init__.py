"""Continual-learning engine: per-neuron learning-rate modulation driven by
streaming neuron-to-class statistics and latent task relatedness, plus
quadratic-penalty baselines and a sequential-task benchmark harness."""

__version__ = "0.1.0"

from .baselines import (EwcTrainer, NaiveTrainer, OnlineEwcTrainer, RunConfig,
                        SiTrainer, Trainer, TrainingDivergedError, fisher_diag)
from .data_tasks import (DataConsistencyError, Dataset, IdxFormatError, Task,
                         TaskSpec, TaskStream, Transform, cap_stream, load_idx,
                         make_permuted_tasks, make_rotated_tasks,
                         make_split_tasks, make_synthetic_digits, rotate_image)
from .eval_harness import (RunReport, acc_score, baseline_vector, bwt_score,
                           fwt_score, make_trainer, run_protocol, summarize)
from .importance import (EtaSchedule, ImportanceZ, IsyanaTrainer,
                         compute_modulation, eta_schedule, phi_value, z_matrix)
from .latent_tt import (ClassAtlas, ClassCluster, FrozenClusterError, Sae,
                        TtMap, encode, kl_unit_gaussian, sae_init,
                        sae_train_step)
from .nn_core import (Mlp, accuracy, backward, cross_entropy, forward,
                      init_network, load_network, one_hot, save_network,
                      sgd_step)
from .stats_su import (CoMoments, SuAtlas, diff_entropy, mutual_info, pearson,
                       st_value, update_moments)
