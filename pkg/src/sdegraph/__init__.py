"""Structure learning for continuous-time stochastic systems.

Trains a latent neural SDE with a Bernoulli posterior over directed
dependency graphs on (possibly irregularly sampled) multivariate time
series, and ships the solvers, generators, metrics, and intervention
machinery needed to verify it.
"""

from . import autodiff, datasets, interventions, metrics, model, nn, solver, training
from .autodiff import Tensor, backward, grad_check
from .datasets import (Dataset, TimeSeries, drop_observations, gen_bimodal,
                       gen_glycolysis, gen_lorenz96, load_dataset, normalize,
                       save_dataset)
from .interventions import (Intervention, drift_intervention,
                            identity_intervention, pin_intervention,
                            projection_intervention, simulate_intervened)
from .metrics import auroc, f1_tpr_fdr
from .model import (Graph, GraphPosterior, PriorModel, graph_kl,
                    graph_log_prior, obs_log_likelihood, sample_graph)
from .solver import SdeSpec, Trajectory, em_solve, em_solve_augmented, snap_to_grid
from .training import (PosteriorModel, TrainConfig, TrainResult, drift_mismatch,
                       elbo, encode_context, ode_mean_fit, train)

__version__ = "0.1.0"
