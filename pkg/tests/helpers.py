"""Shared fixtures-in-spirit for the training and acceptance tests."""

import numpy as np

from sdegraph import autodiff as ad
from sdegraph import training as tr
from sdegraph.datasets import Dataset, TimeSeries


def tiny_config(**overrides):
    """A 2-node, 3-step problem small enough for finite differences."""
    base = dict(delta=0.5, t_max=1.5, sparsity=1.2, lr=1e-3, warmup_epochs=1,
                epochs=2, seed=0, obs_scale=0.4, embed_dim=4, feature_dim=4,
                prior_hidden=5, gru_hidden=6, context_dim=4,
                posterior_drift_hidden=6, snapshot_every=1)
    base.update(overrides)
    return tr.TrainConfig(**base)


def tiny_dataset(n_series=2, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    times = np.array([0.0, 0.5, 1.0, 1.5])
    series = [TimeSeries(times, rng.standard_normal((4, dim)) * 0.5)
              for _ in range(n_series)]
    return Dataset(series, dim)


def frozen_elbo_grad_error(h=1e-5):
    """Max finite-difference error of the evidence bound on the tiny instance.

    The graph relaxation stays soft here: straight-through rounding is a
    biased surrogate whose forward value is a step function, so only the
    relaxed bound is differentiable in the logits.
    """
    data = tiny_dataset()
    cfg = tiny_config()
    batch = tr.prepare_batch(data, cfg)
    prior, posterior, gposterior = tr._build_models(data.dim, cfg)
    bundle = tr.draw_noise_bundle(batch, cfg.seed, 0)
    params = {**prior.params(), **posterior.params(), **gposterior.params()}

    def f():
        obj, _ = tr.elbo(prior, posterior, gposterior, batch, cfg,
                         temperature=0.8, noise=bundle, hard=False)
        return obj

    return ad.grad_check(f, params, h=h)
