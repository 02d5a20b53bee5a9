"""Variational trainer: amortized posterior process, evidence-bound assembly,
the training loop, and the deterministic mean-process baseline."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .datasets import Dataset, normalize
from .errors import ContractError, DivergenceError, TrainingError, ValidationError
from .metrics import MetricError, auroc
from .model import (GraphPosterior, PriorModel, graph_kl,
                    laplace_log_likelihood_rows)
from .nn import Adam, GruCell, Mlp, init_linear, load_checkpoint, save_checkpoint, \
    warmup_lr
from .solver import SdeSpec, em_solve_augmented, snap_to_grid


@dataclass
class TrainConfig:
    """Hyperparameters for variational training; architecture widths included."""

    delta: float = 1.0
    t_max: float | None = None
    sparsity: float = 500.0
    lr: float = 3e-3
    warmup_epochs: int = 100
    epochs: int = 1000
    batch_size: int | None = None
    tau_start: float = 1.0
    tau_end: float = 0.25
    seed: int = 0
    obs_scale: float = 0.01
    allow_self_loops: bool = True
    normalize_data: bool = False
    estimator: str = "pathwise"
    snapshot_every: int = 50
    embed_dim: int = 32
    feature_dim: int = 32
    prior_hidden: int | None = None
    gru_hidden: int = 128
    context_dim: int = 64
    posterior_drift_hidden: int = 128
    residual: bool = True
    ode_hidden: int = 64
    ode_group_lasso: float = 0.1
    ode_lr: float = 5e-3
    ode_epochs: int = 1500

    def validate(self):
        positive = ["delta", "lr", "tau_start", "tau_end", "obs_scale",
                    "embed_dim", "feature_dim", "gru_hidden", "context_dim",
                    "posterior_drift_hidden"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValidationError(f"config field '{name}' must be positive")
        if self.epochs < 1:
            raise ValidationError("epochs must be at least 1")
        if self.warmup_epochs < 0:
            raise ValidationError("warmup_epochs must be non-negative")
        if self.sparsity < 0:
            raise ValidationError("sparsity must be non-negative")
        if self.estimator not in ("pathwise", "score"):
            raise ValidationError("estimator must be 'pathwise' or 'score'")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")

    def temperature(self, epoch) -> float:
        frac = min(1.0, epoch / max(1, self.epochs - 1))
        return self.tau_start + (self.tau_end - self.tau_start) * frac


class PosteriorModel:
    """Reverse-time recurrent encoder plus posterior drift and initial-state heads.

    The encoder consumes only observations strictly after the query time, in
    reverse order, and a linear head maps [hidden state, flattened graph] to a
    context vector.  The posterior drift is free-form in the context (it is not
    constrained to the prior's dependency mask), and the initial state heads
    read the context at time 0.
    """

    def __init__(self, dim, rng, gru_hidden=128, context_dim=64, drift_hidden=128):
        self.dim = dim
        self.gru_hidden = gru_hidden
        self.context_dim = context_dim
        self.drift_hidden = drift_hidden
        self.gru = GruCell(dim + 1, gru_hidden, rng, name="posterior.gru")
        self.head_w, self.head_b = init_linear(rng, gru_hidden + dim * dim,
                                               context_dim)
        self.drift_net = Mlp(dim + context_dim, [drift_hidden], dim, rng,
                             name="posterior.drift")
        self.mu_w, self.mu_b = init_linear(rng, context_dim, dim)
        self.logvar_w, self.logvar_b = init_linear(rng, context_dim, dim)

    def context_head(self, hidden, flat_graph) -> Tensor:
        return ad.concat([hidden, flat_graph], axis=1) @ self.head_w + self.head_b

    def drift(self, z, context) -> Tensor:
        return self.drift_net(ad.concat([z, context], axis=1))

    def initial_state(self, context):
        mu = context @ self.mu_w + self.mu_b
        logvar = context @ self.logvar_w + self.logvar_b
        return mu, logvar

    def params(self) -> dict:
        out = self.gru.params()
        out.update(self.drift_net.params())
        out.update({
            "posterior.head_w": self.head_w,
            "posterior.head_b": self.head_b,
            "posterior.mu_w": self.mu_w,
            "posterior.mu_b": self.mu_b,
            "posterior.logvar_w": self.logvar_w,
            "posterior.logvar_b": self.logvar_b,
        })
        return out


# -- grid-aligned batches -----------------------------------------------------

@dataclass
class GridBatch:
    """Series aligned to the solver grid, with observation masks.

    ``gru_inputs[n, k]`` is [x_k, time-to-next-observation]; unobserved grid
    points carry zeros and are skipped by the encoder via the mask.
    """

    delta: float
    t_max: float
    n_steps: int
    times: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    gru_inputs: np.ndarray
    series_ids: list

    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_series(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[2]

    def subset(self, indices) -> "GridBatch":
        return GridBatch(self.delta, self.t_max, self.n_steps, self.times,
                         self.values[indices], self.mask[indices],
                         self.gru_inputs[indices],
                         [self.series_ids[i] for i in indices])

    def const(self, key, array) -> Tensor:
        if key not in self._cache:
            self._cache[key] = ad.constant(array)
        return self._cache[key]


def prepare_batch(dataset: Dataset, config: TrainConfig) -> GridBatch:
    """Snap every observation onto the solver grid and build dense arrays."""
    if len(dataset) == 0:
        raise ValidationError("dataset has no series")
    delta = config.delta
    t_max = config.t_max if config.t_max is not None else dataset.max_time()
    n_steps = int(round(t_max / delta))
    if n_steps < 1:
        raise ValidationError("time range shorter than one solver step")
    t_max = n_steps * delta
    n, d = len(dataset), dataset.dim
    values = np.zeros((n, n_steps + 1, d))
    mask = np.zeros((n, n_steps + 1))
    gru_inputs = np.zeros((n, n_steps + 1, d + 1))
    for i, s in enumerate(dataset.series):
        if len(s) == 0:
            continue
        idx = snap_to_grid(s.times, delta, 0.0, t_max)
        values[i, idx] = s.values
        mask[i, idx] = 1.0
        dt_next = np.zeros(len(s))
        dt_next[:-1] = np.diff(s.times)
        gru_inputs[i, idx, :d] = s.values
        gru_inputs[i, idx, d] = dt_next
    times = delta * np.arange(n_steps + 1)
    return GridBatch(delta, t_max, n_steps, times, values, mask, gru_inputs,
                     series_ids=list(range(n)))


# -- noise bundles ------------------------------------------------------------

@dataclass
class NoiseBundle:
    """Pre-drawn standard noise, one stream per series so results do not
    depend on batch order."""

    graph_logistic: np.ndarray   # (N, D, D)
    z0_eps: np.ndarray           # (N, D)
    path_eps: np.ndarray         # (K, N, D)


def draw_noise_bundle(batch: GridBatch, seed, epoch) -> NoiseBundle:
    n, d, k = batch.n_series, batch.dim, batch.n_steps
    graph = np.empty((n, d, d))
    z0 = np.empty((n, d))
    path = np.empty((k, n, d))
    for row, sid in enumerate(batch.series_ids):
        rng = np.random.default_rng([seed, 7001, epoch, sid])
        u = rng.uniform(1e-12, 1.0 - 1e-12, size=(d, d))
        graph[row] = np.log(u) - np.log1p(-u)
        z0[row] = rng.standard_normal(d)
        path[:, row, :] = rng.standard_normal((k, d))
    return NoiseBundle(graph, z0, path)


# -- posterior encoding -------------------------------------------------------

def _encode_grid(posterior: PosteriorModel, graphs_flat: Tensor, batch: GridBatch):
    """Context vectors for every step time, consuming strictly-future
    observations in reverse order with masked recurrent updates."""
    n, k_steps = batch.n_series, batch.n_steps
    h = batch.const("h0", np.zeros((n, posterior.gru_hidden)))
    contexts = [None] * k_steps
    for k in range(k_steps - 1, -1, -1):
        col = batch.mask[:, k + 1]
        if col.any():
            inp = batch.const(("inp", k + 1), batch.gru_inputs[:, k + 1, :])
            m = batch.const(("m", k + 1), col[:, None])
            h_new = posterior.gru.step(h, inp)
            h = m * h_new + (1.0 - m) * h
        contexts[k] = posterior.context_head(h, graphs_flat)
    return contexts


def encode_context(posterior: PosteriorModel, graph, series, t) -> Tensor:
    """Context vector for one series at time ``t`` (uses observations after t only)."""
    from .model import Graph

    if isinstance(graph, Graph):
        graph = graph.adjacency
    if not isinstance(graph, Tensor):
        graph = ad.constant(np.asarray(graph, dtype=np.float64))
    flat = ad.reshape(graph, (1, posterior.dim * posterior.dim))
    future = [(ti, xi) for ti, xi in zip(series.times, series.values) if ti > t]
    h = ad.constant(np.zeros((1, posterior.gru_hidden)))
    dim = posterior.dim
    for j in range(len(future) - 1, -1, -1):
        ti, xi = future[j]
        dt_next = future[j + 1][0] - ti if j + 1 < len(future) else 0.0
        inp = ad.constant(np.concatenate([xi, [dt_next]])[None, :])
        h = posterior.gru.step(h, inp)
    c = posterior.context_head(h, flat)
    return ad.reshape(c, (posterior.context_dim,))


def drift_mismatch(prior: PriorModel, posterior: PosteriorModel, graph, z,
                   context) -> Tensor:
    """Diffusion-scaled drift gap (posterior drift - prior drift) / diffusion.

    Its squared norm integrates to the path term of the evidence bound; it is
    identically zero when the two drifts agree.
    """
    single = not isinstance(z, Tensor) and np.asarray(z).ndim == 1
    zt = z if isinstance(z, Tensor) else ad.constant(np.atleast_2d(z))
    ct = context if isinstance(context, Tensor) else ad.constant(np.atleast_2d(context))
    h = posterior.drift(zt, ct)
    f = prior.drift(graph, zt)
    g = prior.diffusion(graph, zt)
    u = (h - f) / g
    if single:
        u = ad.reshape(u, (posterior.dim,))
    return u


# -- evidence bound -----------------------------------------------------------

def _sample_graphs(gposterior: GraphPosterior, logistic, temperature, hard):
    n, d = logistic.shape[0], gposterior.dim
    mask3 = np.broadcast_to(gposterior.mask, (n, d, d))
    logits3 = ad.broadcast_to(ad.reshape(gposterior.logits, (1, d, d)), (n, d, d))
    soft = ad.sigmoid((logits3 + ad.constant(logistic)) / temperature)
    soft = soft * ad.constant(mask3)
    if not hard:
        return soft
    hard_values = (soft.value > 0.5).astype(np.float64) * mask3
    return ad.straight_through(soft, hard_values)


def elbo(prior: PriorModel, posterior: PosteriorModel,
         gposterior: GraphPosterior, batch, config: TrainConfig,
         temperature=None, rng=None, noise: NoiseBundle | None = None,
         hard=True):
    """Monte-Carlo evidence lower bound for a batch of series.

    Samples per-series graphs and initial states, solves the posterior
    process with the running quadratic drift-mismatch cost, scores observed
    grid points under the Laplace likelihood, and subtracts the analytic
    graph KL.  Returns (objective tensor, info dict); with the score-function
    estimator the objective carries an extra zero-valued surrogate term whose
    gradient implements the estimator.
    """
    if isinstance(batch, Dataset):
        batch = prepare_batch(batch, config)
    if temperature is None:
        temperature = config.tau_start
    if noise is None:
        if rng is None:
            raise ContractError("either rng or a noise bundle must be provided")
        n, d, k = batch.n_series, batch.dim, batch.n_steps
        u = rng.uniform(1e-12, 1.0 - 1e-12, size=(n, d, d))
        noise = NoiseBundle(np.log(u) - np.log1p(-u),
                            rng.standard_normal((n, d)),
                            rng.standard_normal((k, n, d)))
    n, d, k_steps = batch.n_series, batch.dim, batch.n_steps
    score_mode = config.estimator == "score"
    if score_mode:
        mask3 = np.broadcast_to(gposterior.mask, (n, d, d))
        hard_vals = ((gposterior.logits.value + noise.graph_logistic) > 0.0)
        graphs = ad.constant(hard_vals.astype(np.float64) * mask3)
    else:
        graphs = _sample_graphs(gposterior, noise.graph_logistic, temperature, hard)
    graphs_flat = ad.reshape(graphs, (n, d * d))

    contexts = _encode_grid(posterior, graphs_flat, batch)
    mu, logvar = posterior.initial_state(contexts[0])
    z0 = mu + ad.exp(0.5 * logvar) * ad.constant(noise.z0_eps)

    cache = {}

    def step_index(t):
        return int(round((t - 0.0) / batch.delta))

    def post_drift(z, t):
        h = posterior.drift(z, contexts[step_index(t)])
        cache["h", step_index(t)] = h
        return h

    def diffusion(z, t):
        g = prior.diffusion(graphs, z)
        cache["g", step_index(t)] = g
        return g

    def control(z, t):
        k = step_index(t)
        h = cache.pop(("h", k), None)
        if h is None:
            h = posterior.drift(z, contexts[k])
        g = cache.pop(("g", k), None)
        if g is None:
            g = prior.diffusion(graphs, z)
        f = prior.drift(graphs, z)
        return (h - f) / g

    spec = SdeSpec(dim=d, drift=post_drift, diffusion=diffusion,
                   delta=batch.delta, t0=0.0, t1=batch.t_max)
    path_noise = noise.path_eps * np.sqrt(batch.delta)
    traj, cost = em_solve_augmented(spec, control, z0, noise=path_noise)

    ll_rows = ad.constant(np.zeros(n))
    for k in range(k_steps + 1):
        col = batch.mask[:, k]
        if not col.any():
            continue
        x_k = batch.const(("x", k), batch.values[:, k, :])
        rows = laplace_log_likelihood_rows(x_k, traj.states[k], config.obs_scale)
        ll_rows = ll_rows + rows * batch.const(("mask", k), col)

    data_rows = ll_rows - cost
    kl = graph_kl(gposterior, config.sparsity)
    estimate = ad.tensor_sum(data_rows) - kl

    objective = estimate
    if score_mode:
        logits3 = ad.broadcast_to(ad.reshape(gposterior.logits, (1, d, d)),
                                  (n, d, d))
        mask_t = ad.constant(np.broadcast_to(gposterior.mask, (n, d, d)))
        logq_rows = ad.tensor_sum(
            (graphs * logits3 - ad.softplus(logits3)) * mask_t, axis=(1, 2))
        advantage = data_rows.value - data_rows.value.mean()
        score_term = ad.tensor_sum(ad.constant(advantage) * logq_rows)
        objective = estimate + (score_term - ad.constant(score_term.value))

    info = {
        "elbo": float(estimate.value),
        "log_lik": float(ll_rows.value.sum()),
        "path_cost": float(cost.value.sum()),
        "path_cost_rows": cost.value,
        "graph_kl": float(kl.value),
        "trajectory": traj,
        "data_rows": data_rows.value,
    }
    return objective, info


# -- training loop ------------------------------------------------------------

@dataclass
class TrainResult:
    graph_posterior: GraphPosterior
    prior: PriorModel
    posterior: PosteriorModel
    history: list
    snapshots: list
    config: TrainConfig
    optimizer: Adam | None = None

    def edge_probabilities(self) -> np.ndarray:
        return self.graph_posterior.edge_probabilities()


def _build_models(dim, config: TrainConfig):
    rng = np.random.default_rng([config.seed, 100])
    prior = PriorModel(dim, rng, embed_dim=config.embed_dim,
                       feature_dim=config.feature_dim, hidden=config.prior_hidden,
                       sparsity=config.sparsity, obs_scale=config.obs_scale,
                       residual=config.residual)
    posterior = PosteriorModel(dim, rng, gru_hidden=config.gru_hidden,
                               context_dim=config.context_dim,
                               drift_hidden=config.posterior_drift_hidden)
    gposterior = GraphPosterior(dim, allow_self_loops=config.allow_self_loops)
    return prior, posterior, gposterior


def train(dataset: Dataset, config: TrainConfig, resume_from=None,
          log_every=None, checkpoint_path=None, checkpoint_every=None) -> TrainResult:
    """Run the variational training loop and return models plus history.

    One evidence-bound ascent step per epoch: sample a mini-batch (full batch
    by default), per series draw a graph and an initial state, solve the
    posterior process, and take an Adam step with linear warmup.  History rows
    are (epoch, elbo, auroc-or-None); edge-probability snapshots are kept every
    ``snapshot_every`` epochs.  With ``checkpoint_path`` set, full state is
    saved every ``checkpoint_every`` epochs ("{epoch}" in the path expands);
    resuming such a checkpoint under the same config continues the run bit
    for bit, because per-epoch noise is derived from (seed, epoch, series).
    """
    config.validate()
    if config.normalize_data:
        dataset, _ = normalize(dataset)
    batch_all = prepare_batch(dataset, config)
    prior, posterior, gposterior = _build_models(dataset.dim, config)
    params = {**prior.params(), **posterior.params(), **gposterior.params()}
    opt = Adam(params, lr=config.lr)
    start_epoch = 0
    if resume_from is not None:
        arrays, meta = load_checkpoint(resume_from)
        for name, p in params.items():
            p.value = np.array(arrays[name])
        opt.load_state_arrays(arrays, int(meta["step_count"]))
        start_epoch = int(meta["epoch"]) + 1
    truth = dataset.ground_truth
    history = []
    snapshots = []
    n = batch_all.n_series
    for epoch in range(start_epoch, config.epochs):
        lr = warmup_lr(epoch, config.lr, config.warmup_epochs)
        tau = config.temperature(epoch)
        batch = batch_all
        if config.batch_size is not None and config.batch_size < n:
            sel = np.random.default_rng([config.seed, 7002, epoch])
            idx = np.sort(sel.choice(n, size=config.batch_size, replace=False))
            batch = batch_all.subset(idx)
        bundle = draw_noise_bundle(batch, config.seed, epoch)
        ad.zero_grads(params)
        try:
            objective, info = elbo(prior, posterior, gposterior, batch, config,
                                   temperature=tau, noise=bundle)
        except DivergenceError as e:
            rows = e.rows or []
            ids = [batch.series_ids[r] for r in rows]
            raise TrainingError(
                f"posterior simulation diverged at step {e.step} "
                f"for series {ids} (epoch {epoch})", series=ids) from e
        if not np.isfinite(info["elbo"]):
            raise TrainingError(
                f"non-finite evidence bound at epoch {epoch}: "
                f"log_lik={info['log_lik']:.3e} path_cost={info['path_cost']:.3e} "
                f"graph_kl={info['graph_kl']:.3e}")
        ad.backward(ad.neg(objective))
        opt.step(lr=lr)
        record_auroc = None
        if truth is not None:
            try:
                record_auroc = auroc(gposterior.edge_probabilities(),
                                     truth,
                                     mask=None if config.allow_self_loops
                                     else ~np.eye(dataset.dim, dtype=bool))
            except MetricError:
                record_auroc = None
        history.append((epoch, info["elbo"], record_auroc))
        if epoch % config.snapshot_every == 0 or epoch == config.epochs - 1:
            snapshots.append((epoch, gposterior.edge_probabilities()))
        if checkpoint_path is not None and checkpoint_every is not None \
                and (epoch + 1) % checkpoint_every == 0:
            _save_state(str(checkpoint_path).replace("{epoch}", str(epoch)),
                        prior, posterior, gposterior, config, opt, epoch)
        if log_every and (epoch % log_every == 0 or epoch == config.epochs - 1):
            msg = f"epoch {epoch:5d}  elbo {info['elbo']:.4e}  lr {lr:.2e}  tau {tau:.3f}"
            if record_auroc is not None:
                msg += f"  auroc {record_auroc:.4f}"
            print(msg, flush=True)
    return TrainResult(gposterior, prior, posterior, history, snapshots, config,
                       optimizer=opt)


# -- checkpointing of full training state --------------------------------------

def _save_state(path, prior, posterior, gposterior, config, opt, epoch):
    params = {**prior.params(), **posterior.params(), **gposterior.params()}
    arrays = {k: p.value for k, p in params.items()}
    step_count = 0
    if opt is not None:
        arrays.update(opt.state_arrays())
        step_count = opt.step_count
    meta = {
        "epoch": epoch,
        "step_count": step_count,
        "dim": prior.dim,
        "config": json.dumps(asdict(config)),
    }
    save_checkpoint(path, arrays, meta)


def save_training_checkpoint(path, result: TrainResult, opt: Adam | None,
                             epoch: int):
    _save_state(path, result.prior, result.posterior, result.graph_posterior,
                result.config, opt, epoch)


def load_training_checkpoint(path):
    """Rebuild (prior, posterior, gposterior, config, epoch) from a checkpoint."""
    arrays, meta = load_checkpoint(path)
    cfg_dict = json.loads(meta["config"])
    known = {f.name for f in fields(TrainConfig)}
    config = TrainConfig(**{k: v for k, v in cfg_dict.items() if k in known})
    dim = int(meta["dim"])
    prior, posterior, gposterior = _build_models(dim, config)
    params = {**prior.params(), **posterior.params(), **gposterior.params()}
    for name, p in params.items():
        p.value = np.array(arrays[name])
    return prior, posterior, gposterior, config, int(meta["epoch"])


# -- history file ---------------------------------------------------------------

def save_history(path, history):
    """Rows of (epoch, elbo[, auroc]); the auroc column is omitted when unknown."""
    has_auroc = any(h[2] is not None for h in history)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch elbo" + (" auroc" if has_auroc else "") + "\n")
        for epoch, value, score in history:
            row = f"{epoch} {repr(float(value))}"
            if has_auroc:
                row += f" {repr(float(score)) if score is not None else 'nan'}"
            fh.write(row + "\n")


# -- deterministic mean-process baseline ----------------------------------------

@dataclass
class OdeMeanResult:
    nets: list
    z0: np.ndarray
    graph_scores: np.ndarray
    history: list
    config: TrainConfig

    def drift_values(self, z) -> np.ndarray:
        """Evaluate the fitted mean drift at probe states (rows)."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        cols = [net(ad.constant(z)).value for net in self.nets]
        return np.concatenate(cols, axis=1)


def ode_mean_fit(dataset: Dataset, config: TrainConfig) -> OdeMeanResult:
    """Fit a single deterministic mean process to all series by squared loss.

    One small network per output dimension; a group-lasso penalty on
    first-layer input columns provides the edge scores (the score for
    source i -> target j is the norm of net j's first-layer row for input i).
    This is the contrast baseline: with multimodal data the best mean path
    collapses toward the pointwise average of the series.
    """
    config.validate()
    batch = prepare_batch(dataset, config)
    n, d, k_steps = batch.n_series, batch.dim, batch.n_steps
    rng = np.random.default_rng([config.seed, 101])
    nets = [Mlp(d, [config.ode_hidden], 1, rng, name=f"ode.f{j}") for j in range(d)]
    params = {}
    for net in nets:
        params.update(net.params())
    opt = Adam(params, lr=config.ode_lr)

    first_mask = batch.mask.argmax(axis=1)
    observed = batch.mask.any(axis=1)
    if not observed.any():
        raise ValidationError("baseline requires at least one observed series")
    z0 = np.mean(batch.values[observed, first_mask[observed], :], axis=0)

    def drift_fn(z):
        return ad.concat([net(z) for net in nets], axis=1)

    history = []
    for epoch in range(config.ode_epochs):
        ad.zero_grads(params)
        z = ad.constant(z0[None, :])
        loss = ad.constant(np.zeros(()))
        for k in range(k_steps + 1):
            col = batch.mask[:, k]
            if col.any():
                x_k = batch.const(("x", k), batch.values[:, k, :])
                sq = ad.tensor_sum(ad.square(x_k - z), axis=1)
                loss = loss + ad.tensor_sum(sq * batch.const(("mask", k), col))
            if k < k_steps:
                z = z + drift_fn(z) * batch.delta
        penalty = ad.constant(np.zeros(()))
        for net in nets:
            w0 = net.layers[0][0]
            penalty = penalty + ad.tensor_sum(
                ad.sqrt(ad.tensor_sum(ad.square(w0), axis=1) + 1e-12))
        total = loss + config.ode_group_lasso * penalty
        if not np.isfinite(total.value):
            raise TrainingError(f"baseline loss non-finite at epoch {epoch}")
        ad.backward(total)
        opt.step()
        history.append((epoch, float(total.value), None))
    scores = np.zeros((d, d))
    for j, net in enumerate(nets):
        w0 = net.layers[0][0].value
        scores[:, j] = np.sqrt(np.sum(np.square(w0), axis=1))
    return OdeMeanResult(nets=nets, z0=z0, graph_scores=scores,
                         history=history, config=config)
