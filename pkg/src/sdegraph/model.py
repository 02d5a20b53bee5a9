"""Generative model: sparsity graph prior, graph-masked drift and diffusion
networks over shared node embeddings, Laplace observation likelihood, and the
independent-Bernoulli variational graph posterior."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError, ParseError
from .nn import Mlp, NodeEmbeddings

DIFFUSION_FLOOR = 1e-4

EDGE_FILE_HEADER = ("# edge probabilities: rows = source node i, "
                    "columns = target node j, entry = P(i -> j)")


@dataclass
class Graph:
    """Binary adjacency; entry [i, j] = 1 means node i feeds node j.

    Cycles are allowed.  When self-loops are disallowed the diagonal must
    be zero (the convention for gene-network style evaluation).
    """

    adjacency: np.ndarray
    allow_self_loops: bool = True

    def __post_init__(self):
        adj = np.asarray(self.adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DimensionError(f"adjacency must be square, got {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise ContractError("adjacency entries must be 0 or 1")
        if not self.allow_self_loops and np.any(np.diag(adj) != 0):
            raise ContractError("self-loops present but disallowed")
        self.adjacency = adj.astype(np.float64)

    @property
    def dim(self) -> int:
        return self.adjacency.shape[0]

    def edge_count(self) -> int:
        return int(self.adjacency.sum())


def graph_log_prior(graph, sparsity: float) -> float:
    """Unnormalized log prior -sparsity * ||G||_F^2 (the normalizer is a constant)."""
    if sparsity < 0:
        raise ContractError("sparsity coefficient must be non-negative")
    adj = graph.adjacency if isinstance(graph, Graph) else np.asarray(graph)
    return float(-sparsity * np.sum(np.square(adj)))


class GraphPosterior:
    """Independent Bernoulli edge posterior parameterized by logits.

    When self-loops are disallowed the diagonal is clamped to probability 0
    and excluded from sampling and the KL.
    """

    def __init__(self, dim, allow_self_loops=True, init_logit=0.0):
        self.dim = dim
        self.allow_self_loops = allow_self_loops
        self.logits = ad.parameter(np.full((dim, dim), float(init_logit)))
        mask = np.ones((dim, dim))
        if not allow_self_loops:
            mask -= np.eye(dim)
        self.mask = mask

    def edge_probabilities(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            p = 1.0 / (1.0 + np.exp(-self.logits.value))
        return p * self.mask

    def mean_graph(self, threshold=0.5) -> Graph:
        adj = (self.edge_probabilities() > threshold).astype(float)
        return Graph(adj, allow_self_loops=self.allow_self_loops)

    def params(self) -> dict:
        return {"graph.logits": self.logits}


def sample_graph(posterior: GraphPosterior, temperature, rng, hard=True,
                 n_samples=None) -> Tensor:
    """Binary-concrete edge samples; ``hard`` rounds with a straight-through pass.

    Returns shape (dim, dim), or (n_samples, dim, dim) when requested.
    Gradients flow to the posterior logits through the relaxation.
    """
    if temperature <= 0:
        raise ContractError("temperature must be positive")
    d = posterior.dim
    shape = (d, d) if n_samples is None else (n_samples, d, d)
    u = rng.uniform(1e-12, 1.0 - 1e-12, size=shape)
    logistic = np.log(u) - np.log1p(-u)
    logits = posterior.logits
    if n_samples is not None:
        logits = ad.broadcast_to(ad.reshape(logits, (1, d, d)), shape)
    soft = ad.sigmoid((logits + ad.constant(logistic)) / temperature)
    mask = ad.constant(np.broadcast_to(posterior.mask, shape))
    soft = soft * mask
    if not hard:
        return soft
    hard_values = (soft.value > 0.5).astype(np.float64)
    return ad.straight_through(soft, hard_values)


def graph_kl(posterior: GraphPosterior, sparsity) -> Tensor:
    """KL(q(G) || p(G)) against the unnormalized sparsity prior, edgewise analytic.

    Per edge: phi*log(phi) + (1-phi)*log(1-phi) + sparsity*phi, computed in
    logit space to stay finite at saturation.  The prior's constant
    log-normalizer is dropped.
    """
    a = posterior.logits
    phi = ad.sigmoid(a)
    per_edge = phi * a - ad.softplus(a) + sparsity * phi
    return ad.tensor_sum(per_edge * ad.constant(posterior.mask))


def obs_log_likelihood(x, z, scale=0.01):
    """Laplace log density of observation x around latent z, summed over components."""
    if scale <= 0:
        raise ContractError("observation scale must be positive")
    if isinstance(z, Tensor) or isinstance(x, Tensor):
        return ad.tensor_sum(-np.log(2.0 * scale) - ad.absolute(x - z) / scale)
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    return float(np.sum(-np.log(2.0 * scale) - np.abs(x - z) / scale))


def laplace_log_likelihood_rows(x, z, scale) -> Tensor:
    """Per-row Laplace log likelihood for batched states (batch, dim) -> (batch,)."""
    return ad.tensor_sum(-np.log(2.0 * scale) - ad.absolute(x - z) / scale, axis=1)


class PriorModel:
    """Drift and diffusion over a (possibly relaxed) graph.

    Component d of either function aggregates per-source features
    ``feature_net(z_i, e_i)`` weighted by the graph column into node d, then
    reads out through ``readout_net(aggregate, e_d)``.  Zero graph entries
    therefore remove the dependence exactly, not just approximately.  Drift
    and diffusion have separate feature/readout networks but share the node
    embeddings.  The diffusion passes through softplus plus a small floor so
    its inverse stays bounded.
    """

    def __init__(self, dim, rng, embed_dim=32, feature_dim=32, hidden=None,
                 sparsity=500.0, obs_scale=0.01, residual=True):
        self.dim = dim
        self.embed_dim = embed_dim
        self.feature_dim = feature_dim
        if hidden is None:
            hidden = max(2 * dim, embed_dim)
        self.hidden = hidden
        self.sparsity = sparsity
        self.obs_scale = obs_scale
        self.residual = residual
        self.embeddings = NodeEmbeddings(dim, embed_dim, rng, name="prior.embeddings")
        sizes = [hidden, hidden]
        self.drift_feature = Mlp(1 + embed_dim, sizes, feature_dim, rng,
                                 residual=residual, name="prior.drift_feature")
        self.drift_readout = Mlp(feature_dim + embed_dim, sizes, 1, rng,
                                 residual=residual, name="prior.drift_readout")
        self.diff_feature = Mlp(1 + embed_dim, sizes, feature_dim, rng,
                                residual=residual, name="prior.diff_feature")
        self.diff_readout = Mlp(feature_dim + embed_dim, sizes, 1, rng,
                                residual=residual, name="prior.diff_readout")

    def params(self) -> dict:
        out = {}
        out.update(self.embeddings.params())
        for net in (self.drift_feature, self.drift_readout,
                    self.diff_feature, self.diff_readout):
            out.update(net.params())
        return out

    def _graph_tensor(self, graph, batch) -> Tensor:
        if isinstance(graph, Graph):
            graph = graph.adjacency
        if not isinstance(graph, Tensor):
            graph = ad.constant(np.asarray(graph, dtype=np.float64))
        d = self.dim
        if graph.value.shape == (d, d):
            graph = ad.broadcast_to(ad.reshape(graph, (1, d, d)), (batch, d, d))
        elif graph.value.shape != (batch, d, d):
            raise DimensionError(
                f"graph shape {graph.value.shape} incompatible with dim {d}, "
                f"batch {batch}")
        return graph

    def _node_function(self, feature_net, readout_net, graph, z):
        single = False
        if not isinstance(z, Tensor):
            z = ad.constant(np.asarray(z, dtype=np.float64))
        if z.value.ndim == 1:
            z = ad.reshape(z, (1, self.dim))
            single = True
        b, d = z.value.shape
        if d != self.dim:
            raise DimensionError(f"state dim {d} != model dim {self.dim}")
        graph = self._graph_tensor(graph, b)
        emb = ad.broadcast_to(
            ad.reshape(self.embeddings.table, (1, d, self.embed_dim)),
            (b, d, self.embed_dim))
        emb_flat = ad.reshape(emb, (b * d, self.embed_dim))
        z_col = ad.reshape(z, (b * d, 1))
        feats = feature_net(ad.concat([z_col, emb_flat], axis=1))
        feats = ad.reshape(feats, (b, d, self.feature_dim))
        # aggregate[b, target, :] = sum_source graph[b, source, target] * feats[b, source, :]
        agg = ad.matmul(ad.transpose(graph, (0, 2, 1)), feats)
        out = readout_net(ad.concat([ad.reshape(agg, (b * d, self.feature_dim)),
                                     emb_flat], axis=1))
        out = ad.reshape(out, (b, d))
        if single:
            out = ad.reshape(out, (self.dim,))
        return out

    def drift(self, graph, z) -> Tensor:
        return self._node_function(self.drift_feature, self.drift_readout, graph, z)

    def diffusion(self, graph, z) -> Tensor:
        raw = self._node_function(self.diff_feature, self.diff_readout, graph, z)
        return ad.softplus(raw) + DIFFUSION_FLOOR


# -- edge-probability file ---------------------------------------------------

def save_edge_probabilities(path, probabilities: np.ndarray):
    probabilities = np.asarray(probabilities, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(EDGE_FILE_HEADER + "\n")
        for row in probabilities:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_edge_probabilities(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError as e:
                raise ParseError(f"bad probability row: {e}", line=lineno)
    if not rows:
        raise ParseError("edge-probability file contains no data rows")
    mat = np.array(rows, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ParseError(f"edge-probability matrix must be square, got {mat.shape}")
    return mat
