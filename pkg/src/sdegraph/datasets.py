"""Synthetic SDE dataset generators with known dependency graphs, missing-data
corruption, normalization, and plain-text file I/O."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, ParseError
from .model import Graph


@dataclass
class TimeSeries:
    """Strictly increasing times paired with rows of observations."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or len(self.times) != self.values.shape[0]:
            raise DimensionError(
                f"times ({len(self.times)}) and values {self.values.shape} disagree")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ContractError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)


@dataclass
class Dataset:
    """A bundle of i.i.d. series sharing one dimension, plus optional truth."""

    series: list
    dim: int
    ground_truth: Graph | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for s in self.series:
            if s.values.shape[1] != self.dim:
                raise DimensionError(
                    f"series has dim {s.values.shape[1]}, dataset says {self.dim}")
        if self.ground_truth is not None and self.ground_truth.dim != self.dim:
            raise DimensionError("ground-truth graph dimension mismatch")

    def __len__(self):
        return len(self.series)

    def max_time(self) -> float:
        return max(float(s.times[-1]) for s in self.series if len(s))


def _simulate_em(drift, n, dim, x0, sigma, sim_dt, n_obs, obs_interval, rng):
    """Fine-grid EM simulation subsampled at the observation interval."""
    steps_per_obs = int(round(obs_interval / sim_dt))
    x = np.array(x0, dtype=np.float64)
    out = np.empty((n, n_obs, dim))
    out[:, 0] = x
    root_dt = np.sqrt(sim_dt)
    for i in range(1, n_obs):
        for _ in range(steps_per_obs):
            x = x + drift(x) * sim_dt + sigma * root_dt * rng.standard_normal((n, dim))
        out[:, i] = x
    times = obs_interval * np.arange(n_obs)
    return times, out


def lorenz96_drift(x, forcing=10.0) -> np.ndarray:
    """Cyclic advection drift; component d couples to d-2, d-1, d and d+1."""
    x = np.asarray(x, dtype=np.float64)
    return (np.roll(x, -1, axis=-1) - np.roll(x, 2, axis=-1)) * np.roll(x, 1, axis=-1) \
        - x + forcing


def lorenz96_graph(dim) -> Graph:
    adj = np.zeros((dim, dim))
    for d in range(dim):
        for i in (d - 2, d - 1, d, d + 1):
            adj[i % dim, d] = 1.0
    return Graph(adj)


def gen_lorenz96(n_series, dim=10, n_obs=100, forcing=10.0, sigma=0.5,
                 sim_dt=0.005, obs_interval=1.0, seed=0) -> Dataset:
    """Chaotic cyclic system observed on a unit grid; standard-normal initial state."""
    if dim < 4:
        raise ContractError("cyclic index structure requires dim >= 4")
    rng = np.random.default_rng([seed, 961])
    x0 = rng.standard_normal((n_series, dim))
    times, values = _simulate_em(lambda x: lorenz96_drift(x, forcing), n_series, dim,
                                 x0, sigma, sim_dt, n_obs, obs_interval, rng)
    series = [TimeSeries(times, values[i]) for i in range(n_series)]
    meta = {"generator": "lorenz96", "n_series": n_series, "dim": dim,
            "n_obs": n_obs, "forcing": forcing, "sigma": sigma,
            "sim_dt": sim_dt, "obs_interval": obs_interval, "seed": seed}
    return Dataset(series, dim, ground_truth=lorenz96_graph(dim), metadata=meta)


def glycolysis_drift(x) -> np.ndarray:
    """Seven-species metabolic oscillator drift."""
    x = np.asarray(x, dtype=np.float64)
    x1, x2, x3, x4, x5, x6, x7 = (x[..., i] for i in range(7))
    hill = 1.0 + (x6 / 0.52) ** 4
    v1 = 100.0 * x1 * x6 / hill
    out = np.empty_like(x)
    out[..., 0] = 2.5 - v1
    out[..., 1] = 2.0 * v1 - 6.0 * x2 * (1.0 - x5) - 12.0 * x2 * x5
    out[..., 2] = 6.0 * x2 * (1.0 - x5) - 16.0 * x3 * (4.0 - x6)
    out[..., 3] = 16.0 * x3 * (4.0 - x6) - 100.0 * x4 * x5 - 13.0 * (x4 - x7)
    out[..., 4] = 6.0 * x2 * (1.0 - x5) - 100.0 * x4 * x5 - 12.0 * x2 * x5
    out[..., 5] = -2.0 * v1 + 32.0 * x3 * (4.0 - x6) - 1.28 * x6
    out[..., 6] = 1.3 * (x4 - x7) - 1.8 * x7
    return out


GLYCOLYSIS_INIT_RANGES = np.array([
    [0.15, 1.60], [0.19, 2.16], [0.04, 0.20], [0.10, 0.35],
    [0.08, 0.30], [0.14, 2.67], [0.05, 0.10],
])


def glycolysis_graph() -> Graph:
    parents = {
        0: (0, 5),
        1: (0, 1, 4, 5),
        2: (1, 2, 4, 5),
        3: (2, 3, 4, 5, 6),
        4: (1, 3, 4),
        5: (0, 2, 5),
        6: (3, 6),
    }
    adj = np.zeros((7, 7))
    for target, sources in parents.items():
        for s in sources:
            adj[s, target] = 1.0
    return Graph(adj)


def gen_glycolysis(n_series, n_obs=100, sigma=0.01, sim_dt=0.005,
                   obs_interval=1.0, seed=0, normalize_data=False):
    """Seven-dimensional oscillator; initial state uniform in per-dimension ranges.

    Returns the dataset, plus the normalization transform when requested.
    """
    rng = np.random.default_rng([seed, 962])
    lo = GLYCOLYSIS_INIT_RANGES[:, 0]
    hi = GLYCOLYSIS_INIT_RANGES[:, 1]
    x0 = rng.uniform(lo, hi, size=(n_series, 7))
    times, values = _simulate_em(glycolysis_drift, n_series, 7, x0, sigma,
                                 sim_dt, n_obs, obs_interval, rng)
    series = [TimeSeries(times, values[i]) for i in range(n_series)]
    meta = {"generator": "glycolysis", "n_series": n_series, "dim": 7,
            "n_obs": n_obs, "sigma": sigma, "sim_dt": sim_dt,
            "obs_interval": obs_interval, "seed": seed}
    ds = Dataset(series, 7, ground_truth=glycolysis_graph(), metadata=meta)
    if normalize_data:
        ds, transform = normalize(ds)
        return ds, transform
    return ds


def bimodal_drift(x) -> np.ndarray:
    """Unstable linear drift dX = X dt; trajectories peel off by sign."""
    return np.asarray(x, dtype=np.float64)


def gen_bimodal(n_series, n_obs=50, obs_interval=0.1, sigma=0.01, seed=0,
                sim_dt=0.005) -> Dataset:
    """1-D unstable SDE started at 0; the dependency graph is one self-loop."""
    rng = np.random.default_rng([seed, 963])
    x0 = np.zeros((n_series, 1))
    times, values = _simulate_em(bimodal_drift, n_series, 1, x0, sigma,
                                 sim_dt, n_obs, obs_interval, rng)
    series = [TimeSeries(times, values[i]) for i in range(n_series)]
    meta = {"generator": "bimodal", "n_series": n_series, "dim": 1,
            "n_obs": n_obs, "sigma": sigma, "sim_dt": sim_dt,
            "obs_interval": obs_interval, "seed": seed}
    return Dataset(series, 1, ground_truth=Graph(np.ones((1, 1))), metadata=meta)


def drop_observations(dataset: Dataset, p, seed=0) -> Dataset:
    """Remove each (series, time) observation independently with probability p."""
    if not 0 <= p < 1:
        raise ContractError("drop probability must be in [0, 1)")
    rng = np.random.default_rng([seed, 964])
    out = []
    n_empty = 0
    for s in dataset.series:
        keep = rng.random(len(s)) >= p
        if not keep.any():
            n_empty += 1
        out.append(TimeSeries(s.times[keep], s.values[keep]))
    if n_empty:
        warnings.warn(f"{n_empty} series lost all observations after dropping",
                      stacklevel=2)
    meta = dict(dataset.metadata)
    meta.update({"drop_probability": p, "drop_seed": seed})
    return Dataset(out, dataset.dim, ground_truth=dataset.ground_truth, metadata=meta)


@dataclass
class NormalizeTransform:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values):
        return (values - self.mean) / self.std

    def invert(self, values):
        return values * self.std + self.mean


def normalize(dataset: Dataset):
    """Pooled per-dimension z-scoring; returns (dataset, invertible transform)."""
    pooled = np.concatenate([s.values for s in dataset.series], axis=0)
    for d in range(dataset.dim):
        if len(np.unique(pooled[:, d])) < 2:
            raise ContractError(f"dimension {d} is constant; cannot normalize")
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    transform = NormalizeTransform(mean=mean, std=std)
    out = [TimeSeries(s.times, transform.apply(s.values)) for s in dataset.series]
    meta = dict(dataset.metadata)
    meta["normalized"] = True
    return Dataset(out, dataset.dim, ground_truth=dataset.ground_truth,
                   metadata=meta), transform


# -- file I/O -----------------------------------------------------------------
#
# Dataset: CSV with header "series_id,time,x_0,...".  The ground-truth graph
# and metadata ride in ".truth.txt" / ".meta.txt" sidecars next to the file.


def _sidecar_paths(path):
    path = str(path)
    base = path[:-4] if path.endswith(".csv") else path
    return base + ".truth.txt", base + ".meta.txt"


def save_dataset(dataset: Dataset, path):
    truth_path, meta_path = _sidecar_paths(path)
    header = "series_id,time," + ",".join(f"x_{d}" for d in range(dataset.dim))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for sid, s in enumerate(dataset.series):
            for t, row in zip(s.times, s.values):
                cells = [str(sid), repr(float(t))] + [repr(float(v)) for v in row]
                fh.write(",".join(cells) + "\n")
    if dataset.ground_truth is not None:
        with open(truth_path, "w", encoding="utf-8") as fh:
            for row in dataset.ground_truth.adjacency:
                fh.write(" ".join(str(int(v)) for v in row) + "\n")
    if dataset.metadata:
        with open(meta_path, "w", encoding="utf-8") as fh:
            for k, v in dataset.metadata.items():
                fh.write(f"{k}={v}\n")


def load_dataset(path) -> Dataset:
    """Parse the CSV format back into a Dataset; errors carry line numbers."""
    import os

    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty dataset file", line=1)
    header = lines[0].split(",")
    if len(header) < 3 or header[0] != "series_id" or header[1] != "time":
        raise ParseError("expected header 'series_id,time,x_0,...'", line=1)
    dim = len(header) - 2
    groups: dict[int, list] = {}
    order = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != dim + 2:
            raise ParseError(f"expected {dim + 2} columns, got {len(cells)}",
                             line=lineno)
        try:
            sid = int(cells[0])
            t = float(cells[1])
            row = [float(c) for c in cells[2:]]
        except ValueError as e:
            raise ParseError(f"bad value: {e}", line=lineno)
        if sid not in groups:
            groups[sid] = []
            order.append(sid)
        if groups[sid] and t <= groups[sid][-1][0]:
            raise ParseError(
                f"times for series {sid} are not strictly increasing", line=lineno)
        groups[sid].append((t, row))
    if not groups:
        raise ParseError("dataset file has a header but no rows", line=2)
    series = []
    for sid in order:
        rows = groups[sid]
        series.append(TimeSeries(np.array([r[0] for r in rows]),
                                 np.array([r[1] for r in rows])))
    truth_path, meta_path = _sidecar_paths(path)
    truth = None
    if os.path.exists(truth_path):
        adj = np.loadtxt(truth_path, ndmin=2)
        truth = Graph(adj)
    metadata = {}
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as fh:
            for raw in fh:
                raw = raw.strip()
                if raw and "=" in raw:
                    k, v = raw.split("=", 1)
                    metadata[k] = v
    return Dataset(series, dim, ground_truth=truth, metadata=metadata)
