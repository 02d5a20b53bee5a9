"""Neural building blocks: residual MLPs, a gated recurrent cell, node
embeddings, Adam with linear learning-rate warmup, and checkpoint I/O."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, ParseError, TrainingError

CHECKPOINT_MAGIC = "sdegraph-ckpt-v1"


def init_linear(rng, fan_in, fan_out):
    # Uniform fan-in scaling, the usual default for tanh stacks.
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = rng.uniform(-bound, bound, size=(fan_out,))
    return ad.parameter(w), ad.parameter(b)


class Mlp:
    """Feed-forward net with tanh hidden layers and a linear output layer.

    Residual connections add each hidden layer's input to its activation,
    and are applied only where input and output widths agree.
    """

    def __init__(self, in_dim, hidden_sizes, out_dim, rng, residual=False, name="mlp"):
        self.in_dim = in_dim
        self.hidden_sizes = list(hidden_sizes)
        self.out_dim = out_dim
        self.residual = residual
        self.name = name
        self.layers = []
        prev = in_dim
        for size in self.hidden_sizes:
            self.layers.append(init_linear(rng, prev, size))
            prev = size
        self.out_w, self.out_b = init_linear(rng, prev, out_dim)

    def __call__(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = ad.constant(x)
        if x.value.ndim != 2 or x.value.shape[1] != self.in_dim:
            raise DimensionError(
                f"{self.name}: expected input (batch, {self.in_dim}), got {x.value.shape}")
        h = x
        for w, b in self.layers:
            a = ad.tanh(h @ w + b)
            if self.residual and w.value.shape[0] == w.value.shape[1]:
                a = a + h
            h = a
        return h @ self.out_w + self.out_b

    def params(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"{self.name}.w{i}"] = w
            out[f"{self.name}.b{i}"] = b
        out[f"{self.name}.w_out"] = self.out_w
        out[f"{self.name}.b_out"] = self.out_b
        return out


class GruCell:
    """Gated recurrent cell; new state is (1 - z) * h + z * candidate.

    With all-zero weights one step halves the hidden state: both gates sit
    at 1/2 and the candidate is 0.
    """

    def __init__(self, input_dim, hidden_dim, rng, name="gru"):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.name = name
        self.w_gates, self.b_gates = init_linear(rng, hidden_dim + input_dim,
                                                  2 * hidden_dim)
        self.w_cand, self.b_cand = init_linear(rng, hidden_dim + input_dim,
                                                hidden_dim)

    def step(self, h, x) -> Tensor:
        if not isinstance(h, Tensor):
            h = ad.constant(h)
        if not isinstance(x, Tensor):
            x = ad.constant(x)
        if h.value.shape[1] != self.hidden_dim or x.value.shape[1] != self.input_dim:
            raise DimensionError(
                f"{self.name}: expected ({h.value.shape[0]}, {self.hidden_dim}) state and "
                f"(batch, {self.input_dim}) input, got {h.value.shape} and {x.value.shape}")
        hx = ad.concat([h, x], axis=1)
        gates = ad.sigmoid(hx @ self.w_gates + self.b_gates)
        z = gates[:, : self.hidden_dim]
        r = gates[:, self.hidden_dim:]
        cand = ad.tanh(ad.concat([r * h, x], axis=1) @ self.w_cand + self.b_cand)
        return (1.0 - z) * h + z * cand

    def params(self) -> dict:
        return {
            f"{self.name}.w_gates": self.w_gates,
            f"{self.name}.b_gates": self.b_gates,
            f"{self.name}.w_cand": self.w_cand,
            f"{self.name}.b_cand": self.b_cand,
        }


class NodeEmbeddings:
    """One trainable embedding row per node; the width is fixed at construction."""

    def __init__(self, n_nodes, dim, rng, name="embeddings"):
        self.n_nodes = n_nodes
        self.dim = dim
        self.name = name
        self.table = ad.parameter(rng.standard_normal((n_nodes, dim)))

    def params(self) -> dict:
        return {f"{self.name}.table": self.table}


class Adam:
    """Adam with bias correction; moments mirror the parameter shapes."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = 0.0
            elif not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter '{name}'",
                                    param=name)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict:
        out = {}
        for name in self.params:
            out[f"opt.m.{name}"] = self.m[name]
            out[f"opt.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict, step_count: int):
        self.step_count = step_count
        for name in self.params:
            self.m[name] = np.array(arrays[f"opt.m.{name}"])
            self.v[name] = np.array(arrays[f"opt.v.{name}"])


def warmup_lr(epoch, target_lr, warmup_epochs=100) -> float:
    """Linear ramp from 0 to the target over the first ``warmup_epochs`` epochs."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if warmup_epochs <= 0:
        return target_lr
    return target_lr * min(1.0, epoch / warmup_epochs)


# -- checkpoint format ------------------------------------------------------
#
# Line-oriented text, lossless via float repr:
#   sdegraph-ckpt-v1
#   meta <key> <value>
#   array <name> <d0,d1,...>      ("()" for a scalar)
#   <row-major values, space separated>


def save_checkpoint(path, arrays: dict, meta: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        for k, v in (meta or {}).items():
            if any(c.isspace() for c in str(k)):
                raise ValueError(f"meta key may not contain whitespace: {k!r}")
            fh.write(f"meta {k} {v}\n")
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            shape = ",".join(str(d) for d in arr.shape) if arr.ndim else "()"
            fh.write(f"array {name} {shape}\n")
            fh.write(" ".join(repr(float(x)) for x in arr.reshape(-1)) + "\n")


def load_checkpoint(path):
    """Return (arrays, meta); raises ParseError with a line number on bad input."""
    arrays: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ParseError(f"bad checkpoint magic, expected {CHECKPOINT_MAGIC!r}", line=1)
    i = 1
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        if line.startswith("meta "):
            parts = line.split(" ", 2)
            if len(parts) < 3:
                raise ParseError("malformed meta line", line=i + 1)
            meta[parts[1]] = parts[2]
            i += 1
            continue
        if not line.startswith("array "):
            raise ParseError(f"unexpected line: {line[:40]!r}", line=i + 1)
        parts = line.split(" ")
        if len(parts) != 3:
            raise ParseError("malformed array header", line=i + 1)
        name, shape_s = parts[1], parts[2]
        shape = () if shape_s == "()" else tuple(int(d) for d in shape_s.split(","))
        if i + 1 >= len(lines):
            raise ParseError(f"missing data for array {name}", line=i + 1)
        try:
            tokens = lines[i + 1].split()
            data = np.array([float(t) for t in tokens], dtype=np.float64)
        except ValueError as e:
            raise ParseError(f"bad values for array {name}: {e}", line=i + 2)
        expected = int(np.prod(shape)) if shape else 1
        if data.size != expected:
            raise ParseError(
                f"array {name} expected {expected} values, got {data.size}", line=i + 2)
        arrays[name] = data.reshape(shape)
        i += 2
    return arrays, meta


def assign_params(params: dict, arrays: dict, prefix=""):
    """Copy checkpoint arrays into parameter tensors, validating shapes."""
    for name, p in params.items():
        key = prefix + name
        if key not in arrays:
            raise ParseError(f"checkpoint missing parameter {key}")
        if arrays[key].shape != p.value.shape:
            raise ParseError(
                f"checkpoint parameter {key} has shape {arrays[key].shape}, "
                f"expected {p.value.shape}")
        p.value = np.array(arrays[key])
