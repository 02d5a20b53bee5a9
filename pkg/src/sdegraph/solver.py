"""Euler-Maruyama simulation with replayable noise and an optional running
quadratic cost, differentiable end to end when states are Tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DivergenceError, ResolutionError


@dataclass
class SdeSpec:
    """Dynamics on a fixed grid: drift/diffusion are callables (state, t) -> state-like.

    The diffusion is diagonal and must return strictly positive components.
    The step must divide the time range into an integer number of steps.
    """

    dim: int
    drift: callable
    diffusion: callable
    delta: float
    t0: float = 0.0
    t1: float = 1.0

    def n_steps(self) -> int:
        if self.delta <= 0:
            raise ContractError("step size must be positive")
        span = self.t1 - self.t0
        k = span / self.delta
        if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
            raise ContractError(
                f"time range {span} is not an integer multiple of step {self.delta}")
        return int(round(k))


@dataclass
class Trajectory:
    """Simulated path: grid times, per-step states, and the noise that drove them.

    ``noise[k]`` is the Gaussian increment (variance = delta) applied at step k;
    replaying it through ``em_solve`` reproduces the path bit for bit.
    """

    times: np.ndarray
    states: list = field(default_factory=list)
    noise: np.ndarray | None = None

    def values(self) -> np.ndarray:
        """States stacked along the first axis as a plain array."""
        rows = [s.value if isinstance(s, Tensor) else np.asarray(s)
                for s in self.states]
        return np.stack(rows, axis=0)


def _state_values(z) -> np.ndarray:
    return z.value if isinstance(z, Tensor) else np.asarray(z)


def em_solve(spec: SdeSpec, z0, rng=None, noise=None, _post_step=None) -> Trajectory:
    """Simulate ``z' = z + f dt + g dW`` on the grid, recording states and noise.

    ``noise`` overrides the random draws (shape ``(n_steps,) + z0.shape``,
    already scaled to variance delta); otherwise ``rng`` supplies them.
    States may be Tensors, in which case the whole path is differentiable
    through the recorded noise.
    """
    k_steps = spec.n_steps()
    z = z0
    shape = _state_values(z0).shape
    if shape[-1] != spec.dim:
        raise ContractError(f"initial state has dim {shape[-1]}, spec says {spec.dim}")
    if noise is None:
        if rng is None:
            raise ContractError("either rng or noise must be provided")
        noise = rng.standard_normal((k_steps,) + shape) * np.sqrt(spec.delta)
    elif noise.shape != (k_steps,) + shape:
        raise ContractError(
            f"noise shape {noise.shape} does not match ({k_steps},) + {shape}")
    times = spec.t0 + spec.delta * np.arange(k_steps + 1)
    traj = Trajectory(times=times, states=[z], noise=noise)
    for k in range(k_steps):
        t = times[k]
        f = spec.drift(z, t)
        g = spec.diffusion(z, t)
        z = z + f * spec.delta + g * noise[k]
        if _post_step is not None:
            z = _post_step(times[k + 1], z)
        zv = _state_values(z)
        if not np.all(np.isfinite(zv)):
            bad = None
            if zv.ndim == 2:
                bad = np.nonzero(~np.isfinite(zv).all(axis=1))[0].tolist()
            raise DivergenceError(f"non-finite state at step {k + 1}",
                                  step=k + 1, rows=bad)
        traj.states.append(z)
    return traj


def em_solve_augmented(spec: SdeSpec, control, z0, rng=None, noise=None):
    """Simulate as ``em_solve`` while accumulating ``sum_k 0.5*|control|^2*delta``.

    The cost rides along as a zero-diffusion passenger, so the trajectory has
    the same law as the plain solve.  At each step the solver evaluates drift,
    then diffusion, then ``control``, all at the pre-step state.
    """
    k_steps = spec.n_steps()
    shape = _state_values(z0).shape
    if noise is None:
        if rng is None:
            raise ContractError("either rng or noise must be provided")
        noise = rng.standard_normal((k_steps,) + shape) * np.sqrt(spec.delta)
    times = spec.t0 + spec.delta * np.arange(k_steps + 1)
    z = z0
    cost = 0.0
    traj = Trajectory(times=times, states=[z], noise=noise)
    for k in range(k_steps):
        t = times[k]
        f = spec.drift(z, t)
        g = spec.diffusion(z, t)
        u = control(z, t)
        if isinstance(u, Tensor):
            cost = cost + 0.5 * spec.delta * ad.tensor_sum(u * u, axis=-1)
        else:
            cost = cost + 0.5 * spec.delta * np.sum(np.square(u), axis=-1)
        z = z + f * spec.delta + g * noise[k]
        zv = _state_values(z)
        if not np.all(np.isfinite(zv)):
            bad = None
            if zv.ndim == 2:
                bad = np.nonzero(~np.isfinite(zv).all(axis=1))[0].tolist()
            raise DivergenceError(f"non-finite state at step {k + 1}",
                                  step=k + 1, rows=bad)
        traj.states.append(z)
    return traj, cost


def snap_to_grid(times, delta, t0=0.0, t1=None) -> np.ndarray:
    """Map observation times to nearest grid indices; rejects collisions.

    Two observations landing on the same grid point means the grid is too
    coarse to tell them apart: decrease the step size.
    """
    times = np.asarray(times, dtype=np.float64)
    if t1 is not None:
        if np.any(times < t0 - 1e-9) or np.any(times > t1 + 1e-9):
            raise ContractError("observation times fall outside the time range")
    idx = np.rint((times - t0) / delta).astype(int)
    if len(np.unique(idx)) != len(idx):
        raise ResolutionError(
            "two observations snap to the same grid point; decrease the step size")
    return idx
