"""State-space interventions: idempotent maps applied after every solver step
inside an active window, plus drift replacement on a subset of coordinates."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InterventionError, ParseError
from .solver import SdeSpec, Trajectory, em_solve

_VALIDATION_PROBES = 1000
_IDEMPOTENCE_TOL = 1e-9


def _validate_idempotent(fn, dim, window, seed=0):
    rng = np.random.default_rng([seed, 977])
    t_lo, t_hi = window
    times = rng.uniform(t_lo, t_hi, size=_VALIDATION_PROBES)
    states = rng.standard_normal((_VALIDATION_PROBES, dim)) * \
        rng.choice([0.1, 1.0, 10.0], size=(_VALIDATION_PROBES, 1))
    for t, z in zip(times, states):
        once = np.asarray(fn(t, z), dtype=np.float64)
        twice = np.asarray(fn(t, once), dtype=np.float64)
        if once.shape != z.shape:
            raise InterventionError("intervention must preserve the state shape")
        if np.max(np.abs(twice - once)) >= _IDEMPOTENCE_TOL:
            raise InterventionError(
                f"intervention is not idempotent at t={t:.4f} "
                f"(|map(map(z)) - map(z)| = {np.max(np.abs(twice - once)):.3e})")


@dataclass(frozen=True)
class Intervention:
    """An idempotent state map, active over [window[0], window[1]].

    Idempotence is validated numerically on construction using random probes
    at several magnitudes; non-idempotent maps are rejected outright.
    """

    fn: callable
    dim: int
    kind: str = "custom"
    window: tuple = (0.0, np.inf)
    params: dict = None

    def __post_init__(self):
        lo, hi = self.window
        if not lo < hi:
            raise InterventionError("window must satisfy t_a < t_b")
        probe_hi = min(hi, lo + 1e6) if np.isinf(hi) else hi
        _validate_idempotent(self.fn, self.dim, (lo, probe_hi))

    def active(self, t) -> bool:
        return self.window[0] <= t <= self.window[1]

    def apply(self, t, z) -> np.ndarray:
        if not self.active(t):
            return z
        return np.asarray(self.fn(t, z), dtype=np.float64)


def identity_intervention(dim, window=(0.0, np.inf)) -> Intervention:
    return Intervention(fn=lambda t, z: z, dim=dim, kind="identity", window=window)


def pin_intervention(dim, coords, values, window=(0.0, np.inf)) -> Intervention:
    """Hold the given coordinates at fixed values (an ordered assignment)."""
    coords = list(coords)
    values = np.asarray(values, dtype=np.float64)
    if len(coords) != len(values):
        raise InterventionError("coords and values must have equal length")

    def fn(t, z):
        out = np.array(z, dtype=np.float64)
        out[..., coords] = values
        return out

    return Intervention(fn=fn, dim=dim, kind="pin", window=window,
                        params={"coords": coords, "values": values.tolist()})


def projection_intervention(dim, radius, window=(0.0, np.inf)) -> Intervention:
    """Project states onto the closed ball of the given radius."""
    if radius <= 0:
        raise InterventionError("projection radius must be positive")

    def fn(t, z):
        z = np.asarray(z, dtype=np.float64)
        norm = np.linalg.norm(z, axis=-1, keepdims=True)
        scale = np.where(norm > radius, radius / np.maximum(norm, 1e-300), 1.0)
        return z * scale

    return Intervention(fn=fn, dim=dim, kind="projection", window=window,
                        params={"radius": radius})


def custom_intervention(fn, dim, window=(0.0, np.inf)) -> Intervention:
    return Intervention(fn=fn, dim=dim, kind="custom", window=window)


def compose(first: Intervention, second: Intervention) -> Intervention:
    """Apply ``first`` then ``second``; the composition is re-validated."""
    if first.dim != second.dim:
        raise InterventionError("cannot compose interventions of different dims")
    lo = min(first.window[0], second.window[0])
    hi = max(first.window[1], second.window[1])

    def fn(t, z):
        return second.apply(t, first.apply(t, z))

    return Intervention(fn=fn, dim=first.dim, kind="composite", window=(lo, hi))


def simulate_intervened(spec: SdeSpec, intervention: Intervention, z0,
                        rng=None, noise=None) -> Trajectory:
    """EM solve with ``z <- map(t, z)`` after every step whose time is in-window."""
    if intervention.dim != spec.dim:
        raise InterventionError("intervention dimension does not match the SDE")

    def post_step(t, z):
        if intervention.active(t):
            return intervention.fn(t, z)
        return z

    return em_solve(spec, z0, rng=rng, noise=noise, _post_step=post_step)


def drift_intervention(spec: SdeSpec, replacement, coords, window=(0.0, np.inf)) -> SdeSpec:
    """New spec whose drift equals ``replacement`` on the given coords in-window."""
    coords = list(coords)
    if any(c < 0 or c >= spec.dim for c in coords):
        raise InterventionError("replacement coordinates out of range")
    lo, hi = window

    def drift(z, t):
        base = np.array(spec.drift(z, t), dtype=np.float64)
        if lo <= t <= hi:
            repl = np.asarray(replacement(z, t), dtype=np.float64)
            base[..., coords] = repl[..., coords]
        return base

    return replace(spec, drift=drift)


# -- intervention spec file ---------------------------------------------------
#
# Key-value sidecar format, e.g.:
#   kind=pin
#   coords=0,2
#   values=0.0,1.5
#   window=0.0,10.0


def save_intervention_spec(path, intervention: Intervention):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"kind={intervention.kind}\n")
        fh.write(f"dim={intervention.dim}\n")
        lo, hi = intervention.window
        fh.write(f"window={lo},{'inf' if np.isinf(hi) else hi}\n")
        for k, v in (intervention.params or {}).items():
            if isinstance(v, (list, tuple)):
                v = ",".join(str(x) for x in v)
            fh.write(f"{k}={v}\n")


def load_intervention_spec(path) -> Intervention:
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError("expected key=value lines", line=lineno)
            k, v = line.split("=", 1)
            fields[k.strip()] = v.strip()
    try:
        kind = fields["kind"]
        dim = int(fields["dim"])
        lo_s, hi_s = fields.get("window", "0.0,inf").split(",")
        window = (float(lo_s), float(hi_s))
    except (KeyError, ValueError) as e:
        raise ParseError(f"bad intervention spec: {e}")
    if kind == "identity":
        return identity_intervention(dim, window)
    if kind == "pin":
        coords = [int(c) for c in fields["coords"].split(",")]
        values = [float(c) for c in fields["values"].split(",")]
        return pin_intervention(dim, coords, values, window)
    if kind == "projection":
        return projection_intervention(dim, float(fields["radius"]), window)
    raise ParseError(f"unknown intervention kind {kind!r} "
                     "(custom maps are not file-expressible)")
