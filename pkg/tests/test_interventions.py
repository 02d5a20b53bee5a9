import numpy as np
import pytest

from sdegraph import interventions as iv
from sdegraph.errors import InterventionError, ParseError
from sdegraph.solver import SdeSpec, em_solve


def _spec(dim, delta=0.1, t1=2.0):
    return SdeSpec(dim=dim,
                   drift=lambda z, t: -0.5 * np.asarray(z),
                   diffusion=lambda z, t: np.full(np.shape(z), 0.3),
                   delta=delta, t1=t1)


def test_identity_preserves_trajectory_bitwise():
    spec = _spec(3)
    ident = iv.identity_intervention(3)
    a = em_solve(spec, np.ones(3), rng=np.random.default_rng(0))
    b = iv.simulate_intervened(spec, ident, np.ones(3),
                               rng=np.random.default_rng(0))
    assert a.values().tobytes() == b.values().tobytes()


def test_non_idempotent_map_rejected():
    with pytest.raises(InterventionError):
        iv.custom_intervention(lambda t, z: np.asarray(z) + 1.0, dim=2)


def test_pin_holds_coordinate_exactly():
    spec = _spec(3)
    pin = iv.pin_intervention(3, coords=[1], values=[0.0], window=(0.5, 1.5))
    traj = iv.simulate_intervened(spec, pin, np.ones(3),
                                  rng=np.random.default_rng(1))
    values = traj.values()
    in_window = (traj.times >= 0.5) & (traj.times <= 1.5) & (traj.times > 0)
    assert np.all(values[in_window][:, 1] == 0.0)
    # outside the window the coordinate moves
    after = traj.times > 1.5
    assert np.any(values[after][:, 1] != 0.0)


def test_projection_bounds_norm():
    spec = _spec(4)
    ball = iv.projection_intervention(4, radius=1.0)
    traj = iv.simulate_intervened(spec, ball, np.full(4, 5.0),
                                  rng=np.random.default_rng(2))
    for state in traj.values()[1:]:
        assert np.linalg.norm(state) <= 1.0 + 1e-12


def test_projection_not_expressible_as_assignment_is_still_idempotent():
    ball = iv.projection_intervention(2, radius=2.0)
    z = np.array([5.0, 5.0])
    once = ball.fn(0.0, z)
    np.testing.assert_allclose(ball.fn(0.0, once), once, atol=1e-12)


def test_out_of_window_has_zero_effect():
    spec = _spec(2, t1=1.0)
    pin = iv.pin_intervention(2, coords=[0], values=[9.0], window=(5.0, 6.0))
    plain = em_solve(spec, np.ones(2), rng=np.random.default_rng(3))
    pinned = iv.simulate_intervened(spec, pin, np.ones(2),
                                    rng=np.random.default_rng(3))
    assert plain.values().tobytes() == pinned.values().tobytes()


def test_double_application_is_noop_at_solver_level():
    spec = _spec(2)
    pin = iv.pin_intervention(2, coords=[0], values=[1.0])
    doubled = iv.compose(pin, pin)
    a = iv.simulate_intervened(spec, pin, np.zeros(2),
                               rng=np.random.default_rng(4))
    b = iv.simulate_intervened(spec, doubled, np.zeros(2),
                               rng=np.random.default_rng(4))
    assert a.values().tobytes() == b.values().tobytes()


def test_composition_left_to_right():
    # Two pins on the same coordinate: the second applies last and wins.
    both = iv.compose(iv.pin_intervention(2, coords=[0], values=[1.0]),
                      iv.pin_intervention(2, coords=[0], values=[2.0]))
    out = both.fn(0.0, np.array([0.0, 0.3]))
    np.testing.assert_array_equal(out, [2.0, 0.3])


def test_composition_revalidates_idempotence():
    # Projection after a pin is NOT idempotent: the second pass re-pins and
    # re-projects with a different scale factor.
    with pytest.raises(InterventionError):
        iv.compose(iv.pin_intervention(2, coords=[0], values=[10.0]),
                   iv.projection_intervention(2, radius=1.0))


def test_drift_intervention_replaces_subset():
    spec = _spec(3)
    frozen = iv.drift_intervention(spec, lambda z, t: np.zeros(np.shape(z)),
                                   coords=[0, 1, 2])
    z = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(frozen.drift(z, 0.0), np.zeros(3))
    # replacing with the original drift changes nothing
    same = iv.drift_intervention(spec, spec.drift, coords=[0, 1, 2])
    np.testing.assert_array_equal(same.drift(z, 0.0), spec.drift(z, 0.0))


def test_drift_intervention_zero_drift_zero_diffusion_freezes():
    spec = SdeSpec(dim=2, drift=lambda z, t: np.ones(np.shape(z)),
                   diffusion=lambda z, t: np.zeros(np.shape(z)),
                   delta=0.1, t1=1.0)
    frozen = iv.drift_intervention(spec, lambda z, t: np.zeros(np.shape(z)),
                                   coords=[0, 1])
    traj = em_solve(frozen, np.array([2.0, -1.0]), noise=np.zeros((10, 2)))
    for state in traj.values():
        np.testing.assert_array_equal(state, [2.0, -1.0])


def test_drift_intervention_one_step_jacobian_decoupled():
    # Changing the replacement on dim 0 must not move other dims' one-step update.
    spec = _spec(3, delta=0.2, t1=0.2)

    def step_endpoint(bias):
        swapped = iv.drift_intervention(
            spec, lambda z, t: np.full(np.shape(z), bias), coords=[0])
        traj = em_solve(swapped, np.array([1.0, 1.0, 1.0]),
                        noise=np.zeros((1, 3)))
        return traj.values()[-1]

    h = 1e-5
    sens = (step_endpoint(1.0 + h) - step_endpoint(1.0 - h)) / (2 * h)
    assert abs(sens[0]) > 0.1
    np.testing.assert_allclose(sens[1:], 0.0, atol=1e-12)


def test_drift_intervention_window():
    spec = SdeSpec(dim=1, drift=lambda z, t: np.zeros(np.shape(z)),
                   diffusion=lambda z, t: np.zeros(np.shape(z)),
                   delta=0.5, t1=2.0)
    pushed = iv.drift_intervention(spec, lambda z, t: np.ones(np.shape(z)),
                                   coords=[0], window=(1.0, 1.5))
    traj = em_solve(pushed, np.zeros(1), noise=np.zeros((4, 1)))
    # drift active only at solver times 1.0 and 1.5
    np.testing.assert_allclose(traj.values()[:, 0], [0.0, 0.0, 0.0, 0.5, 1.0])


def test_intervention_spec_file_round_trip(tmp_path):
    pin = iv.pin_intervention(3, coords=[0, 2], values=[0.0, 1.5],
                              window=(0.0, 10.0))
    path = tmp_path / "intervention.txt"
    iv.save_intervention_spec(path, pin)
    loaded = iv.load_intervention_spec(path)
    assert loaded.kind == "pin"
    z = np.array([7.0, 7.0, 7.0])
    np.testing.assert_array_equal(loaded.fn(0.0, z), [0.0, 7.0, 1.5])


def test_intervention_spec_file_rejects_unknown_kind(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("kind=teleport\ndim=2\n")
    with pytest.raises(ParseError):
        iv.load_intervention_spec(path)


def test_window_validation():
    with pytest.raises(InterventionError):
        iv.identity_intervention(2, window=(3.0, 1.0))
