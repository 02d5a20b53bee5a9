import numpy as np
import pytest

from sdegraph import autodiff as ad
from sdegraph import nn
from sdegraph.errors import DimensionError, ParseError, TrainingError


def test_mlp_zero_weights_gives_zero():
    rng = np.random.default_rng(0)
    net = nn.Mlp(3, [4], 2, rng)
    for p in net.params().values():
        p.value[:] = 0.0
    out = net(np.random.default_rng(1).standard_normal((5, 3)))
    np.testing.assert_array_equal(out.value, np.zeros((5, 2)))


def test_mlp_identity_linear_layer():
    rng = np.random.default_rng(0)
    net = nn.Mlp(3, [], 3, rng)
    net.out_w.value[:] = np.eye(3)
    net.out_b.value[:] = 0.0
    x = np.random.default_rng(2).standard_normal((4, 3))
    np.testing.assert_allclose(net(x).value, x, atol=1e-15)


def test_mlp_matches_hand_unrolled_algebra():
    rng = np.random.default_rng(3)
    net = nn.Mlp(4, [6, 6], 2, rng, residual=True)
    x = rng.standard_normal((3, 4))
    (w0, b0), (w1, b1) = net.layers
    h1 = np.tanh(x @ w0.value + b0.value)                  # 4 -> 6: no skip
    h2 = np.tanh(h1 @ w1.value + b1.value) + h1            # 6 -> 6: skip applies
    expected = h2 @ net.out_w.value + net.out_b.value
    np.testing.assert_allclose(net(x).value, expected, atol=1e-12)


def test_mlp_residual_identity():
    # With one square hidden layer, output(residual) - output(plain) = x @ w_out.
    rng = np.random.default_rng(4)
    res = nn.Mlp(5, [5], 2, rng, residual=True)
    plain = nn.Mlp(5, [5], 2, np.random.default_rng(4), residual=False)
    for (name, p), (_, q) in zip(res.params().items(), plain.params().items()):
        q.value = p.value.copy()
    x = rng.standard_normal((6, 5))
    diff = res(x).value - plain(x).value
    np.testing.assert_allclose(diff, x @ res.out_w.value, atol=1e-12)


def test_mlp_dim_mismatch():
    net = nn.Mlp(3, [4], 2, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        net(np.ones((2, 5)))


def test_mlp_gradients():
    rng = np.random.default_rng(5)
    net = nn.Mlp(3, [4, 4], 1, rng, residual=True)
    x = rng.standard_normal((2, 3))
    err = ad.grad_check(lambda: ad.tensor_sum(net(x)), net.params())
    assert err < 1e-4


def test_gru_zero_weights_halves_state():
    rng = np.random.default_rng(6)
    cell = nn.GruCell(2, 4, rng)
    for p in cell.params().values():
        p.value[:] = 0.0
    h = rng.standard_normal((3, 4))
    out = cell.step(h, np.zeros((3, 2)))
    np.testing.assert_allclose(out.value, h / 2.0, atol=1e-14)


def test_gru_zero_input_converges_to_fixed_point():
    rng = np.random.default_rng(7)
    cell = nn.GruCell(2, 8, rng)
    h = ad.constant(rng.standard_normal((1, 8)))
    x = np.zeros((1, 2))
    prev = h.value.copy()
    for _ in range(300):
        h = ad.constant(cell.step(h, x).value)
    step = np.max(np.abs(cell.step(h, x).value - h.value))
    assert step < 1e-8
    assert np.max(np.abs(h.value - prev)) > 0  # it actually moved


def test_gru_state_is_convex_blend():
    # Gates live in (0, 1) and the candidate in (-1, 1), so one step cannot
    # push any component beyond max(|h|, 1).
    rng = np.random.default_rng(8)
    cell = nn.GruCell(3, 5, rng)
    for seed in range(20):
        r = np.random.default_rng(seed)
        h = r.standard_normal((4, 5)) * 3.0
        out = cell.step(h, r.standard_normal((4, 3))).value
        bound = np.maximum(np.abs(h), 1.0) + 1e-12
        assert np.all(np.abs(out) < bound)


def test_gru_gradients():
    rng = np.random.default_rng(9)
    cell = nn.GruCell(2, 3, rng)
    h = rng.standard_normal((2, 3))
    x = rng.standard_normal((2, 2))
    err = ad.grad_check(lambda: ad.tensor_sum(ad.square(cell.step(h, x))),
                        cell.params())
    assert err < 1e-4


def test_adam_zero_grads_leave_params_unchanged():
    p = ad.parameter([1.0, -2.0])
    opt = nn.Adam({"p": p}, lr=0.1)
    p.grad = np.zeros(2)
    before = p.value.copy()
    opt.step()
    np.testing.assert_array_equal(p.value, before)


def test_adam_first_step_is_minus_lr():
    p = ad.parameter(0.0)
    opt = nn.Adam({"p": p}, lr=0.1)
    p.grad = np.ones(())
    opt.step()
    assert float(p.value) == pytest.approx(-0.1, rel=1e-6)


def test_adam_converges_on_quadratic():
    p = ad.parameter(3.0)
    opt = nn.Adam({"p": p}, lr=0.05)
    for _ in range(500):
        ad.zero_grads({"p": p})
        ad.backward(ad.square(p))
        opt.step()
    assert abs(float(p.value)) < 1e-3


def test_adam_odd_symmetry():
    # Flipping gradient signs and the initial parameter sign mirrors the path.
    def run(sign):
        p = ad.parameter(sign * 1.5)
        opt = nn.Adam({"p": p}, lr=0.01)
        values = []
        for step in range(50):
            p.grad = np.asarray(sign * np.sin(step / 5.0 + 1.0))
            opt.step()
            values.append(float(p.value))
        return np.array(values)

    np.testing.assert_allclose(run(1.0), -run(-1.0), atol=1e-12)


def test_adam_rejects_nonfinite_grad():
    p = ad.parameter(0.0)
    opt = nn.Adam({"weights.w0": p}, lr=0.1)
    p.grad = np.asarray(np.nan)
    with pytest.raises(TrainingError) as exc:
        opt.step()
    assert "weights.w0" in str(exc.value)


def test_warmup_schedule():
    assert nn.warmup_lr(0, 0.003) == 0.0
    assert nn.warmup_lr(50, 0.003) == pytest.approx(0.0015)
    assert nn.warmup_lr(1000, 0.003) == pytest.approx(0.003)
    assert nn.warmup_lr(5, 0.01, warmup_epochs=0) == pytest.approx(0.01)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    arrays = {
        "a.w": rng.standard_normal((3, 4)),
        "b": rng.standard_normal(5),
        "scalar": np.asarray(rng.standard_normal()),
    }
    path = tmp_path / "ckpt.txt"
    nn.save_checkpoint(path, arrays, meta={"epoch": 7, "note": "round trip"})
    loaded, meta = nn.load_checkpoint(path)
    assert meta["epoch"] == "7"
    assert meta["note"] == "round trip"
    for k, v in arrays.items():
        assert loaded[k].shape == np.asarray(v).shape
        np.testing.assert_array_equal(loaded[k], v)  # bitwise via repr round trip


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not-a-checkpoint\n")
    with pytest.raises(ParseError) as exc:
        nn.load_checkpoint(path)
    assert exc.value.line == 1


def test_checkpoint_truncated_values(tmp_path):
    path = tmp_path / "trunc.txt"
    path.write_text(f"{nn.CHECKPOINT_MAGIC}\narray a 2,2\n1.0 2.0 3.0\n")
    with pytest.raises(ParseError):
        nn.load_checkpoint(path)
