import numpy as np
import pytest

from sdegraph import autodiff as ad
from sdegraph.errors import ContractError, DimensionError, DomainError


def test_add_componentwise():
    out = ad.add(ad.constant([1.0, 2.0]), ad.constant([3.0, 4.0]))
    np.testing.assert_array_equal(out.value, [4.0, 6.0])


def test_softplus_at_zero():
    out = ad.softplus(ad.constant(0.0))
    assert out.value == pytest.approx(np.log(2.0), abs=1e-12)


def test_matmul_identity():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 3))
    out = ad.matmul(ad.constant(np.eye(3)), ad.constant(a))
    np.testing.assert_allclose(out.value, a, atol=1e-15)


def test_backward_sum_of_squares():
    x = ad.parameter([1.0, 2.0, 3.0])
    ad.backward(ad.tensor_sum(ad.square(x)))
    np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0], atol=1e-14)


def test_backward_sigmoid_times_weight():
    w = ad.parameter(5.0)
    root = ad.sigmoid(ad.constant(0.0)) * w
    ad.backward(root)
    assert w.grad == pytest.approx(0.5, abs=1e-14)


def test_three_layer_mlp_matches_finite_differences():
    rng = np.random.default_rng(7)
    params = {
        "w1": ad.parameter(rng.standard_normal((4, 5)) * 0.5),
        "b1": ad.parameter(rng.standard_normal(5) * 0.1),
        "w2": ad.parameter(rng.standard_normal((5, 5)) * 0.5),
        "b2": ad.parameter(rng.standard_normal(5) * 0.1),
        "w3": ad.parameter(rng.standard_normal((5, 1)) * 0.5),
    }
    x = rng.standard_normal((3, 4))

    def f():
        h1 = ad.tanh(ad.constant(x) @ params["w1"] + params["b1"])
        h2 = ad.tanh(h1 @ params["w2"] + params["b2"])
        return ad.tensor_sum(h2 @ params["w3"])

    assert ad.grad_check(f, params, h=1e-5) < 1e-4


def test_grad_check_quadratic_is_exact():
    w = ad.parameter(3.0)
    assert ad.grad_check(lambda: ad.square(w), {"w": w}, h=1e-5) < 1e-8


def test_grad_check_abs_away_from_kink():
    w = ad.parameter(1.0)
    assert ad.grad_check(lambda: ad.absolute(w), {"w": w}, h=1e-5) < 1e-6


def test_grad_check_rejects_nonpositive_step():
    w = ad.parameter(1.0)
    with pytest.raises(ContractError):
        ad.grad_check(lambda: ad.square(w), {"w": w}, h=0.0)


def _signed_uniform(rng, shape):
    # Magnitudes bounded away from zero keep the relative-error criterion
    # well conditioned (a true gradient of ~1e-8 cannot beat FD noise).
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.3, 1.5, size=shape)


# One scalar-valued builder per op; each gets finite-difference checked on
# fresh random inputs across 100 seeds.
OP_CASES = {
    "add": lambda rng, p: ad.tensor_sum(p["a"] + p["b"]),
    "sub": lambda rng, p: ad.tensor_sum(p["a"] - p["b"]),
    "mul": lambda rng, p: ad.tensor_sum(p["a"] * p["b"]),
    "div": lambda rng, p: ad.tensor_sum(p["a"] / (ad.square(p["b"]) + 0.5)),
    "neg": lambda rng, p: ad.tensor_sum(-p["a"] * p["b"]),
    "matmul": lambda rng, p: ad.tensor_sum(ad.matmul(p["m1"], p["m2"])),
    "matmul_batched": lambda rng, p: ad.tensor_sum(
        ad.matmul(ad.reshape(p["t1"], (2, 2, 3)), ad.reshape(p["t2"], (2, 3, 2)))),
    "sum_axis": lambda rng, p: ad.tensor_sum(ad.square(
        ad.tensor_sum(p["a"], axis=0))),
    "mean": lambda rng, p: ad.tensor_mean(ad.square(p["a"])),
    "tanh": lambda rng, p: ad.tensor_sum(ad.tanh(p["a"]) * p["b"]),
    "sigmoid": lambda rng, p: ad.tensor_sum(ad.sigmoid(p["a"]) * p["b"]),
    "softplus": lambda rng, p: ad.tensor_sum(ad.softplus(p["a"]) * p["b"]),
    "exp": lambda rng, p: ad.tensor_sum(ad.exp(p["a"])),
    "log": lambda rng, p: ad.tensor_sum(ad.log(ad.square(p["a"]) + 0.5)),
    "abs": lambda rng, p: ad.tensor_sum(ad.absolute(p["a"]) * p["b"]),
    "square": lambda rng, p: ad.tensor_sum(ad.square(p["a"]) * p["b"]),
    "sqrt": lambda rng, p: ad.tensor_sum(ad.sqrt(ad.square(p["a"]) + 0.5)),
    "concat": lambda rng, p: ad.tensor_sum(ad.square(
        ad.concat([p["a"], p["b"]], axis=1))),
    "slice": lambda rng, p: ad.tensor_sum(ad.square(p["a"][:, 1:3])),
    "reshape": lambda rng, p: ad.tensor_sum(ad.square(
        ad.reshape(p["a"], (3, 2)) @ ad.reshape(p["b"], (2, 3)))),
    "transpose": lambda rng, p: ad.tensor_sum(ad.square(
        ad.transpose(p["a"], (1, 0))) * ad.transpose(p["b"], (1, 0))),
    "broadcast": lambda rng, p: ad.tensor_sum(ad.square(
        ad.broadcast_to(ad.reshape(p["row"], (1, 3)), (2, 3)) * p["a"])),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name):
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng([seed, 11])
        params = {
            "a": ad.parameter(_signed_uniform(rng, (2, 3))),
            "b": ad.parameter(_signed_uniform(rng, (2, 3))),
            "m1": ad.parameter(_signed_uniform(rng, (2, 3))),
            "m2": ad.parameter(_signed_uniform(rng, (3, 2))),
            "t1": ad.parameter(_signed_uniform(rng, 12)),
            "t2": ad.parameter(_signed_uniform(rng, 12)),
            "row": ad.parameter(_signed_uniform(rng, 3)),
        }
        worst = max(worst, ad.grad_check(lambda: OP_CASES[name](rng, params),
                                         params, h=1e-5))
    assert worst < 1e-4, f"{name}: worst relative error {worst:.2e}"


def test_shared_subexpression_accumulates_additively():
    rng = np.random.default_rng(5)
    v = rng.standard_normal(4)
    x = ad.parameter(v)
    y = ad.square(x)
    ad.backward(ad.tensor_sum(y + y))
    shared_grad = x.grad.copy()
    # Unrolled tree: independent leaves, one per use.
    x1, x2 = ad.parameter(v), ad.parameter(v)
    ad.backward(ad.tensor_sum(ad.square(x1) + ad.square(x2)))
    np.testing.assert_allclose(shared_grad, x1.grad + x2.grad, atol=1e-14)


def test_ops_are_pure_bitwise():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 3))

    def run():
        t = ad.tanh(ad.constant(a) @ ad.constant(b)) * ad.sigmoid(ad.constant(a))
        return ad.tensor_sum(ad.softplus(t))

    assert run().value.tobytes() == run().value.tobytes()


def test_backward_requires_scalar_root():
    x = ad.parameter([1.0, 2.0])
    with pytest.raises(ContractError):
        ad.backward(ad.square(x))


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))


def test_domain_errors():
    with pytest.raises(DomainError):
        ad.log(ad.constant([-1.0]))
    with pytest.raises(DomainError):
        ad.div(ad.constant([1.0]), ad.constant([0.0]))
    with pytest.raises(DomainError):
        ad.sqrt(ad.constant([-0.5]))


def test_broadcast_gradient_reduction():
    row = ad.parameter(np.ones(3))
    full = ad.constant(np.ones((4, 3)))
    ad.backward(ad.tensor_sum(full * row))
    np.testing.assert_allclose(row.grad, [4.0, 4.0, 4.0], atol=1e-14)


def test_straight_through_passes_gradient():
    x = ad.parameter([-0.2, 0.8])
    s = ad.sigmoid(x)
    hard = (s.value > 0.5).astype(float)
    out = ad.straight_through(s, hard)
    np.testing.assert_array_equal(out.value, [0.0, 1.0])
    ad.backward(ad.tensor_sum(out * ad.constant([2.0, 3.0])))
    expected = np.array([2.0, 3.0]) * s.value * (1 - s.value)
    np.testing.assert_allclose(x.grad, expected, atol=1e-14)


def test_finite_check_flag():
    ad.CHECK_FINITE = True
    try:
        with pytest.raises(DomainError):
            ad.exp(ad.constant([1000.0]))
    finally:
        ad.CHECK_FINITE = False
