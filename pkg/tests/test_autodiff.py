import numpy as np
import pytest

from radpose import autodiff as ad
from radpose.errors import ShapeError
from radpose.rng import Rng

# one gradcheck case per primitive; each is run over many seeded trials
PRIMITIVE_CASES = {
    "add": lambda vs: ad.vsum(ad.mul(ad.add(vs[0], vs[1]), vs[2])),
    "add_broadcast": lambda vs: ad.vsum(ad.square(ad.add(vs[0], vs[3]))),
    "sub": lambda vs: ad.vsum(ad.square(ad.sub(vs[0], vs[1]))),
    "mul": lambda vs: ad.vsum(ad.mul(vs[0], vs[1])),
    "div": lambda vs: ad.vsum(ad.div(vs[0], ad.add(ad.square(vs[1]), ad.lift(0.5)))),
    "matmul": lambda vs: ad.vsum(ad.matmul(vs[4], vs[5])),
    "exp": lambda vs: ad.vsum(ad.exp(ad.mul(vs[0], ad.lift(0.3)))),
    "log": lambda vs: ad.vsum(ad.log(ad.add(ad.square(vs[0]), ad.lift(0.5)))),
    "abs": lambda vs: ad.vsum(ad.absolute(vs[0])),
    "square": lambda vs: ad.vsum(ad.square(vs[0])),
    "relu": lambda vs: ad.vsum(ad.relu(vs[0])),
    "softplus": lambda vs: ad.vsum(ad.mul(ad.softplus(vs[0]), vs[1])),
    "softmax": lambda vs: ad.vsum(ad.mul(ad.softmax(vs[4]), ad.lift(np.arange(12.0).reshape(3, 4)))),
    "sum_axis": lambda vs: ad.vsum(ad.square(ad.vsum(vs[4], axis=0))),
    "mean": lambda vs: ad.vsum(ad.square(ad.vmean(vs[4], axis=1))),
    "concat": lambda vs: ad.vsum(ad.square(ad.concat([vs[0], vs[1]], axis=0))),
    "reshape": lambda vs: ad.vsum(ad.mul(ad.reshape(vs[4], (4, 3)), ad.lift(np.ones((4, 3))))),
    "slice": lambda vs: ad.vsum(ad.square(ad.slice_axis(vs[4], 1, 1, 3))),
    "transpose": lambda vs: ad.vsum(ad.mul(ad.transpose(vs[4]), ad.lift(np.arange(12.0).reshape(4, 3)))),
    "maximum_scalar": lambda vs: ad.vsum(ad.maximum_scalar(vs[0], 0.1)),
}


def _inputs(r: Rng):
    return [
        r.normal(6),            # 0: vector
        r.normal(6) + 2.0,      # 1: positive-ish vector
        r.normal(6),            # 2
        r.normal(()),           # 3: scalar for broadcasting
        r.normal((3, 4)),       # 4: matrix
        r.normal((4, 5)),       # 5: matrix
    ]


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradients_match_finite_differences(name):
    build = PRIMITIVE_CASES[name]
    trials = 5  # x 20 primitives = 100 seeded trials across the table
    for t in range(trials):
        r = Rng(1000 + 7 * t + hash(name) % 97)
        worst = ad.gradcheck(build, _inputs(r), h=1e-5, rtol=1e-4)
        assert worst < 1e-4


def test_x_squared_gradient_at_3():
    x = ad.Var(np.array(3.0))
    y = ad.square(x)
    ad.backward(y)
    assert abs(float(x.grad) - 6.0) < 1e-7 * 6.0


def test_softplus_at_zero():
    assert abs(float(ad.softplus(ad.lift(0.0)).value) - np.log(2.0)) < 1e-12


def test_softmax_single_element_row():
    out = ad.softmax(ad.lift(np.array([[5.0]])))
    assert np.allclose(out.value, [[1.0]])


def test_softmax_rows_sum_to_one_and_grad_sums_to_zero():
    r = Rng(2)
    x = ad.Var(r.normal((5, 7)))
    s = ad.softmax(x)
    assert np.allclose(s.value.sum(axis=1), 1.0, atol=1e-12)
    loss = ad.vsum(ad.mul(s, ad.lift(r.normal((5, 7)))))
    ad.backward(loss)
    assert np.all(np.abs(x.grad.sum(axis=1)) < 1e-10)


def test_abs_subgradient_zero_at_zero():
    x = ad.Var(np.array([0.0, -2.0, 3.0]))
    ad.backward(ad.vsum(ad.absolute(x)))
    assert np.array_equal(x.grad, [0.0, -1.0, 1.0])


def test_log_clamps_small_arguments():
    x = ad.Var(np.array([1e-20, 1.0]))
    y = ad.log(x)
    assert y.value[0] == np.log(1e-12)
    ad.backward(ad.vsum(y))
    assert x.grad[0] == 0.0  # clamped region carries no gradient
    assert abs(x.grad[1] - 1.0) < 1e-12


def test_div_clamps_small_denominator():
    num = ad.lift(np.array([1.0]))
    den = ad.Var(np.array([1e-20]))
    out = ad.div(num, den)
    assert out.value[0] == 1.0 / 1e-12


def test_matmul_grad_is_outer_structure():
    w = ad.Var(np.zeros((3, 4)))
    x = np.arange(4.0)
    loss = ad.vsum(ad.matmul(w, ad.lift(x.reshape(4, 1))))
    ad.backward(loss)
    assert np.allclose(w.grad, np.tile(x, (3, 1)))


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        ad.matmul(ad.lift(np.zeros((2, 3))), ad.lift(np.zeros((4, 2))))
    with pytest.raises(ShapeError):
        ad.matmul(ad.lift(np.zeros(3)), ad.lift(np.zeros((3, 2))))


def test_backward_requires_scalar():
    x = ad.Var(np.ones(3))
    with pytest.raises(ShapeError):
        ad.backward(ad.square(x))


def test_backward_accumulates_exactly():
    x = ad.Var(np.array([1.0, 2.0]))
    loss = ad.vsum(ad.square(x))
    ad.backward(loss)
    first = x.grad.copy()
    loss2 = ad.vsum(ad.square(x))
    ad.backward(loss2)
    assert np.array_equal(x.grad, 2.0 * first)


def test_three_layer_mlp_matches_finite_differences():
    r = Rng(77)
    x = r.normal((2, 5))
    y = r.normal((2, 3))

    def build(vs):
        w1, b1, w2, b2, w3, b3 = vs
        h1 = ad.relu(ad.add(ad.matmul(ad.lift(x), w1), b1))
        h2 = ad.relu(ad.add(ad.matmul(h1, w2), b2))
        out = ad.add(ad.matmul(h2, w3), b3)
        return ad.vsum(ad.square(ad.sub(out, ad.lift(y))))

    params = [r.normal((5, 8)), r.normal(8), r.normal((8, 6)), r.normal(6),
              r.normal((6, 3)), r.normal(3)]
    worst = ad.gradcheck(build, params, h=1e-5, rtol=1e-4)
    assert worst < 1e-4


def test_batched_matmul_gradcheck():
    r = Rng(78)
    def build(vs):
        return ad.vsum(ad.square(ad.matmul(vs[0], vs[1])))
    worst = ad.gradcheck(build, [r.normal((2, 3, 4)), r.normal((2, 4, 2))], rtol=1e-4)
    assert worst < 1e-4
