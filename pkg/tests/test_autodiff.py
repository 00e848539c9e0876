import threading

import numpy as np
import pytest

from astetag import autodiff as ad
from astetag.errors import NotScalar, ShapeMismatch
from gradcases import CASES, max_error


@pytest.mark.parametrize("name", sorted(CASES))
def test_gradients(name):
    worst = max(max_error(name, seed) for seed in range(20))
    assert worst < 1e-4, worst


def test_linear_is_exact():
    x = ad.Parameter(np.array([0.3, -1.2, 2.0]))
    w = np.array([1.5, -2.0, 0.25])
    assert ad.check_gradients(lambda: ad.tsum(x * w) + 3.0, [x]) < 1e-7


def test_layer_norm_values():
    y = ad.layer_norm(ad.Tensor([1.0, 2.0, 3.0])).data
    np.testing.assert_allclose(y, [-1.2247, 0.0, 1.2247], atol=1e-3)
    x = np.random.default_rng(0).normal(size=(6, 16)) * 5 + 3
    y = ad.layer_norm(ad.Tensor(x)).data
    assert np.abs(y.mean(-1)).max() < 1e-10
    assert np.abs(y.var(-1) - 1).max() < 1e-6


def test_gelu_values():
    assert ad.gelu(ad.Tensor(0.0)).data == 0.0
    assert abs(float(ad.gelu(ad.Tensor(1.0)).data) - 0.8413) < 1e-4


def test_softmax_rows_sum_to_one():
    s = ad.softmax(ad.Tensor(np.random.default_rng(1).normal(size=(5, 7)) * 10)).data
    assert np.abs(s.sum(-1) - 1).max() < 1e-12


def test_matmul_symmetric():
    a = ad.Tensor(np.random.default_rng(2).normal(size=(6, 4)))
    s = ad.matmul(a, ad.transpose(a)).data
    assert np.abs(s - s.T).max() < 1e-12


def test_backward_square():
    x = ad.Parameter(np.array([1.0, 2.0]))
    with ad.tape():
        ad.backward(ad.tsum(x * x))
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_independent_parameter_gets_zero():
    x, p = ad.Parameter(np.ones(2)), ad.Parameter(np.ones(3))
    with ad.tape():
        ad.backward(ad.tsum(x))
    assert not p.grad.any()


def test_accumulation_doubles():
    x = ad.Parameter(np.array([1.0, -3.0]))
    for _ in range(2):
        with ad.tape():
            ad.backward(ad.tsum(x * x))
    np.testing.assert_array_equal(x.grad, [4.0, -12.0])


def test_not_scalar():
    x = ad.Parameter(np.ones(3))
    with ad.tape(), pytest.raises(NotScalar):
        ad.backward(x * 2.0)


def test_tape_cleared_after_backward():
    x = ad.Parameter(np.ones(3))
    with ad.tape() as tp:
        ad.backward(ad.tsum(ad.exp(x)))
        assert len(tp) == 0


def test_no_grad_records_nothing():
    x = ad.Parameter(np.ones(3))
    with ad.tape() as tp, ad.no_grad():
        ad.tsum(x * x)
        assert len(tp) == 0


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeMismatch, match=r"\(2, 3\).*\(4,\)"):
        ad.add(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones(4)))
    with pytest.raises(ShapeMismatch):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))


def test_clamp_flat_branch_has_zero_gradient():
    x = ad.Parameter(np.array([0.2, 2.0]))
    with ad.tape():
        ad.backward(ad.tsum(ad.maximum_const(x, 1.0)) + ad.tsum(ad.minimum_const(x, 1.0)))
    np.testing.assert_array_equal(x.grad, [1.0, 1.0])
    x.zero_grad()
    with ad.tape():
        ad.backward(ad.tsum(ad.maximum_const(x, 1.0)))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def _scalar_reference(a, b):
    # y = a*b + a*a*b, every path spelled out on plain floats
    y = a * b + a * a * b
    return y, b + 2 * a * b, a + a * a


def test_shared_subexpressions_sum_paths():
    rng = np.random.default_rng(3)
    for _ in range(5):
        av, bv = rng.normal(size=2)
        a, b = ad.Parameter(np.array(av)), ad.Parameter(np.array(bv))
        with ad.tape():
            ab = a * b
            y = ab + ab * a
            ad.backward(y)
        ref, da, db = _scalar_reference(av, bv)
        assert abs(float(y.data) - ref) < 1e-12
        assert abs(float(a.grad) - da) < 1e-12 and abs(float(b.grad) - db) < 1e-12


def test_non_finite_guard():
    with pytest.raises(FloatingPointError):
        ad.log(ad.Tensor(np.array([0.0])))


def test_adam_first_step():
    p = ad.Parameter(np.array([0.5]))
    p.grad[...] = 1.0
    ad.adam_step([([p], 1e-3)])
    assert abs((0.5 - p.data[0]) - 1e-3) < 1e-8
    assert not p.grad.any()


def test_adam_zero_grad_no_move():
    p = ad.Parameter(np.array([0.5, -1.0]))
    ad.adam_step([([p], 1e-3)])
    np.testing.assert_array_equal(p.data, [0.5, -1.0])


def test_adam_groups_scale_with_lr():
    a, b = ad.Parameter(np.zeros(3)), ad.Parameter(np.zeros(3))
    g = np.array([0.3, -2.0, 5.0])
    a.grad[...] = g
    b.grad[...] = g
    ad.adam_step([([a], 1e-5), ([b], 1e-3)])
    np.testing.assert_allclose(b.data / a.data, 100.0, rtol=1e-6)


def test_tapes_are_per_thread():
    errors = []

    def work(seed):
        try:
            x = ad.Parameter(np.random.default_rng(seed).normal(size=4))
            for _ in range(50):
                x.zero_grad()
                with ad.tape():
                    ad.backward(ad.tsum(x * x))
                np.testing.assert_allclose(x.grad, 2 * x.data)
        except Exception as e:  # pragma: no cover - reported below
            errors.append(e)

    threads = [threading.Thread(target=work, args=(s,)) for s in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
