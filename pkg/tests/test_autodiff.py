"""Every op's backward rule against central finite differences."""

import numpy as np
import pytest

from emogest import autodiff as ad
from emogest.autodiff import ShapeError, Tape, Tensor, finite_difference_check


def rand(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape)


def check(f, x_data, seed=0, tol=1e-6):
    report = finite_difference_check(f, Tensor(x_data), h=1e-5, tol=tol)
    assert report.passed, repr(report)
    return report


# --- elementwise and reductions -------------------------------------------


def test_grad_add():
    b = rand((3, 4), 1)
    check(lambda x: ad.sum_(ad.add(x, b)), rand((3, 4), 0))


def test_grad_add_broadcast():
    b = rand((1, 4), 2)
    check(lambda x: ad.sum_(ad.mul(ad.add(x, b), ad.add(x, b))), rand((3, 4), 3))


def test_grad_sub_mul_div():
    b = rand((3, 4), 4) + 3.0
    check(lambda x: ad.sum_(ad.div(ad.mul(ad.sub(x, b), x), b)), rand((3, 4), 5))


def test_grad_scale_neg_pow():
    check(lambda x: ad.sum_(ad.scale(ad.neg(ad.pow_scalar(x, 3)), 0.5)), rand((3, 4), 6))


def test_grad_sqrt_exp_log():
    x0 = np.abs(rand((3, 4), 7)) + 1.0
    check(lambda x: ad.sum_(ad.log(ad.add(ad.exp(ad.sqrt(x)), 1.0))), x0)


def test_grad_trig():
    check(lambda x: ad.sum_(ad.mul(ad.sin(x), ad.cos(x))), rand((3, 4), 8))


def test_grad_arcsin_arccos():
    x0 = np.clip(rand((3, 4), 9) * 0.5, -0.9, 0.9)
    check(lambda x: ad.sum_(ad.add(ad.arcsin(x), ad.arccos(x))), x0)
    check(lambda x: ad.sum_(ad.mul(ad.arcsin(x), ad.arccos(x))), x0)


def test_grad_arctan2():
    y0 = rand((3, 4), 10) + 2.0
    x0 = rand((3, 4), 11) + 2.0
    check(lambda x: ad.sum_(ad.arctan2(x, x0)), y0)
    check(lambda x: ad.sum_(ad.arctan2(y0, x)), x0)


def test_grad_relu():
    x0 = rand((3, 4), 12)
    x0[np.abs(x0) < 0.05] += 0.1  # keep away from the kink
    check(lambda x: ad.sum_(ad.mul(ad.relu(x), x)), x0)


def test_grad_clip():
    x0 = rand((3, 4), 13) * 2.0
    x0[np.abs(np.abs(x0) - 1.0) < 0.05] = 0.0  # keep away from clip edges
    check(lambda x: ad.sum_(ad.mul(ad.clip(x, -1.0, 1.0), x)), x0)


def test_grad_where():
    cond = rand((3, 4), 14) > 0
    b = rand((3, 4), 15)
    check(lambda x: ad.sum_(ad.where(cond, ad.mul(x, x), ad.add(x, b))), rand((3, 4), 16))


def test_grad_sum_mean_axes():
    check(lambda x: ad.sum_(ad.mul(ad.sum_(x, axis=0, keepdims=True), ad.mean(x, axis=1, keepdims=True))), rand((3, 4), 17))


def test_grad_softmax():
    check(lambda x: ad.sum_(ad.mul(ad.softmax(x, axis=-1), rand((3, 4), 18))), rand((3, 4), 19))


def test_grad_masked_fill():
    mask = np.zeros((3, 4), dtype=bool)
    mask[:, 2] = True
    w = rand((3, 4), 20)
    check(lambda x: ad.sum_(ad.mul(ad.softmax(ad.masked_fill(x, mask), axis=-1), w)), rand((3, 4), 21))


def test_grad_layer_norm_free_affine():
    w = rand((3, 4), 22)
    check(lambda x: ad.sum_(ad.mul(ad.layer_norm_free_affine(x), w)), rand((3, 4), 23))


# --- structural ops ---------------------------------------------------------


def test_grad_matmul():
    b = rand((4, 5), 24)
    check(lambda x: ad.sum_(ad.mul(ad.matmul(x, b), ad.matmul(x, b))), rand((3, 4), 25))


def test_grad_matmul_batched():
    b = rand((2, 4, 5), 26)
    check(lambda x: ad.sum_(ad.matmul(x, b)), rand((2, 3, 4), 27))


def test_grad_matmul_broadcast_weight():
    w = rand((4, 5), 28)
    check(lambda x: ad.sum_(ad.pow_scalar(ad.matmul(x, w), 2)), rand((2, 3, 4), 29))


def test_grad_transpose_reshape():
    check(
        lambda x: ad.sum_(ad.pow_scalar(ad.reshape(ad.transpose(x, (1, 0)), (2, 6)), 2)),
        rand((3, 4), 30),
    )


def test_grad_getitem_slices():
    check(lambda x: ad.sum_(ad.mul(x[0:2, 1:3], x[1:3, 0:2])), rand((3, 4), 31))


def test_grad_getitem_int_index():
    check(lambda x: ad.sum_(ad.mul(x[..., 1], x[..., 2])), rand((3, 4), 32))


def test_grad_concat():
    def f(x):
        c = ad.concat([x[:, 0:2], ad.mul(x[:, 2:4], 2.0)], axis=1)
        return ad.sum_(ad.mul(c, c))

    check(f, rand((3, 4), 33))


# --- softmax / attention forward values -------------------------------------


def test_softmax_zero_row_uniform():
    out = ad.softmax(Tensor(np.zeros((2, 5))), axis=-1)
    assert np.allclose(out.data, 0.2)


def test_matmul_identity():
    x = rand((3, 3), 34)
    out = ad.matmul(Tensor(x), np.eye(3))
    assert np.allclose(out.data, x)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(3, 4\).*\(3, 5\)"):
        ad.matmul(Tensor(rand((3, 4), 35)), Tensor(rand((3, 5), 36)))


def test_add_shape_error():
    with pytest.raises(ShapeError):
        ad.add(Tensor(rand((3, 4), 37)), Tensor(rand((2, 5), 38)))


# --- tape semantics ----------------------------------------------------------


def test_backward_sum_gives_ones():
    w = Tensor(rand((3, 4), 39))
    tape = Tape()
    tape.watch(w)
    tape.backward(ad.sum_(w))
    assert np.array_equal(w.grad, np.ones((3, 4)))


def test_backward_unreachable_param_gets_zeros():
    w = Tensor(rand((3, 4), 40))
    u = Tensor(rand((2, 2), 41))
    tape = Tape()
    tape.watch(w)
    tape.watch(u)
    tape.backward(ad.sum_(ad.mul(w, w)))
    assert np.array_equal(u.grad, np.zeros((2, 2)))
    assert not np.array_equal(w.grad, np.zeros((3, 4)))


def test_backward_rejects_non_scalar():
    w = Tensor(rand((3, 4), 42))
    tape = Tape()
    tape.watch(w)
    with pytest.raises(ShapeError, match="scalar"):
        tape.backward(ad.mul(w, 2.0))


def test_backward_rejects_foreign_tape():
    w = Tensor(rand((3, 4), 43))
    tape = Tape()
    tape.watch(w)
    loss = ad.sum_(w)
    other = Tape()
    with pytest.raises(ValueError):
        other.backward(loss)


def test_mixed_tapes_rejected():
    a = Tensor(rand((2, 2), 44))
    b = Tensor(rand((2, 2), 45))
    Tape().watch(a)
    Tape().watch(b)
    with pytest.raises(ValueError, match="different tapes"):
        ad.add(a, b)


def test_two_layer_composite_gradient():
    w1 = rand((4, 6), 46)
    w2 = rand((6, 1), 47)
    x0 = rand((2, 4), 48)

    def f(params):
        h = ad.relu(ad.matmul(params["x"], params["w1"]))
        return ad.sum_(ad.matmul(h, params["w2"]))

    report = finite_difference_check(
        f, {"x": Tensor(x0), "w1": Tensor(w1), "w2": Tensor(w2)}, h=1e-5, tol=1e-5
    )
    assert report.passed, repr(report)


def test_fd_check_linear_function_exact():
    w = rand((3, 4), 49)
    report = finite_difference_check(lambda x: ad.sum_(ad.mul(x, w)), Tensor(rand((3, 4), 50)))
    assert report.max_rel < 1e-9


def test_backward_deterministic():
    def run():
        w = Tensor(rand((4, 4), 51))
        tape = Tape()
        tape.watch(w)
        y = ad.sum_(ad.softmax(ad.matmul(w, w), axis=-1))
        tape.backward(y)
        return w.grad.copy()

    assert np.array_equal(run(), run())


def test_ops_do_not_mutate_inputs():
    x0 = rand((3, 4), 52)
    x = Tensor(x0.copy())
    mask = x0 > 0
    for out in [
        ad.add(x, 1.0), ad.mul(x, 2.0), ad.relu(x), ad.softmax(x, -1),
        ad.masked_fill(x, mask), ad.clip(x, -0.5, 0.5), ad.transpose(x, (1, 0)),
        ad.reshape(x, (4, 3)), ad.concat([x, x], axis=0), ad.sum_(x, axis=0),
    ]:
        assert np.array_equal(x.data, x0)


def test_tensor_rejects_more_than_four_dims():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 2, 2, 2, 2)))


def test_stop_gradient_blocks_flow():
    w = Tensor(rand((3, 3), 53))
    tape = Tape()
    tape.watch(w)
    tape.backward(ad.sum_(ad.mul(ad.stop_gradient(w), w)))
    assert np.allclose(w.grad, w.data)  # only the live factor contributes
