import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import nuclass.autodiff as ad
from nuclass.autodiff import ShapeError, Tape, Tensor, gradcheck

TOL = 1e-4


def away_from(x, points, gap=1e-2):
    """Nudge entries off activation kinks so central differences stay one-sided-free."""
    x = x.copy()
    for p in points:
        close = np.abs(x - p) < gap
        x[close] = p + gap * np.sign(x[close] - p + 1e-12) * 2
    return x


@pytest.mark.parametrize("name,fn,shapes", [
    ("add", lambda a, b: ad.sum_all(ad.mul(ad.add(a, b), ad.add(a, b))), [(3, 4), (4,)]),
    ("sub", lambda a, b: ad.sum_all(ad.mul(ad.sub(a, b), a)), [(3, 4), (3, 1)]),
    ("mul", lambda a, b: ad.sum_all(ad.mul(a, b)), [(2, 3), (2, 3)]),
    ("matmul", lambda a, b: ad.sum_all(ad.mul(ad.matmul(a, b), ad.matmul(a, b))), [(3, 4), (4, 2)]),
    ("mean", lambda a: ad.mean_all(ad.mul(a, a)), [(5, 2)]),
    ("reshape", lambda a: ad.sum_all(ad.mul(ad.reshape(a, (6,)), Tensor(np.arange(6.0)))), [(2, 3)]),
    ("take", lambda a: ad.sum_all(ad.mul(ad.take(a, 1, 3), ad.take(a, 1, 3))), [(4, 3)]),
    ("concat", lambda a, b: ad.sum_all(ad.mul(ad.concat([a, b], 1), ad.concat([b, a], 1))),
     [(2, 3, 2, 2), (2, 3, 2, 2)]),
    ("sigmoid", lambda a: ad.sum_all(ad.mul(ad.sigmoid(a), a)), [(3, 3)]),
    ("dense", lambda x, w, b: ad.sum_all(ad.mul(ad.dense(x, w, b), ad.dense(x, w, b))),
     [(3, 4), (4, 5), (5,)]),
    ("gap", lambda x: ad.sum_all(ad.mul(ad.global_avg_pool(x), ad.global_avg_pool(x))),
     [(2, 3, 4, 4)]),
    ("scale_channels", lambda x, g: ad.sum_all(ad.mul(ad.scale_channels(x, g), x)),
     [(2, 3, 4, 4), (2, 3)]),
    ("se_block", lambda x, w1, b1, w2, b2: ad.sum_all(ad.mul(ad.se_block(x, w1, b1, w2, b2), x)),
     [(2, 4, 3, 3), (4, 2), (2,), (2, 4), (4,)]),
])
def test_primitive_gradients(name, fn, shapes, rng):
    arrays = [rng.normal(size=s) for s in shapes]
    assert gradcheck(fn, arrays) < TOL, name


@pytest.mark.parametrize("act,kinks", [(ad.relu6, (0.0, 6.0)), (ad.hard_swish, (-3.0, 3.0))])
def test_activation_gradients(act, kinks, rng):
    x = away_from(rng.uniform(-8, 8, size=(4, 5)), kinks)
    assert gradcheck(lambda a: ad.sum_all(ad.mul(act(a), a)), [x]) < TOL


def test_kink_subgradients():
    x = Tensor(np.array([0.0, 6.0, -3.0, 3.0]), requires_grad=True)
    with Tape() as tape:
        y = ad.sum_all(ad.relu6(x))
    (g,) = ad.backward(tape, y, wrt=[x])
    assert g[0] == 0.0 and g[1] == 0.0
    with Tape() as tape:
        y = ad.sum_all(ad.hard_swish(x))
    (g,) = ad.backward(tape, y, wrt=[x])
    assert g[2] == 0.0 and g[3] == 1.0


def test_softmax_cross_entropy_gradient(rng):
    y = np.array([0, 2, 1, 2])
    assert gradcheck(lambda z: ad.softmax_cross_entropy(z, y), [rng.normal(size=(4, 3))]) < TOL


def test_softmax_cross_entropy_rejects_bad_labels():
    with pytest.raises(ValueError):
        ad.softmax_cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


@pytest.mark.parametrize("stride,padding,groups,cin,cout,k", [
    (1, 0, 1, 3, 4, 3), (2, 1, 1, 3, 4, 3), (1, 1, 3, 3, 3, 3), (2, 2, 4, 4, 4, 5),
    (1, 0, 1, 5, 2, 1), (2, 0, 1, 2, 3, 1), (1, 1, 2, 4, 6, 3),
])
def test_conv_matches_direct_and_gradients(stride, padding, groups, cin, cout, k, rng):
    x = rng.normal(size=(2, cin, 7, 7))
    w = rng.normal(size=(cout, cin // groups, k, k))
    b = rng.normal(size=(cout,))
    fast = ad.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, padding, groups).data
    ref = ad.conv2d_direct(x, w, b, stride, padding, groups)
    assert np.allclose(fast, ref, atol=1e-12, rtol=1e-12)

    def f(x_, w_, b_):
        out = ad.conv2d(x_, w_, b_, stride, padding, groups)
        return ad.sum_all(ad.mul(out, out))

    assert gradcheck(f, [x, w, b]) < TOL


def test_conv_shape_errors(rng):
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(rng.normal(size=(1, 3, 5, 5))), Tensor(rng.normal(size=(2, 2, 3, 3))))
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(rng.normal(size=(1, 2, 2, 2))), Tensor(rng.normal(size=(2, 2, 5, 5))))


def random_composition(rng, depth=5):
    """A random chain of depth ``depth`` over smooth primitives."""
    ops = [
        lambda h, p: ad.add(h, p["b"]),
        lambda h, p: ad.mul(h, p["s"]),
        lambda h, p: ad.sigmoid(h),
        lambda h, p: ad.matmul(h, p["W"]),
        lambda h, p: ad.sub(ad.mul(h, h), p["b"]),
    ]
    return [ops[i] for i in rng.integers(0, len(ops), size=depth)]


@given(st.integers(0, 10_000))
def test_depth5_random_composition(seed):
    rng = np.random.default_rng(seed)
    chain = random_composition(rng)

    def f(x, W, b, s):
        p = {"W": W, "b": b, "s": s}
        h = x
        for op in chain:
            h = op(h, p)
        return ad.sum_all(ad.mul(h, h))

    arrays = [rng.normal(size=(3, 4)), rng.normal(size=(4, 4)) * 0.5,
              rng.normal(size=(4,)), rng.normal(size=(3, 4))]
    assert gradcheck(f, arrays) < TOL


def test_gradient_accumulates_over_reuse():
    x = Tensor(np.array([2.0, -1.0]), requires_grad=True)
    with Tape() as tape:
        y = ad.sum_all(ad.add(ad.mul(x, x), x))
    (g,) = ad.backward(tape, y, wrt=[x])
    assert np.array_equal(g, 2 * x.data + 1)


def test_unreached_tensor_gets_zero_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    z = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        y = ad.sum_all(x)
    gx, gz = ad.backward(tape, y, wrt=[x, z])
    assert np.array_equal(gx, np.ones(3)) and np.array_equal(gz, np.zeros(2))


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ad.mul(x, x)
    with pytest.raises(ShapeError):
        ad.backward(tape, y)


def test_no_tape_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ad.mul(x, x)
    assert y.parents == () or not y.parents


def test_dropout_inverted_scaling_and_eval_identity(rng):
    x = Tensor(np.ones((2000, 10)))
    out = ad.dropout(x, 0.2, np.random.default_rng(0), training=True).data
    kept = out != 0
    assert np.allclose(out[kept], 1 / 0.8)
    assert abs(kept.mean() - 0.8) < 0.01
    assert ad.dropout(x, 0.2, np.random.default_rng(0), training=False) is x


def test_dropout_gradient_uses_same_mask():
    x = Tensor(np.ones((4, 6)), requires_grad=True)
    with Tape() as tape:
        y = ad.dropout(x, 0.5, np.random.default_rng(1), training=True)
        loss = ad.sum_all(y)
    (g,) = ad.backward(tape, loss, wrt=[x])
    assert np.array_equal(g, y.data)


def test_adam_first_step_moves_by_lr():
    p = Tensor(np.array([1.0, -2.0, 3.0]))
    state = ad.AdamState(lr=0.1)
    ad.adam_step([p], [np.array([0.5, -4.0, 1e-3])], state)
    # first bias-corrected step is lr * g / (|g| + eps) ~ lr * sign(g)
    assert np.allclose(p.data, [0.9, -1.9, 2.9], atol=1e-4)
    assert state.t == 1


def test_adam_defaults():
    s = ad.AdamState()
    assert (s.lr, s.beta1, s.beta2, s.eps) == (1e-6, 0.9, 0.999, 1e-8)


def test_adam_minimizes_quadratic():
    p = Tensor(np.array([5.0, -3.0]), requires_grad=True)
    state = ad.AdamState(lr=0.1)
    for _ in range(500):
        with Tape() as tape:
            loss = ad.sum_all(ad.mul(p, p))
        ad.adam_step([p], ad.backward(tape, loss, wrt=[p]), state)
    assert np.all(np.abs(p.data) < 1e-2)


def test_float32_opt_in_close_to_float64(rng):
    x = rng.normal(size=(2, 3, 6, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    out64 = ad.conv2d(Tensor(x), Tensor(w), padding=1).data
    out32 = ad.conv2d(Tensor(x.astype(np.float32)), Tensor(w.astype(np.float32)), padding=1).data
    assert out32.dtype == np.float32
    assert np.allclose(out32, out64, rtol=1e-4, atol=1e-4)
