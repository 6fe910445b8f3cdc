import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from weatherformer.autodiff import (
    Adam,
    AdamState,
    CheckpointError,
    LrSchedule,
    NonDeterministicError,
    NonFiniteError,
    Tape,
    TapeError,
    Tensor,
    adam_step,
    backward,
    forward_op,
    grad_check,
    load_checkpoint,
    lr_at,
    no_grad,
    ops,
    parameter,
    save_checkpoint,
)


def _p(rng, *shape, scale=1.0):
    return parameter(rng.normal(size=shape) * scale, dtype=np.float64)


def _scalar(t):
    """Reduce to a scalar with distinct weights per entry so that every
    gradient coordinate is exercised."""
    w = np.linspace(0.3, 1.7, t.size).reshape(t.shape)
    return ops.sum(t * w)


class TestForwardShapes:
    def test_matmul_shape(self, rng):
        a = Tensor(rng.normal(size=(2, 3)))
        b = Tensor(rng.normal(size=(3, 4)))
        assert forward_op("matmul", a, b).shape == (2, 4)

    def test_softmax_uniform(self):
        out = ops.softmax(Tensor(np.zeros(3)), axis=-1)
        np.testing.assert_allclose(out.data, np.full(3, 1 / 3))

    def test_layer_norm_constant_row_is_zero(self):
        out = ops.layer_norm(Tensor(np.full((2, 5), 7.0)))
        assert np.all(out.data == 0)

    def test_unsupported_kind(self):
        with pytest.raises(ValueError, match="unsupported"):
            forward_op("fft", Tensor(np.ones(2)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))

    def test_non_finite_output_raises(self):
        with pytest.raises(NonFiniteError):
            ops.mul(Tensor(np.array([1e308])), 10.0)

    def test_zero_extent_rejected(self):
        with pytest.raises(ValueError):
            Tensor(np.zeros((0, 3)))

    def test_masked_softmax_exact_zero(self, rng):
        x = Tensor(rng.normal(size=(4, 6)))
        mask = np.ones((4, 6), dtype=bool)
        mask[:, 4:] = False
        out = ops.softmax(x, axis=-1, mask=mask)
        assert np.all(out.data[:, 4:] == 0.0)
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_masked_softmax_empty_row(self):
        with pytest.raises(ValueError, match="empty row"):
            ops.softmax(Tensor(np.ones((1, 3))), mask=np.zeros((1, 3), bool))

    def test_masked_softmax_ignores_masked_values(self, rng):
        x = rng.normal(size=(3, 5))
        mask = np.array([True, True, False, True, False])
        y = x.copy()
        y[:, ~mask] = 1e6
        a = ops.softmax(Tensor(x), mask=mask).data
        b = ops.softmax(Tensor(y), mask=mask).data
        assert np.array_equal(a, b)


class TestBackward:
    def test_linear_case(self, f64):
        x = np.array([1.0, -2.0, 3.0])
        w = parameter(np.array([0.5, 0.1, -0.3]))
        with Tape() as tape:
            loss = ops.sum(w * x)
        grads = backward(tape, loss)
        np.testing.assert_array_equal(grads[w], x)
        np.testing.assert_array_equal(w.grad, x)

    def test_mse_square(self, f64):
        w = parameter(np.array([2.0]))
        with Tape() as tape:
            loss = ops.mse(w, np.zeros(1))
        assert backward(tape, loss)[w][0] == pytest.approx(4.0)

    def test_loss_must_be_scalar(self, f64):
        w = parameter(np.ones(3))
        with Tape() as tape:
            y = w * 2.0
        with pytest.raises(ValueError, match="scalar"):
            backward(tape, y)

    def test_tape_consumed(self, f64):
        w = parameter(np.ones(3))
        with Tape() as tape:
            loss = ops.sum(w)
        backward(tape, loss)
        with pytest.raises(TapeError):
            backward(tape, loss)

    def test_loss_from_other_tape(self, f64):
        w = parameter(np.ones(3))
        with Tape():
            loss = ops.sum(w)
        with Tape() as other:
            ops.sum(w)
        with pytest.raises(TapeError):
            backward(other, loss)

    def test_unused_parameter_gets_zero(self, f64):
        w = parameter(np.ones(3))
        v = parameter(np.ones(2))
        with Tape() as tape:
            loss = ops.sum(w) + 0.0 * ops.sum(v)
        grads = backward(tape, loss)
        np.testing.assert_array_equal(grads[v], np.zeros(2))

    def test_tape_topological_and_single_visit(self, f64):
        w = parameter(np.ones(3))
        with Tape() as tape:
            a = w * 2.0
            b = a + w
            loss = ops.sum(b * a)
        seen = set()
        for op in tape.ops:
            for t in op.inputs:
                if not t.is_leaf:
                    assert t.id in seen
            seen.add(op.output_id)
        assert len(seen) == len(tape.ops)
        # d/dw sum((3w)(2w)) = 12 w
        np.testing.assert_allclose(backward(tape, loss)[w], 12.0 * np.ones(3))

    def test_no_grad_records_nothing(self, f64):
        w = parameter(np.ones(3))
        with Tape() as tape:
            with no_grad():
                ops.sum(w * 2.0)
        assert len(tape) == 0

    def test_no_tape_no_recording(self):
        w = parameter(np.ones(2))
        assert not (w * 2.0).requires_grad


def _unary(name, fn, shape=(3, 4)):
    def build(rng):
        x = _p(rng, *shape)
        return [x], lambda: _scalar(fn(x))
    return name, build


def _binary(name, fn, sa, sb):
    def build(rng):
        a, b = _p(rng, *sa), _p(rng, *sb)
        return [a, b], lambda: _scalar(fn(a, b))
    return name, build


def _attention(rng):
    from weatherformer.nn import MultiHeadAttention
    mha = MultiHeadAttention(8, 2, rng)
    x = _p(rng, 2, 5, 8)
    mask = np.ones((2, 5), bool)
    mask[1, 3:] = False
    return mha.parameters() + [x], lambda: _scalar(mha(x, mask))


def _lstm(rng):
    x, h, c = _p(rng, 2, 3), _p(rng, 2, 4), _p(rng, 2, 4)
    wi, wh, b = _p(rng, 3, 16, scale=0.5), _p(rng, 4, 16, scale=0.5), _p(rng, 16)
    return [x, h, c, wi, wh, b], lambda: _scalar(ops.lstm_cell(x, h, c, wi, wh, b))


def _conv(rng):
    x, w, b = _p(rng, 2, 3, 7), _p(rng, 4, 3, 3), _p(rng, 4)
    return [x, w, b], lambda: _scalar(ops.conv1d(x, w, b, padding=1))


def _layer_norm(rng):
    x, g, b = _p(rng, 3, 6), _p(rng, 6), _p(rng, 6)
    return [x, g, b], lambda: _scalar(ops.layer_norm(x, g, b))


def _softmax_masked(rng):
    x = _p(rng, 3, 5)
    mask = rng.random((3, 5)) < 0.7
    mask[:, 0] = True
    return [x], lambda: _scalar(ops.softmax(x, axis=-1, mask=mask))


def _embedding(rng):
    table = _p(rng, 6, 4)
    return [table], lambda: _scalar(ops.embedding(table, np.array([[0, 3], [3, 5]])))


def _mse(rng):
    x = _p(rng, 4, 3)
    target = rng.normal(size=(4, 3))
    w = rng.random((4, 3)) < 0.6
    w[0, 0] = True
    return [x], lambda: ops.mse(x, target, w)


OP_CASES = [
    _binary("add_broadcast", ops.add, (3, 4), (4,)),
    _binary("sub", ops.sub, (3, 4), (3, 1)),
    _binary("mul_broadcast", ops.mul, (2, 3, 4), (1, 4)),
    _binary("matmul_batched", ops.matmul, (2, 3, 4), (4, 5)),
    _unary("sum_axis", lambda x: ops.sum(x, axis=0)),
    _unary("mean", lambda x: ops.mean(x, axis=1, keepdims=True)),
    _unary("reshape", lambda x: ops.reshape(x, (4, 3))),
    _unary("transpose", lambda x: ops.transpose(x, (1, 0))),
    _unary("getitem", lambda x: x[1:, ::2]),
    _unary("concat", lambda x: ops.concat([x, x * 2.0], axis=0)),
    _unary("relu", ops.relu),
    _unary("gelu", ops.gelu),
    _unary("sigmoid", ops.sigmoid),
    _unary("tanh", ops.tanh),
    _unary("softmax", lambda x: ops.softmax(x, axis=-1)),
    _unary("masked_fill", lambda x: ops.masked_fill(x, np.eye(3, 4, dtype=bool))),
    ("softmax_masked", _softmax_masked),
    ("layer_norm", _layer_norm),
    ("embedding", _embedding),
    ("conv1d", _conv),
    ("lstm_cell", _lstm),
    ("mse_weighted", _mse),
]


class TestGradientFidelity:
    @pytest.mark.parametrize("name,build", OP_CASES, ids=[c[0] for c in OP_CASES])
    def test_op_matches_finite_differences(self, name, build, f64):
        params, f = build(np.random.default_rng(7))
        assert grad_check(f, params, n_samples=None) < 1e-5

    def test_attention_layer(self, f64):
        params, f = _attention(np.random.default_rng(3))
        assert grad_check(f, params, n_samples=20, rng=np.random.default_rng(0)) < 1e-4

    def test_embedding_row_tight(self, f64):
        params, f = _embedding(np.random.default_rng(4))
        assert grad_check(f, params, n_samples=None) < 1e-6

    def test_square_function(self, f64):
        w = parameter(np.array([3.0]))
        assert grad_check(lambda: ops.sum(w * w), [w], n_samples=None) < 1e-8

    def test_nondeterministic_detected(self, f64):
        w = parameter(np.array([1.0]))
        state = {"n": 0}

        def f():
            state["n"] += 1
            return ops.sum(w * float(state["n"]))

        with pytest.raises(NonDeterministicError):
            grad_check(f, [w])

    def test_requires_float64(self):
        w = parameter(np.ones(2), dtype=np.float32)
        with pytest.raises(TypeError):
            grad_check(lambda: ops.sum(w), [w])

    def test_relative_error_formula(self, f64):
        """Analytic gradient deliberately off by 1% -> reported error 1/101."""
        w = parameter(np.array([2.0]))

        def f():
            def back(g):
                return (g * 2 * w.data * 1.01,)
            from weatherformer.autodiff.tensor import make_result
            return make_result("square", np.sum(w.data ** 2), (w,), back)

        assert grad_check(f, [w], n_samples=None) == pytest.approx(0.01 / 1.01, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(a=hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=4),
                    elements=st.floats(-3, 3)),
       data=st.data())
def test_broadcast_gradients_have_input_shapes(a, data):
    b_shape = data.draw(hnp.broadcastable_shapes(a.shape, max_dims=3))
    b = data.draw(hnp.arrays(np.float64, b_shape, elements=st.floats(-3, 3)))
    if 0 in b_shape:
        return
    pa, pb = parameter(a, dtype=np.float64), parameter(b, dtype=np.float64)
    with Tape() as tape:
        loss = ops.sum(ops.mul(pa, pb) + pa)
    g = backward(tape, loss)
    assert g[pa].shape == a.shape and g[pb].shape == b.shape
    expect_b = np.broadcast_to(a, np.broadcast_shapes(a.shape, b.shape))
    np.testing.assert_allclose(g[pb], ops.unbroadcast(np.array(expect_b), b.shape), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(x=hnp.arrays(np.float64, (3, 7), elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(x):
    out = ops.softmax(Tensor(x), axis=-1).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(x=hnp.arrays(np.float64, (4, 9), elements=st.floats(-1e3, 1e3)))
def test_layer_norm_row_mean_zero(x):
    out = ops.layer_norm(Tensor(x)).data
    assert np.abs(out.mean(axis=-1)).max() < 1e-9


class TestAdam:
    def test_zero_gradient_is_fixed_point(self):
        w = parameter(np.array([1.0, -2.0]), dtype=np.float64)
        state = AdamState.zeros_like([w])
        for _ in range(3):
            adam_step(state, [w], [np.zeros(2)], 0.1)
        np.testing.assert_array_equal(w.data, [1.0, -2.0])
        assert state.t == 3

    def test_first_step_is_signed_lr(self):
        w = parameter(np.array([1.0, 1.0, 1.0]), dtype=np.float64)
        state = AdamState.zeros_like([w])
        adam_step(state, [w], [np.array([0.3, -4.0, 1e3])], 0.01)
        np.testing.assert_allclose(w.data, 1.0 - 0.01 * np.array([1, -1, 1]), atol=1e-9)

    def test_two_step_hand_recursion(self):
        g1, g2, lr = 0.5, -0.2, 0.1
        m1, v1 = 0.1 * g1, 0.001 * g1 ** 2
        m2, v2 = 0.9 * m1 + 0.1 * g2, 0.999 * v1 + 0.001 * g2 ** 2
        step1 = lr * (m1 / 0.1) / (math.sqrt(v1 / 0.001) + 1e-8)
        step2 = lr * (m2 / (1 - 0.9 ** 2)) / (math.sqrt(v2 / (1 - 0.999 ** 2)) + 1e-8)
        w = parameter(np.array([0.0]), dtype=np.float64)
        state = AdamState.zeros_like([w])
        adam_step(state, [w], [np.array([g1])], lr)
        adam_step(state, [w], [np.array([g2])], lr)
        assert w.data[0] == pytest.approx(-step1 - step2, abs=1e-15)

    def test_quadratic_converges(self):
        w = parameter(np.array([0.0]), dtype=np.float64)
        opt = Adam([w])
        for _ in range(100):
            with Tape() as tape:
                d = w - 5.0
                loss = ops.sum(d * d)
            opt.step(backward(tape, loss), 0.1)
        assert abs(w.data[0] - 5.0) < 0.5

    def test_shape_mismatch(self):
        w = parameter(np.ones(2))
        with pytest.raises(ValueError):
            adam_step(AdamState.zeros_like([w]), [w], [np.ones(3)], 0.1)

    def test_non_finite_gradient(self):
        w = parameter(np.ones(2))
        with pytest.raises(NonFiniteError):
            adam_step(AdamState.zeros_like([w]), [w], [np.array([1.0, np.nan])], 0.1)


class TestSchedule:
    @pytest.mark.parametrize("epoch,expected", [
        (0, 5e-5), (4, 2.5e-4), (9, 5e-4), (10, 5e-4), (11, 5e-4 * 0.99), (20, 5e-4 * 0.99 ** 10),
    ])
    def test_examples(self, epoch, expected):
        assert lr_at(LrSchedule(5e-4, 10, 0.99), epoch) == pytest.approx(expected, rel=1e-12)

    def test_epoch_20_value(self):
        assert LrSchedule(5e-4, 10, 0.99).lr_at(20) == pytest.approx(4.522e-4, abs=1e-7)

    def test_no_warmup(self):
        assert lr_at(LrSchedule(1e-3, 0, 0.5), 2) == pytest.approx(2.5e-4)

    @pytest.mark.parametrize("kwargs", [dict(base_lr=0), dict(base_lr=1e-3, warmup_epochs=-1),
                                        dict(base_lr=1e-3, decay_factor=0), dict(base_lr=1e-3, decay_factor=1.5)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            LrSchedule(**kwargs)

    def test_negative_epoch(self):
        with pytest.raises(ValueError):
            lr_at(LrSchedule(1e-3), -1)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        params = {"a.weight": rng.normal(size=(3, 4)).astype(np.float32), "b": np.arange(5.0)}
        path = save_checkpoint(tmp_path / "m.wfck", params, {"d_model": 16}, {"note": "x"})
        loaded, config, extra = load_checkpoint(path)
        assert config == {"d_model": 16} and extra == {"note": "x"}
        for k, v in params.items():
            assert loaded[k].dtype == v.dtype
            np.testing.assert_array_equal(loaded[k], v)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.wfck"
        p.write_bytes(b"NOPE" + b"\0" * 20)
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_truncated(self, tmp_path):
        path = save_checkpoint(tmp_path / "m.wfck", {"w": np.ones(100)})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
