import math

import numpy as np
import pytest
import scipy.sparse as sp

from decaf.errors import DecafError, NumericError, ShapeError
from decaf.numerics import (Tape, evaluate_with_gradients, init_adam, adam_step, softmax, softmax_cross_entropy,
                            init_mlp, mlp_on_tape, numerical_gradients, relative_error, as_matrix)


def test_linear_gradient_is_input():
    x = np.array([[1.0], [-2.0], [0.5]])
    tape = Tape()
    w = tape.parameter(np.array([[0.3, 0.1, -0.7]]))
    loss, grads = evaluate_with_gradients(tape, tape.matmul(w, tape.constant(x)))
    assert loss == pytest.approx(0.3 - 0.2 - 0.35)
    np.testing.assert_array_equal(grads[0], x.T)


def test_constant_function_has_zero_gradients():
    tape = Tape()
    tape.parameter(np.ones((2, 3)))
    loss, grads = evaluate_with_gradients(tape, tape.squared_norm(tape.constant([[1.0, 2.0]])))
    assert loss == 5.0
    np.testing.assert_array_equal(grads[0], np.zeros((2, 3)))


def test_non_scalar_loss_rejected():
    tape = Tape()
    w = tape.parameter(np.ones((2, 2)))
    with pytest.raises(ShapeError):
        evaluate_with_gradients(tape, w)


def test_non_finite_value_reports_node():
    tape = Tape()
    tape.constant([[1.0]])
    with pytest.raises(NumericError) as e:
        tape.constant([[np.nan]])
    assert e.value.node == 1


def test_matmul_shape_mismatch():
    tape = Tape()
    with pytest.raises(ShapeError):
        tape.matmul(tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 3))))


def _mlp_loss(x, labels):
    def fn(params):
        tape = Tape()
        p = [tape.parameter(v) for v in params]
        return evaluate_with_gradients(tape, tape.softmax_cross_entropy(mlp_on_tape(tape, p, tape.constant(x)), labels))
    return fn


def test_mlp_cross_entropy_matches_finite_differences():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, (5, 3))
    labels = np.array([0, 1, 2, 1, 0])
    params = init_mlp(rng, 3, 4, 3).parameters()
    fn = _mlp_loss(x, labels)
    _, grads = fn(params)
    numeric = numerical_gradients(lambda ps: fn(ps)[0], params)
    for g, n in zip(grads, numeric):
        assert relative_error(g, n) <= 1e-4


def _composite(labels, propagation):
    """
    A scalar function touching every primitive operation of the tape.
    """
    def fn(params):
        a, b, r, c = params
        tape = Tape()
        a, b, r, c = [tape.parameter(v) for v in (a, b, r, c)]
        h = tape.relu(tape.add_row(tape.matmul(a, b), r))
        h = tape.sub(tape.add(tape.multiply(h, c), a), tape.scale(c, 0.5))
        out = tape.propagate(propagation, h)
        loss = tape.add(tape.softmax_cross_entropy(out, labels), tape.mean_squared_error(out, c))
        loss = tape.add(loss, tape.squared_norm(tape.row_mean(h)))
        return evaluate_with_gradients(tape, loss)
    return fn


@pytest.mark.parametrize("seed", list(range(20)))
def test_all_operations_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    params = [rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (1, 3)),
              rng.uniform(-1, 1, (4, 3))]
    propagation = sp.csr_matrix(rng.uniform(0, 1, (4, 4)) * (rng.random((4, 4)) < 0.6))
    fn = _composite(rng.integers(0, 3, 4), propagation)
    _, grads = fn(params)
    numeric = numerical_gradients(lambda ps: fn(ps)[0], params)
    for g, n in zip(grads, numeric):
        assert relative_error(g, n) <= 1e-4


def test_adam_first_step():
    state = init_adam([np.zeros((1, 1))], learning_rate=1e-3, weight_decay=0.0)
    params, state = adam_step([np.zeros((1, 1))], [np.ones((1, 1))], state)
    assert params[0][0, 0] == pytest.approx(-1e-3, abs=1e-9)
    assert state.step_count == 1


def test_adam_zero_gradient_is_identity():
    rng = np.random.default_rng(1)
    p = [rng.standard_normal((3, 2)), rng.standard_normal((1, 2))]
    state = init_adam(p, weight_decay=0.0)
    for _ in range(3):
        new_p, state = adam_step(p, [np.zeros((3, 2)), np.zeros((1, 2))], state)
        for a, b in zip(p, new_p):
            np.testing.assert_array_equal(a, b)
    assert state.step_count == 3


def test_adam_is_deterministic_and_pure():
    rng = np.random.default_rng(2)
    p = [rng.standard_normal((2, 2))]
    g = [rng.standard_normal((2, 2))]
    state = init_adam(p)
    before = p[0].copy()
    p1, s1 = adam_step(p, g, state)
    p2, s2 = adam_step(p, g, state)
    np.testing.assert_array_equal(p1[0], p2[0])
    np.testing.assert_array_equal(s1.second_moment[0], s2.second_moment[0])
    np.testing.assert_array_equal(p[0], before)
    assert state.step_count == 0


def test_adam_weight_decay_is_coupled():
    state = init_adam([np.ones((1, 1))], learning_rate=0.1, weight_decay=0.5)
    _, state = adam_step([np.ones((1, 1))], [np.zeros((1, 1))], state)
    # the decay term enters the moments like a gradient
    assert state.first_moment[0][0, 0] == pytest.approx(0.1 * 0.5)


def test_adam_shape_mismatch():
    state = init_adam([np.zeros((2, 2))])
    with pytest.raises(ShapeError):
        adam_step([np.zeros((2, 2))], [np.zeros((2, 3))], state)


def test_cross_entropy_examples():
    assert softmax_cross_entropy(np.zeros((3, 4)), [0, 1, 3]) == pytest.approx(math.log(4))
    assert softmax_cross_entropy([[1.0, 0.0]], [0]) == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-4)
    assert softmax_cross_entropy([[1000.0, 0.0]], [0]) < 1e-6


def test_cross_entropy_label_out_of_range():
    with pytest.raises(DecafError):
        softmax_cross_entropy(np.zeros((2, 3)), [0, 3])


def test_softmax_rows_sum_to_one():
    logits = np.random.default_rng(4).uniform(-50, 50, (10, 6))
    np.testing.assert_allclose(softmax(logits).sum(axis=1), np.ones(10), atol=1e-9)


def test_mlp_forward_matches_tape():
    rng = np.random.default_rng(8)
    mlp = init_mlp(rng, 3, 5, 2)
    x = rng.standard_normal((4, 3))
    tape = Tape()
    out = mlp_on_tape(tape, [tape.constant(p) for p in mlp.parameters()], tape.constant(x))
    np.testing.assert_allclose(tape.value(out), mlp.forward(x), atol=1e-12)


def test_as_matrix_shapes():
    assert as_matrix(2.0).shape == (1, 1)
    assert as_matrix([1.0, 2.0]).shape == (1, 2)
    with pytest.raises(ShapeError):
        as_matrix(np.zeros((2, 2, 2)))


def test_zero_output_mlp_returns_its_bias():
    rng = np.random.default_rng(3)
    mlp = init_mlp(rng, 3, 5, 2, zero_output=True, output_bias=[0.5, -1.0])
    out = mlp.forward(rng.standard_normal((6, 3)))
    np.testing.assert_array_equal(out, np.tile([0.5, -1.0], (6, 1)))
    assert np.any(mlp.w1 != 0)
