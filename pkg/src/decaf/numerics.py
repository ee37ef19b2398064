"""
Dense matrix helpers, a reverse-mode differentiation tape and the Adam optimizer.

Matrices are 2-D numpy arrays of 64-bit floats; scalars on the tape are 1x1 matrices.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Callable, Optional, Any

import numpy as np

from decaf.errors import DecafError, NumericError, ShapeError
from decaf.logging import LoggableObject

Matrix = np.ndarray

LOG_CLAMP = 1e-12
""" lower bound for probabilities before taking the log """

OP_CONSTANT = "constant"
OP_PARAMETER = "parameter"
OP_MATMUL = "matmul"
OP_ADD = "add"
OP_SUB = "sub"
OP_ADD_ROW = "add_row"
OP_MULTIPLY = "multiply"
OP_SCALE = "scale"
OP_RELU = "relu"
OP_PROPAGATE = "propagate"
OP_SOFTMAX_CE = "softmax_cross_entropy"
OP_MSE = "mean_squared_error"
OP_SQUARED_NORM = "squared_norm"
OP_ROW_MEAN = "row_mean"


def as_matrix(value: Any) -> Matrix:
    """
    Turns the value into a 2-D float64 array (copy).

    :param value: scalar, sequence or array
    :return: the matrix
    :rtype: np.ndarray
    """
    result = np.array(value, dtype=np.float64)
    if result.ndim == 0:
        result = result.reshape((1, 1))
    elif result.ndim == 1:
        result = result.reshape((1, -1))
    elif result.ndim > 2:
        raise ShapeError("Expected at most 2 dimensions, got: %s" % str(result.shape))
    return result


def check_labels(labels: Sequence[int], num_classes: int) -> np.ndarray:
    """
    Validates the class labels.

    :param labels: the labels to check
    :param num_classes: the number of classes
    :type num_classes: int
    :return: the labels as int64 array
    :rtype: np.ndarray
    """
    result = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(result) > 0 and (result.min() < 0 or result.max() >= num_classes):
        raise DecafError("Labels must lie in [0, %d), got range [%d, %d]" % (num_classes, result.min(), result.max()))
    return result


def softmax(logits: Matrix) -> Matrix:
    """
    Row-wise softmax, stabilized by subtracting the row maximum.

    :param logits: the n x k logits
    :type logits: np.ndarray
    :return: the probabilities
    :rtype: np.ndarray
    """
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Matrix, labels: Sequence[int]) -> float:
    """
    Mean over rows of -log softmax(logits)[label].

    :param logits: the n x k logits
    :type logits: np.ndarray
    :param labels: the true classes
    :return: the mean loss
    :rtype: float
    """
    logits = as_matrix(logits)
    labels = check_labels(labels, logits.shape[1])
    if len(labels) != logits.shape[0]:
        raise ShapeError("Got %d labels for %d rows" % (len(labels), logits.shape[0]))
    picked = softmax(logits)[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(picked, LOG_CLAMP))))


@dataclass
class _Node:
    op: str
    inputs: Tuple[int, ...]
    value: Matrix
    extra: Any = None


class Tape(LoggableObject):
    """
    Records primitive operations in evaluation order so that gradients can be
    obtained with a single reverse sweep. Node indices are returned by every
    operation and serve as handles for later operations.
    """

    def __init__(self):
        """
        Initializes the empty tape.
        """
        self.nodes = []
        self.parameter_indices = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, op: str, inputs: Sequence[int], value: Matrix, extra: Any = None) -> int:
        """
        Appends a node.

        :param op: the operation kind
        :type op: str
        :param inputs: the indices of the input nodes
        :param value: the output of the operation
        :type value: np.ndarray
        :param extra: cached data needed by the backward pass
        :return: the index of the new node
        :rtype: int
        """
        index = len(self.nodes)
        for i in inputs:
            if (i < 0) or (i >= index):
                raise DecafError("Input %d of %s does not precede node %d" % (i, op, index))
        if not np.all(np.isfinite(value)):
            raise NumericError("Non-finite output of %s" % op, index)
        self.nodes.append(_Node(op, tuple(inputs), value, extra))
        return index

    def value(self, index: int) -> Matrix:
        """
        Returns the cached output of the node.

        :param index: the node index
        :type index: int
        :return: the value
        :rtype: np.ndarray
        """
        return self.nodes[index].value

    def _shape(self, index: int) -> Tuple[int, int]:
        return self.nodes[index].value.shape

    def constant(self, value: Any) -> int:
        """
        Adds a non-trainable input.

        :param value: the value
        :return: the node index
        :rtype: int
        """
        return self._record(OP_CONSTANT, (), as_matrix(value))

    def parameter(self, value: Any) -> int:
        """
        Adds a trainable input.

        :param value: the initial value
        :return: the node index
        :rtype: int
        """
        index = self._record(OP_PARAMETER, (), as_matrix(value))
        self.parameter_indices.append(index)
        return index

    def matmul(self, a: int, b: int) -> int:
        sa, sb = self._shape(a), self._shape(b)
        if sa[1] != sb[0]:
            raise ShapeError("matmul: %s x %s" % (str(sa), str(sb)))
        return self._record(OP_MATMUL, (a, b), self.value(a) @ self.value(b))

    def _same_shape(self, op: str, a: int, b: int):
        if self._shape(a) != self._shape(b):
            raise ShapeError("%s: %s vs %s" % (op, str(self._shape(a)), str(self._shape(b))))

    def add(self, a: int, b: int) -> int:
        self._same_shape(OP_ADD, a, b)
        return self._record(OP_ADD, (a, b), self.value(a) + self.value(b))

    def sub(self, a: int, b: int) -> int:
        self._same_shape(OP_SUB, a, b)
        return self._record(OP_SUB, (a, b), self.value(a) - self.value(b))

    def add_row(self, a: int, row: int) -> int:
        """
        Adds the 1 x m row to every row of the n x m matrix.
        """
        sa, sr = self._shape(a), self._shape(row)
        if (sr[0] != 1) or (sr[1] != sa[1]):
            raise ShapeError("add_row: %s + %s" % (str(sa), str(sr)))
        return self._record(OP_ADD_ROW, (a, row), self.value(a) + self.value(row))

    def multiply(self, a: int, b: int) -> int:
        self._same_shape(OP_MULTIPLY, a, b)
        return self._record(OP_MULTIPLY, (a, b), self.value(a) * self.value(b))

    def scale(self, a: int, factor: float) -> int:
        return self._record(OP_SCALE, (a,), self.value(a) * factor, extra=float(factor))

    def relu(self, a: int) -> int:
        return self._record(OP_RELU, (a,), np.maximum(self.value(a), 0.0))

    def propagate(self, matrix, a: int) -> int:
        """
        Left-multiplies the node with a constant (sparse or dense) n x n matrix.

        :param matrix: the constant propagation matrix
        :param a: the node to propagate
        :type a: int
        :return: the node index
        :rtype: int
        """
        if matrix.shape[1] != self._shape(a)[0]:
            raise ShapeError("propagate: %s x %s" % (str(matrix.shape), str(self._shape(a))))
        return self._record(OP_PROPAGATE, (a,), np.asarray(matrix @ self.value(a)), extra=matrix)

    def softmax_cross_entropy(self, logits: int, labels: Sequence[int]) -> int:
        """
        Mean softmax cross-entropy of the logits node against fixed labels.
        """
        n, k = self._shape(logits)
        labels = check_labels(labels, k)
        if len(labels) != n:
            raise ShapeError("softmax_cross_entropy: %d labels for %d rows" % (len(labels), n))
        probs = softmax(self.value(logits))
        picked = probs[np.arange(n), labels]
        loss = np.mean(-np.log(np.maximum(picked, LOG_CLAMP)))
        return self._record(OP_SOFTMAX_CE, (logits,), as_matrix(loss), extra=(probs, labels))

    def mean_squared_error(self, a: int, b: int) -> int:
        """
        Mean over rows of the squared L2 distance between corresponding rows.
        """
        self._same_shape(OP_MSE, a, b)
        diff = self.value(a) - self.value(b)
        loss = np.sum(diff * diff) / diff.shape[0]
        return self._record(OP_MSE, (a, b), as_matrix(loss), extra=diff)

    def squared_norm(self, a: int) -> int:
        v = self.value(a)
        return self._record(OP_SQUARED_NORM, (a,), as_matrix(np.sum(v * v)))

    def row_mean(self, a: int) -> int:
        return self._record(OP_ROW_MEAN, (a,), self.value(a).mean(axis=0, keepdims=True))

    def _input_gradients(self, node: _Node, grad: Matrix) -> List[Matrix]:
        """
        Computes the vector-Jacobian products for the inputs of the node.
        """
        op = node.op
        vals = [self.nodes[i].value for i in node.inputs]
        if op == OP_MATMUL:
            return [grad @ vals[1].T, vals[0].T @ grad]
        if op == OP_ADD:
            return [grad, grad]
        if op == OP_SUB:
            return [grad, -grad]
        if op == OP_ADD_ROW:
            return [grad, grad.sum(axis=0, keepdims=True)]
        if op == OP_MULTIPLY:
            return [grad * vals[1], grad * vals[0]]
        if op == OP_SCALE:
            return [grad * node.extra]
        if op == OP_RELU:
            return [grad * (vals[0] > 0)]
        if op == OP_PROPAGATE:
            return [np.asarray(node.extra.T @ grad)]
        if op == OP_SOFTMAX_CE:
            probs, labels = node.extra
            delta = probs.copy()
            delta[np.arange(len(labels)), labels] -= 1.0
            return [delta * (grad[0, 0] / len(labels))]
        if op == OP_MSE:
            diff = node.extra
            g = diff * (2.0 * grad[0, 0] / diff.shape[0])
            return [g, -g]
        if op == OP_SQUARED_NORM:
            return [vals[0] * (2.0 * grad[0, 0])]
        if op == OP_ROW_MEAN:
            n = vals[0].shape[0]
            return [np.repeat(grad, n, axis=0) / n]
        raise DecafError("Unhandled operation: %s" % op)

    def backward(self, loss_index: int) -> List[Optional[Matrix]]:
        """
        Propagates d(loss)/d(node) from the loss back to all nodes it depends on.

        :param loss_index: the index of the scalar loss node
        :type loss_index: int
        :return: the gradient per node, None for nodes the loss does not depend on
        :rtype: list
        """
        if self._shape(loss_index) != (1, 1):
            raise ShapeError("Loss node %d is not scalar: %s" % (loss_index, str(self._shape(loss_index))))
        grads = [None] * len(self.nodes)
        grads[loss_index] = np.ones((1, 1))
        for index in range(loss_index, -1, -1):
            grad = grads[index]
            node = self.nodes[index]
            if (grad is None) or (len(node.inputs) == 0):
                continue
            if not np.all(np.isfinite(grad)):
                raise NumericError("Non-finite gradient", index)
            for i, g in zip(node.inputs, self._input_gradients(node, grad)):
                if grads[i] is None:
                    grads[i] = g
                else:
                    grads[i] = grads[i] + g
        return grads


def evaluate_with_gradients(tape: Tape, loss_index: int) -> Tuple[float, List[Matrix]]:
    """
    Returns the loss and the gradient for every trainable parameter (in the
    order the parameters were added to the tape).

    :param tape: the recorded computation
    :type tape: Tape
    :param loss_index: the scalar loss node
    :type loss_index: int
    :return: the tuple of loss and gradients
    :rtype: tuple
    """
    grads = tape.backward(loss_index)
    result = []
    for index in tape.parameter_indices:
        g = grads[index]
        if g is None:
            g = np.zeros_like(tape.value(index))
        elif not np.all(np.isfinite(g)):
            raise NumericError("Non-finite parameter gradient", index)
        result.append(g)
    return float(tape.value(loss_index)[0, 0]), result


@dataclass
class AdamState:
    """
    The moment accumulators and hyperparameters of Adam.
    """
    first_moment: List[Matrix]
    second_moment: List[Matrix]
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-5


def init_adam(params: Sequence[Matrix], learning_rate: float = 1e-3, weight_decay: float = 1e-5,
              beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    """
    Creates zero accumulators for the parameters.

    :param params: the parameters to optimize
    :param learning_rate: the step size
    :type learning_rate: float
    :param weight_decay: the L2 coefficient added to the gradient
    :type weight_decay: float
    :return: the state
    :rtype: AdamState
    """
    return AdamState(
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
        learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon,
        weight_decay=weight_decay)


def adam_step(params: Sequence[Matrix], grads: Sequence[Matrix], state: AdamState) -> Tuple[List[Matrix], AdamState]:
    """
    Performs one Adam update with coupled weight decay (decay * param is added
    to the gradient). Inputs are not modified.

    :param params: the current parameters
    :param grads: the gradients
    :param state: the optimizer state
    :type state: AdamState
    :return: the updated parameters and state
    :rtype: tuple
    """
    if (len(params) != len(grads)) or (len(params) != len(state.first_moment)):
        raise ShapeError("adam_step: %d params, %d grads, %d accumulators" % (len(params), len(grads), len(state.first_moment)))
    t = state.step_count + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_params, first, second = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if (p.shape != g.shape) or (p.shape != m.shape) or (p.shape != v.shape):
            raise ShapeError("adam_step: parameter %s, gradient %s, accumulator %s" % (str(p.shape), str(g.shape), str(m.shape)))
        g = g + state.weight_decay * p
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        first.append(m)
        second.append(v)
    new_state = AdamState(
        first_moment=first, second_moment=second, step_count=t,
        learning_rate=state.learning_rate, beta1=state.beta1, beta2=state.beta2,
        epsilon=state.epsilon, weight_decay=state.weight_decay)
    return new_params, new_state


@dataclass
class Mlp:
    """
    Two-layer perceptron: relu(x W1 + b1) W2 + b2.
    """
    w1: Matrix
    b1: Matrix
    w2: Matrix
    b2: Matrix

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    def parameters(self) -> List[Matrix]:
        return [self.w1, self.b1, self.w2, self.b2]

    @classmethod
    def from_parameters(cls, params: Sequence[Matrix]) -> 'Mlp':
        return cls(*params)

    def forward(self, x: Matrix) -> Matrix:
        """
        Evaluates the network outside of a tape.

        :param x: the n x in_dim inputs
        :type x: np.ndarray
        :return: the n x out_dim outputs
        :rtype: np.ndarray
        """
        return np.maximum(x @ self.w1 + self.b1, 0.0) @ self.w2 + self.b2


def init_mlp(rng: np.random.Generator, in_dim: int, hidden: int, out_dim: int,
             zero_output: bool = False, output_bias: Optional[Matrix] = None) -> Mlp:
    """
    Glorot-uniform weights, zero biases. With zero_output the output layer
    starts at zero, i.e., the network outputs its output bias for every input.

    :param rng: the random generator
    :type rng: np.random.Generator
    :param in_dim: the input size
    :type in_dim: int
    :param hidden: the hidden size
    :type hidden: int
    :param out_dim: the output size
    :type out_dim: int
    :param zero_output: whether to start with a zero output layer
    :type zero_output: bool
    :param output_bias: the initial output bias (1 x out_dim), None for zeros
    :type output_bias: np.ndarray
    :return: the network
    :rtype: Mlp
    """
    w1 = glorot(rng, in_dim, hidden)
    w2 = glorot(rng, hidden, out_dim)
    if zero_output:
        w2 = np.zeros_like(w2)
    b2 = np.zeros((1, out_dim)) if output_bias is None else as_matrix(output_bias).reshape((1, out_dim))
    return Mlp(w1=w1, b1=np.zeros((1, hidden)), w2=w2, b2=b2)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Matrix:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def mlp_on_tape(tape: Tape, params: Sequence[int], x: int) -> int:
    """
    Records the two-layer perceptron on the tape.

    :param tape: the tape to record on
    :type tape: Tape
    :param params: the node indices of W1, b1, W2, b2
    :param x: the input node
    :type x: int
    :return: the output node
    :rtype: int
    """
    w1, b1, w2, b2 = params
    hidden = tape.relu(tape.add_row(tape.matmul(x, w1), b1))
    return tape.add_row(tape.matmul(hidden, w2), b2)


def numerical_gradients(fn: Callable[[List[Matrix]], float], params: Sequence[Matrix], h: float = 1e-5) -> List[Matrix]:
    """
    Central finite differences of a scalar function of several matrices.

    :param fn: maps the list of parameters to the scalar value
    :param params: the point to differentiate at
    :param h: the step
    :type h: float
    :return: the gradient estimates
    :rtype: list
    """
    params = [p.copy() for p in params]
    result = []
    for p in params:
        grad = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            plus = fn(params)
            p[idx] = orig - h
            minus = fn(params)
            p[idx] = orig
            grad[idx] = (plus - minus) / (2.0 * h)
        result.append(grad)
    return result


def relative_error(a: Matrix, b: Matrix) -> float:
    """
    ||a - b|| / max(||a|| + ||b||, 1e-12).
    """
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))

