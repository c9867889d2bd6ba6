"""Minimal dense-tensor network stack for the cell agents.

A fixed residual architecture on (H, W, C) float64 tensors: 3x3 stem from
the 9 site channels to WIDTH hidden channels, two residual blocks at that
width, and a linear 1x1 head back to 9 channels. Forward passes record a
GradientTape; network_backward replays it in reverse for exact parameter
gradients, optimized by classical SGD with momentum.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError, ShapeError

IN_CHANNELS = 9
OUT_CHANNELS = 9
WIDTH = 16


@dataclass
class ConvLayer:
    """One convolution: kernels (cout, cin, K, K) with K in {1, 3}, bias (cout,)."""

    kernels: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.kernels.ndim != 4 or self.kernels.shape[2] != self.kernels.shape[3]:
            raise ShapeError(f"conv kernels must be (cout, cin, K, K), got {self.kernels.shape}")
        if self.kernels.shape[2] not in (1, 3):
            raise ShapeError(f"kernel size must be 1 or 3, got {self.kernels.shape[2]}")
        if self.bias.shape != (self.kernels.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match cout {self.kernels.shape[0]}")

    @property
    def cin(self):
        return self.kernels.shape[1]

    @property
    def cout(self):
        return self.kernels.shape[0]


@dataclass
class NetworkParams:
    """stem 9->WIDTH, two residual blocks of two WIDTH->WIDTH convs, 1x1 head WIDTH->9."""

    stem: ConvLayer
    block1: tuple
    block2: tuple
    head: ConvLayer

    def layers(self):
        """All conv layers in flatten order."""
        return (self.stem, self.block1[0], self.block1[1],
                self.block2[0], self.block2[1], self.head)


def param_arrays(params):
    """Parameter arrays in the canonical flatten order."""
    out = []
    for layer in params.layers():
        out.append(layer.kernels)
        out.append(layer.bias)
    return out


def param_count():
    w, ci, co = WIDTH, IN_CHANNELS, OUT_CHANNELS
    return (w * ci * 9 + w) + 4 * (w * w * 9 + w) + (co * w + co)


def flatten_params(params):
    """Concatenate all parameters into one float64 vector (canonical order)."""
    return np.concatenate([a.ravel() for a in param_arrays(params)])


def unflatten_params(theta):
    """Inverse of flatten_params; copies out of theta."""
    if theta.shape != (param_count(),):
        raise ShapeError(f"expected flat vector of length {param_count()}, got {theta.shape}")
    w, ci, co = WIDTH, IN_CHANNELS, OUT_CHANNELS
    shapes = [(w, ci, 3, 3), (w,)]
    for _ in range(4):
        shapes += [(w, w, 3, 3), (w,)]
    shapes += [(co, w, 1, 1), (co,)]
    arrays = []
    off = 0
    for shape in shapes:
        n = int(np.prod(shape))
        arrays.append(theta[off:off + n].reshape(shape).copy())
        off += n
    return NetworkParams(
        stem=ConvLayer(arrays[0], arrays[1]),
        block1=(ConvLayer(arrays[2], arrays[3]), ConvLayer(arrays[4], arrays[5])),
        block2=(ConvLayer(arrays[6], arrays[7]), ConvLayer(arrays[8], arrays[9])),
        head=ConvLayer(arrays[10], arrays[11]),
    )


def init_params(rng):
    """Kaiming-style fan-in uniform kernels, zero biases, drawn in flatten order."""

    def conv(cout, cin, k):
        bound = np.sqrt(6.0 / (cin * k * k))
        return ConvLayer(rng.uniform(-bound, bound, size=(cout, cin, k, k)),
                         np.zeros(cout))

    return NetworkParams(
        stem=conv(WIDTH, IN_CHANNELS, 3),
        block1=(conv(WIDTH, WIDTH, 3), conv(WIDTH, WIDTH, 3)),
        block2=(conv(WIDTH, WIDTH, 3), conv(WIDTH, WIDTH, 3)),
        head=conv(OUT_CHANNELS, WIDTH, 1),
    )


def conv2d_forward(x, layer):
    """Same-shape cross-correlation of x (H, W, Cin) with one ConvLayer."""
    if x.ndim != 3 or x.shape[2] != layer.cin:
        raise ShapeError(f"input {x.shape} does not match layer cin {layer.cin}")
    return kernels.conv2d_forward(np.ascontiguousarray(x, dtype=np.float64),
                                  layer.kernels, layer.bias)


@dataclass
class GradientTape:
    """Activations cached by one network_forward call, consumed by one backward."""

    x: np.ndarray          # network input
    stem_pre: np.ndarray   # stem conv output, pre-relu
    a0: np.ndarray         # relu(stem_pre)
    t1: np.ndarray         # block1 conv1 output, pre-relu
    u1: np.ndarray         # relu(t1)
    w1: np.ndarray         # a0 + block1 conv2 output, pre-relu
    a1: np.ndarray         # relu(w1)
    t2: np.ndarray
    u2: np.ndarray
    w2: np.ndarray
    a2: np.ndarray         # head input
    params: NetworkParams = field(repr=False)
    consumed: bool = False


def network_forward(params, x):
    """Run stem -> relu -> block1 -> block2 -> 1x1 head; returns (output, tape).

    Each residual block computes relu(x + conv(relu(conv(x)))). The head is
    linear. Input must be 3x3x9 and finite.
    """
    if x.shape != (3, 3, IN_CHANNELS):
        raise ShapeError(f"network input must be (3, 3, {IN_CHANNELS}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractError("network input contains non-finite values")
    x = np.ascontiguousarray(x, dtype=np.float64)
    fwd = kernels.conv2d_forward
    stem_pre = fwd(x, params.stem.kernels, params.stem.bias)
    a0 = np.maximum(stem_pre, 0.0)
    t1 = fwd(a0, params.block1[0].kernels, params.block1[0].bias)
    u1 = np.maximum(t1, 0.0)
    w1 = a0 + fwd(u1, params.block1[1].kernels, params.block1[1].bias)
    a1 = np.maximum(w1, 0.0)
    t2 = fwd(a1, params.block2[0].kernels, params.block2[0].bias)
    u2 = np.maximum(t2, 0.0)
    w2 = a1 + fwd(u2, params.block2[1].kernels, params.block2[1].bias)
    a2 = np.maximum(w2, 0.0)
    out = fwd(a2, params.head.kernels, params.head.bias)
    tape = GradientTape(x=x, stem_pre=stem_pre, a0=a0, t1=t1, u1=u1, w1=w1,
                        a1=a1, t2=t2, u2=u2, w2=w2, a2=a2, params=params)
    return out, tape


def network_backward(params, tape, d_output):
    """Exact gradient of sum(output * d_output) wrt the flattened parameters."""
    if tape.params is not params:
        raise ContractError("tape does not belong to these parameters")
    if tape.consumed:
        raise ContractError("gradient tape already consumed")
    if d_output.shape != (3, 3, OUT_CHANNELS):
        raise ShapeError(f"d_output must be (3, 3, {OUT_CHANNELS}), got {d_output.shape}")
    if not np.all(np.isfinite(d_output)):
        raise ContractError("d_output contains non-finite values")
    tape.consumed = True
    d_output = np.ascontiguousarray(d_output, dtype=np.float64)
    bwd = kernels.conv2d_backward

    d_a2, d_head_k, d_head_b = bwd(tape.a2, params.head.kernels, d_output)
    d_w2 = d_a2 * (tape.w2 > 0.0)
    d_u2, d_b2c2_k, d_b2c2_b = bwd(tape.u2, params.block2[1].kernels, d_w2)
    d_t2 = d_u2 * (tape.t2 > 0.0)
    d_a1, d_b2c1_k, d_b2c1_b = bwd(tape.a1, params.block2[0].kernels, d_t2)
    d_a1 = d_a1 + d_w2  # residual skip
    d_w1 = d_a1 * (tape.w1 > 0.0)
    d_u1, d_b1c2_k, d_b1c2_b = bwd(tape.u1, params.block1[1].kernels, d_w1)
    d_t1 = d_u1 * (tape.t1 > 0.0)
    d_a0, d_b1c1_k, d_b1c1_b = bwd(tape.a0, params.block1[0].kernels, d_t1)
    d_a0 = d_a0 + d_w1
    d_stem = d_a0 * (tape.stem_pre > 0.0)
    _, d_stem_k, d_stem_b = bwd(tape.x, params.stem.kernels, d_stem)

    return np.concatenate([
        d_stem_k.ravel(), d_stem_b,
        d_b1c1_k.ravel(), d_b1c1_b,
        d_b1c2_k.ravel(), d_b1c2_b,
        d_b2c1_k.ravel(), d_b2c1_b,
        d_b2c2_k.ravel(), d_b2c2_b,
        d_head_k.ravel(), d_head_b,
    ])


@dataclass
class OptimizerState:
    """Classical momentum state: velocity matches the flat parameter vector."""

    velocity: np.ndarray
    learning_rate: float
    momentum: float

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError(f"learning rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.velocity.shape != (param_count(),):
            raise ShapeError(f"velocity shape {self.velocity.shape} != ({param_count()},)")

    @classmethod
    def fresh(cls, learning_rate, momentum):
        return cls(np.zeros(param_count()), learning_rate, momentum)


def sgd_momentum_step(params, gradient, state):
    """v <- momentum * v + g; theta <- theta - lr * v (updates in place)."""
    if gradient.shape != state.velocity.shape:
        raise ShapeError(f"gradient shape {gradient.shape} != velocity {state.velocity.shape}")
    state.velocity *= state.momentum
    state.velocity += gradient
    off = 0
    for arr in param_arrays(params):
        n = arr.size
        arr -= state.learning_rate * state.velocity[off:off + n].reshape(arr.shape)
        off += n
    return params, state


def finite_difference_gradient(params, x, d_output, step):
    """Central-difference gradient of sum(output * d_output), one probe per parameter.

    Numeric oracle for network_backward: uses only forward passes.
    """
    if step <= 0:
        raise ContractError(f"finite-difference step must be > 0, got {step}")
    theta = flatten_params(params)
    x = np.ascontiguousarray(x, dtype=np.float64)
    proj = np.ascontiguousarray(d_output, dtype=np.float64)
    if kernels.ACTIVE_BACKEND == "numba":
        return kernels.fd_gradient_numba(theta, x, proj, WIDTH, OUT_CHANNELS, step)
    grad = np.empty(theta.size)
    th = theta.copy()
    for i in range(theta.size):
        th[i] = theta[i] + step
        fp = float(np.sum(network_forward(unflatten_params(th), x)[0] * proj))
        th[i] = theta[i] - step
        fm = float(np.sum(network_forward(unflatten_params(th), x)[0] * proj))
        th[i] = theta[i]
        grad[i] = (fp - fm) / (2.0 * step)
    return grad


def max_relative_error(a, b):
    """max over entries of |a - b| / max(|a|, |b|, 1e-8)."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def gradient_check(params, x, step, rng=None):
    """Compare network_backward against finite differences of the forward pass.

    Projects the output through a random cotangent drawn from rng and returns
    the max relative error over all parameters.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    out, tape = network_forward(params, x)
    proj = rng.normal(size=out.shape)
    analytic = network_backward(params, tape, proj)
    numeric = finite_difference_gradient(params, x, proj, step)
    return max_relative_error(analytic, numeric)
