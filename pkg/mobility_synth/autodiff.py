# Copyright (c) The mobility-synth developers, 2024
#
# This file is part of mobility-synth.  mobility-synth is free software: you
# can redistribute it and/or modify it under the terms of the GNU General
# Public License as published by the Free Software Foundation; either version 2
# of the License, or(at your option) any later version.
#
# This program is distributed in the hope that it will be useful, but WITHOUT
# ANY WARRANTY; without even the implied warranty of MERCHANTABILITY or FITNESS
# FOR A PARTICULAR PURPOSE.  See the GNU General Public License for more
# details.
#
# You should have received a copy of the GNU General Public License along with
# this program; if not, write to the Free Software Foundation, Inc., 51
# Franklin Street, Fifth Floor, Boston, MA 02110-1301 USA.
#


"""
A small reverse-mode differentiation engine over dense float64 arrays.

Each operator returns a new ``Tensor`` that remembers its parents and a
function mapping the gradient of its output to gradients of its parents.
Graphs are append-only, so they are acyclic by construction.

``backward`` never writes into the tensors: it returns a ``GradientSet``
keyed by parameter name. Several examples can therefore be differentiated
concurrently against the same parameter tensors, which is what DP-SGD needs
for per-example gradients::

    W = parameter(np.zeros((3, 2)), 'W')
    loss = cross_entropy(linear(constant(x), W), target=1)
    grads = backward(loss)          # grads['W'] has shape (3, 2)

Only the operators the generators use are provided; there is no general
broadcasting.
"""

import logging
import math

from collections import namedtuple

import numpy as np

from scipy.special import logsumexp

from mobility_synth.exceptions import DimensionError, GraphError

logger = logging.getLogger(__name__)


class Tensor(object):
    __slots__ = ('value', 'parents', 'backward_fn', 'name')

    def __init__(self, value, parents=(), backward_fn=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        label = self.name or ('leaf' if self.backward_fn is None else 'node')
        return "Tensor(%s, shape=%s)" % (label, self.value.shape)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(value, name):
    """A named leaf; ``backward`` reports gradients for named leaves only."""
    return Tensor(np.array(value, dtype=np.float64), name=name)


def constant(value):
    return Tensor(value)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise DimensionError("%s: shape mismatch %s vs %s" % (op, a.shape, b.shape))


# elementwise arithmetic

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape('add', a, b)
    return Tensor(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape('sub', a, b)
    return Tensor(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b):
    _same_shape('mul', a, b)
    return Tensor(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def scale(a, factor):
    factor = float(factor)
    return Tensor(a.value * factor, (a,), lambda g: (g * factor,))


def rsub(c, a):
    """``c - a`` for a float constant ``c``."""
    return Tensor(float(c) - a.value, (a,), lambda g: (-g,))


def add_n(tensors):
    tensors = list(tensors)
    if not tensors:
        return Tensor(0.0)
    for t in tensors[1:]:
        _same_shape('add_n', tensors[0], t)
    total = tensors[0].value.copy()
    for t in tensors[1:]:
        total = total + t.value
    return Tensor(total, tuple(tensors), lambda g: tuple(g for _ in tensors))


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    out = np.tanh(a.value)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


# shape plumbing

def reshape(a, shape):
    original = a.shape
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(original),))


def concat(tensors):
    tensors = list(tensors)
    for t in tensors:
        if t.value.ndim != 1:
            raise DimensionError("concat expects vectors, got shape %s" % (t.shape,))
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

    def backward_fn(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return Tensor(np.concatenate([t.value for t in tensors]), tuple(tensors), backward_fn)


def slice_(a, start, stop):
    """``a[start:stop]`` along the first axis."""
    full = a.shape

    def backward_fn(g):
        out = np.zeros(full)
        out[start:stop] = g
        return (out,)

    return Tensor(a.value[start:stop], (a,), backward_fn)


def gather_rows(a, index):
    """Row ``index`` (an int) or rows ``index`` (an int array) of a matrix."""
    full = a.shape
    index = np.asarray(index) if not isinstance(index, (int, np.integer)) else int(index)

    def backward_fn(g):
        out = np.zeros(full)
        np.add.at(out, index, g)
        return (out,)

    return Tensor(a.value[index], (a,), backward_fn)


# linear algebra

def dot(a, b):
    if a.value.ndim != 1 or a.shape != b.shape:
        raise DimensionError("dot: shapes %s and %s" % (a.shape, b.shape))
    return Tensor(np.dot(a.value, b.value), (a, b), lambda g: (g * b.value, g * a.value))


def matmul(a, b):
    """Matrix product for matrix/vector operands of rank 1 or 2."""
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
        raise DimensionError("matmul: shapes %s and %s" % (a.shape, b.shape))

    def backward_fn(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 2:
            return np.outer(g, bv), av.T @ g
        if bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        return g * bv, g * av

    return Tensor(av @ bv, (a, b), backward_fn)


def linear(x, W, b=None):
    """
    ``x @ W.T + b`` for a vector ``x`` of shape (n_in,) or a batch of rows
    (k, n_in); ``W`` has shape (n_out, n_in).
    """
    xv, Wv = x.value, W.value
    if Wv.ndim != 2 or xv.shape[-1] != Wv.shape[1]:
        raise DimensionError("linear: input %s against weight %s" % (x.shape, W.shape))
    out = xv @ Wv.T
    if b is not None:
        if b.shape != (Wv.shape[0],):
            raise DimensionError("linear: bias %s against weight %s" % (b.shape, W.shape))
        out = out + b.value

    def backward_fn(g):
        gx = g @ Wv
        gW = np.outer(g, xv) if xv.ndim == 1 else g.T @ xv
        if b is None:
            return gx, gW
        return gx, gW, (g if g.ndim == 1 else g.sum(axis=0))

    parents = (x, W) if b is None else (x, W, b)
    return Tensor(out, parents, backward_fn)


def quad_deconv(M, kernel):
    """
    Stride-2 transposed convolution with a 2x2 kernel::

        out[2x + dx, 2y + dy, k] = sum_j kernel[k, dx, dy, j] * M[x, y, j]

    ``M`` has shape (s, s, n_in), ``kernel`` (n_out, 2, 2, n_in); the
    result has shape (2s, 2s, n_out).
    """
    Mv, Kv = M.value, kernel.value
    if Mv.ndim != 3 or Kv.ndim != 4 or Kv.shape[1:3] != (2, 2) \
            or Mv.shape[0] != Mv.shape[1] or Mv.shape[2] != Kv.shape[3]:
        raise DimensionError("quad_deconv: map %s against kernel %s" % (M.shape, kernel.shape))
    s, n_out = Mv.shape[0], Kv.shape[0]
    out = np.einsum('kabj,xyj->xaybk', Kv, Mv).reshape(2 * s, 2 * s, n_out)

    def backward_fn(g):
        g5 = g.reshape(s, 2, s, 2, n_out)
        return (np.einsum('kabj,xaybk->xyj', Kv, g5),
                np.einsum('xaybk,xyj->kabj', g5, Mv))

    return Tensor(out, (M, kernel), backward_fn)


GRUWeights = namedtuple('GRUWeights', ['W_ih', 'W_hh', 'b_ih', 'b_hh'])


def gru_cell(h_prev, x, weights):
    """
    One GRU step with gates stacked as (update, reset, candidate)::

        z = sigmoid(W_z x + b_z + U_z h + c_z)
        r = sigmoid(W_r x + b_r + U_r h + c_r)
        n = tanh(W_n x + b_n + r * (U_n h + c_n))
        h' = (1 - z) * n + z * h
    """
    n_hidden = h_prev.shape[0]
    if weights.W_hh.shape != (3 * n_hidden, n_hidden) or weights.W_ih.shape != (3 * n_hidden, x.shape[0]):
        raise DimensionError("gru_cell: hidden %s, input %s against weights %s/%s"
                             % (h_prev.shape, x.shape, weights.W_ih.shape, weights.W_hh.shape))
    gx = linear(x, weights.W_ih, weights.b_ih)
    gh = linear(h_prev, weights.W_hh, weights.b_hh)
    H = n_hidden
    z = sigmoid(add(slice_(gx, 0, H), slice_(gh, 0, H)))
    r = sigmoid(add(slice_(gx, H, 2 * H), slice_(gh, H, 2 * H)))
    n = tanh(add(slice_(gx, 2 * H, 3 * H), mul(r, slice_(gh, 2 * H, 3 * H))))
    return add(mul(rsub(1.0, z), n), mul(z, h_prev))


# distributions and losses

def softmax_value(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax(logits):
    out = softmax_value(logits.value)
    return Tensor(out, (logits,), lambda g: (out * (g - np.dot(g, out)),))


def log_softmax(logits):
    out = logits.value - logsumexp(logits.value)
    probs = np.exp(out)
    return Tensor(out, (logits,), lambda g: (g - probs * g.sum(),))


def cross_entropy(logits, target):
    """``-log softmax(logits)[target]`` as a scalar node."""
    target = int(target)
    if not 0 <= target < logits.shape[0]:
        raise DimensionError("cross_entropy: target %d outside %d classes" % (target, logits.shape[0]))
    lse = logsumexp(logits.value)
    probs = np.exp(logits.value - lse)

    def backward_fn(g):
        grad = probs.copy()
        grad[target] -= 1.0
        return (g * grad,)

    return Tensor(lse - logits.value[target], (logits,), backward_fn)


def kl_div(p, q):
    """
    ``sum p log(p / q)`` with ``0 log 0 = 0``; ``math.inf`` when ``q`` misses
    support of ``p``.
    """
    p = np.asarray(getattr(p, 'value', p), dtype=np.float64)
    q = np.asarray(getattr(q, 'value', q), dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError("kl_div: shapes %s and %s" % (p.shape, q.shape))
    support = p > 0
    if np.any(q[support] <= 0):
        return math.inf
    return float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))


def kl_div_logits(target, logits):
    """``KL(target || softmax(logits))`` as a scalar node; ``target`` is constant."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != logits.shape:
        raise DimensionError("kl_div_logits: target %s against logits %s" % (target.shape, logits.shape))
    log_q = logits.value - logsumexp(logits.value)
    support = target > 0
    value = float(np.sum(target[support] * (np.log(target[support]) - log_q[support])))
    q = np.exp(log_q)

    def backward_fn(g):
        return (g * (q * target.sum() - target),)

    return Tensor(value, (logits,), backward_fn)


# reverse pass

class GradientSet(object):
    """
    Gradients of one scalar with respect to named parameters, tagged with the
    training example they came from.
    """

    def __init__(self, grads, example=None):
        self.grads = dict(grads)
        self.example = example

    def __getitem__(self, name):
        return self.grads[name]

    def __contains__(self, name):
        return name in self.grads

    def __len__(self):
        return len(self.grads)

    def names(self):
        return sorted(self.grads)

    def items(self):
        return [(name, self.grads[name]) for name in self.names()]

    def norm(self):
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.grads.values()))

    def scaled(self, factor):
        return GradientSet(dict((k, g * factor) for k, g in self.grads.items()), self.example)

    @classmethod
    def zeros_like(cls, params):
        return cls(dict((name, np.zeros_like(t.value)) for name, t in params.items()))


def _topological_order(root):
    order = []
    state = {}
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        key = id(node)
        if expanded:
            state[key] = 2
            order.append(node)
            continue
        mark = state.get(key)
        if mark == 2:
            continue
        if mark == 1:
            raise GraphError("Computation graph contains a cycle at %r" % (node,))
        state[key] = 1
        stack.append((node, True))
        for parent in node.parents:
            parent_mark = state.get(id(parent))
            if parent_mark == 1:
                raise GraphError("Computation graph contains a cycle at %r" % (parent,))
            if parent_mark is None:
                stack.append((parent, False))
    return order


def backward(loss, params=None, example=None):
    """
    Gradients of the scalar ``loss`` with respect to every named leaf it
    depends on. When ``params`` (name -> Tensor) is given, parameters the loss
    does not reach get zero gradients.
    """
    if loss.value.size != 1:
        raise GraphError("backward needs a scalar loss, got shape %s" % (loss.shape,))
    grads = {id(loss): np.ones_like(loss.value)}
    found = {}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.name is not None:
                found[node.name] = found[node.name] + g if node.name in found else g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    if params is not None:
        for name, t in params.items():
            if name not in found:
                found[name] = np.zeros_like(t.value)
    return GradientSet(found, example)


def numerical_gradient(f, array, index, step=1e-5):
    """
    Central finite difference of the scalar function ``f()`` with respect to
    ``array[index]``, perturbing ``array`` in place and restoring it.
    """
    original = array[index]
    array[index] = original + step
    upper = f()
    array[index] = original - step
    lower = f()
    array[index] = original
    return (upper - lower) / (2.0 * step)
