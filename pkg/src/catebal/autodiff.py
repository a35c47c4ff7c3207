"""Dense-tensor reverse-mode automatic differentiation and Adam.

A deliberately small engine: every value is a float64 numpy array wrapped in a
Tensor node, every primitive records itself on a Tape in creation order (which
is a topological order by construction), and one reversed sweep of the tape
accumulates gradients. The primitive set covers exactly what the balancing
losses need: affine maps, ELU/ReLU/tanh/logistic, elementwise add/sub/mul,
square, absolute value, mean reduction, feature concatenation and scaling by a
constant.

Gradients are checked against central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible with the primitive's signature."""


class TapeError(RuntimeError):
    """Tape used out of order (e.g. backward before any forward)."""


class Tensor:
    """One node of the computation graph: a float64 array plus its adjoint."""

    __slots__ = ("data", "grad", "_parents", "_vjp", "_needs_grad")

    def __init__(self, data, parents=(), vjp=None, needs_grad=True):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._vjp = vjp
        self._needs_grad = needs_grad

    @property
    def shape(self):
        return self.data.shape


def _check_finite_grad(g, where):
    if not np.all(np.isfinite(g)):
        raise FloatingPointError(f"non-finite gradient in {where}")


class Tape:
    """Ordered record of primitive operations for one forward/backward pass."""

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._param_nodes: dict[int, Tensor] = {}

    def _record(self, node: Tensor) -> Tensor:
        self._nodes.append(node)
        return node

    def leaf(self, data, needs_grad=True) -> Tensor:
        """Wrap an array as a graph input (parameter or constant)."""
        return self._record(Tensor(data, needs_grad=needs_grad))

    def param(self, array: np.ndarray) -> Tensor:
        """Wrap a parameter array, memoized by identity so repeated forwards
        of the same network accumulate into one gradient."""
        node = self._param_nodes.get(id(array))
        if node is None:
            node = self.leaf(array)
            self._param_nodes[id(array)] = node
        return node

    def grad_for(self, array: np.ndarray):
        """Gradient accumulated for a parameter array, or None if untouched."""
        node = self._param_nodes.get(id(array))
        return None if node is None else node.grad

    def const(self, data) -> Tensor:
        return self.leaf(data, needs_grad=False)

    # ------------------------------------------------------------------ ops

    def affine(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
            raise ShapeError(
                f"affine: x{x.data.shape} incompatible with w{w.data.shape}"
            )
        if b.data.shape != (w.data.shape[1],):
            raise ShapeError(f"affine: b{b.data.shape} vs w{w.data.shape}")
        out = x.data @ w.data + b.data
        nx, nw, nb = x._needs_grad, w._needs_grad, b._needs_grad

        def vjp(g):
            return (
                g @ w.data.T if nx else None,
                x.data.T @ g if nw else None,
                g.sum(axis=0) if nb else None,
            )

        return self._record(Tensor(out, (x, w, b), vjp))

    def elu(self, x: Tensor) -> Tensor:
        ex = np.exp(np.minimum(x.data, 0.0))
        out = np.where(x.data >= 0.0, x.data, ex - 1.0)
        dx = np.where(x.data >= 0.0, 1.0, ex)
        return self._record(Tensor(out, (x,), lambda g: (g * dx,)))

    def relu(self, x: Tensor) -> Tensor:
        mask = (x.data > 0.0).astype(np.float64)
        return self._record(Tensor(x.data * mask, (x,), lambda g: (g * mask,)))

    def tanh(self, x: Tensor) -> Tensor:
        out = np.tanh(x.data)
        return self._record(Tensor(out, (x,), lambda g: (g * (1.0 - out * out),)))

    def logistic(self, x: Tensor) -> Tensor:
        e = np.exp(-np.abs(x.data))
        out = np.where(x.data >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
        return self._record(Tensor(out, (x,), lambda g: (g * out * (1.0 - out),)))

    def _elementwise_pair(self, name, a, b):
        if a.data.shape != b.data.shape:
            raise ShapeError(f"{name}: {a.data.shape} vs {b.data.shape}")

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        self._elementwise_pair("add", a, b)
        return self._record(Tensor(a.data + b.data, (a, b), lambda g: (g, g)))

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        self._elementwise_pair("sub", a, b)
        return self._record(Tensor(a.data - b.data, (a, b), lambda g: (g, -g)))

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        self._elementwise_pair("mul", a, b)
        na, nb = a._needs_grad, b._needs_grad

        def vjp(g):
            return (g * b.data if na else None, g * a.data if nb else None)

        return self._record(Tensor(a.data * b.data, (a, b), vjp))

    def square(self, x: Tensor) -> Tensor:
        return self._record(
            Tensor(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))
        )

    def absval(self, x: Tensor) -> Tensor:
        s = np.sign(x.data)
        return self._record(Tensor(np.abs(x.data), (x,), lambda g: (g * s,)))

    def mean(self, x: Tensor) -> Tensor:
        n = x.data.size
        if n == 0:
            raise ShapeError("mean: empty tensor")

        def vjp(g):
            return (np.full(x.data.shape, float(g) / n),)

        return self._record(Tensor(x.data.mean(), (x,), vjp))

    def scale(self, x: Tensor, c: float) -> Tensor:
        c = float(c)
        return self._record(Tensor(x.data * c, (x,), lambda g: (g * c,)))

    def concat(self, parts: list[Tensor]) -> Tensor:
        if not parts:
            raise ShapeError("concat: no operands")
        n = parts[0].data.shape[0]
        for p in parts:
            if p.data.ndim != 2 or p.data.shape[0] != n:
                raise ShapeError("concat: rows must match")
        widths = [p.data.shape[1] for p in parts]
        out = np.concatenate([p.data for p in parts], axis=1)

        def vjp(g):
            grads, k = [], 0
            for w in widths:
                grads.append(g[:, k : k + w])
                k += w
            return tuple(grads)

        return self._record(Tensor(out, tuple(parts), vjp))

    # ------------------------------------------------------------- backward

    def backward(self, root: Tensor):
        """Accumulate gradients of the scalar `root` into every graph leaf."""
        if not self._nodes:
            raise TapeError("backward called before any forward operation")
        if root.data.size != 1:
            raise ShapeError("backward root must be scalar")
        root.grad = np.ones_like(root.data)
        for node in reversed(self._nodes):
            if node.grad is None or node._vjp is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None or not parent._needs_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64, copy=True)
                    parent.grad = parent.grad.reshape(parent.data.shape)
                else:
                    parent.grad += np.asarray(g).reshape(parent.data.shape)


class Adam:
    """Adam with bias correction over a fixed list of parameter arrays.

    Updates happen in place so that network parameter objects keep their
    identity across steps. Aborts on non-finite gradients.
    """

    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ShapeError("adam: gradient list length mismatch")
        self.step_count += 1
        t = self.step_count
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g is None:
                g = np.zeros_like(p)
            g = np.asarray(g, dtype=np.float64)
            if g.shape != p.shape:
                raise ShapeError(f"adam: grad{g.shape} vs param{p.shape}")
            _check_finite_grad(g, f"adam step {t}, param {i}")
            m, v = self.m[i], self.v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            gg = (1.0 - self.beta2) * g
            gg *= g
            v *= self.beta2
            v += gg
            m_hat = self.lr * (m / (1.0 - self.beta1**t))
            v_hat = v / (1.0 - self.beta2**t)
            np.sqrt(v_hat, out=v_hat)
            v_hat += self.eps
            m_hat /= v_hat
            p -= m_hat
