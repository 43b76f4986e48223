"""Reverse-mode differentiation over a fixed set of array primitives.

The tape records applications of nine primitives (``dft``, ``idft``,
``mode_contract``, ``pointwise_linear``, ``add``, ``relu``,
``instance_norm``, ``scalar_mul``, ``relative_l2``) and replays their
adjoints in reverse to produce gradients for registered parameter leaves.

Conventions, fixed once for the whole package:

* real arrays are ``float64``, complex arrays are ``complex128``;
* the forward DFT is unnormalized, the inverse carries ``1/N`` per
  transformed axis (so Parseval reads ``sum|x|^2 == sum|X|^2 / N``);
* the gradient of a real loss with respect to a complex array ``z`` is
  stored as ``dL/d(Re z) + i * dL/d(Im z)``, i.e. a plain descent step on
  the (re, im) components.  Under this convention the adjoint of a
  C-linear map is its conjugate transpose, so the DFT adjoint is the
  inverse transform scaled back to the forward normalization.
"""

from __future__ import annotations

import numpy as np

from .modes import gather_modes, scatter_modes

PRIMITIVES = (
    "dft",
    "idft",
    "mode_contract",
    "pointwise_linear",
    "add",
    "relu",
    "instance_norm",
    "scalar_mul",
    "relative_l2",
)


class DegenerateTargetError(ValueError):
    """Raised by relative_l2 when the target has zero norm."""


def _as_real(x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        raise ValueError("expected a real array, got complex")
    return np.asarray(x, dtype=np.float64)


def _as_any(x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return np.asarray(x, dtype=np.complex128)
    return np.asarray(x, dtype=np.float64)


def _axes_size(shape, axes):
    n = 1
    for ax in axes:
        n *= shape[ax]
    return n


def _check_axes(x, axes):
    for ax in axes:
        if not 0 <= ax < x.ndim:
            raise ValueError(f"transform axis {ax} out of range for rank {x.ndim}")
        if x.shape[ax] < 1:
            raise ValueError(f"transform axis {ax} has extent 0")


# ---------------------------------------------------------------------------
# forward evaluation
# ---------------------------------------------------------------------------


def _fwd_dft(x, *, axes):
    x = _as_any(x)
    _check_axes(x, axes)
    return np.fft.fftn(x, axes=axes).astype(np.complex128, copy=False)


def _fwd_idft(x, *, axes, real_output=False):
    x = np.asarray(x, dtype=np.complex128)
    _check_axes(x, axes)
    out = np.fft.ifftn(x, axes=axes)
    if real_output:
        return np.ascontiguousarray(out.real)
    return out


def _fwd_mode_contract(vhat, weights):
    vhat = np.asarray(vhat, dtype=np.complex128)
    weights = np.asarray(weights, dtype=np.complex128)
    ndims = weights.ndim - 2
    if ndims < 1 or vhat.ndim != ndims + 1:
        raise ValueError(
            f"mode_contract rank mismatch: spectrum rank {vhat.ndim}, weights rank {weights.ndim}"
        )
    if weights.shape[-2] != vhat.shape[-1]:
        raise ValueError(
            f"channel mismatch: spectrum has {vhat.shape[-1]}, weights expect {weights.shape[-2]}"
        )
    counts = weights.shape[:ndims]
    grid = vhat.shape[:ndims]
    packed = gather_modes(vhat, counts)
    out_packed = np.einsum("...i,...io->...o", packed, weights)
    return scatter_modes(out_packed, grid)


def _fwd_pointwise_linear(x, w, b):
    x, w, b = _as_real(x), _as_real(w), _as_real(b)
    if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
        raise ValueError(f"bad linear map shapes {w.shape}, {b.shape}")
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"channel mismatch: input has {x.shape[-1]}, map expects {w.shape[0]}")
    return x @ w + b


def _fwd_add(a, b):
    a, b = _as_any(a), _as_any(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    return a + b


def _fwd_relu(x):
    return np.maximum(_as_real(x), 0.0)


def _fwd_instance_norm(x, gamma, beta, *, eps=1e-6):
    x, gamma, beta = _as_real(x), _as_real(gamma), _as_real(beta)
    if x.ndim < 2:
        raise ValueError("instance_norm needs at least one grid axis plus channels")
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ValueError("instance_norm scale/shift must be one value per channel")
    grid_axes = tuple(range(x.ndim - 1))
    mean = x.mean(axis=grid_axes, keepdims=True)
    var = x.var(axis=grid_axes, keepdims=True)
    xhat = (x - mean) / np.sqrt(var + eps)
    return xhat * gamma + beta


def _fwd_scalar_mul(x, *, scale):
    return _as_any(x) * float(scale)


def _fwd_relative_l2(pred, target):
    pred, target = _as_real(pred), _as_real(target)
    if pred.shape != target.shape:
        raise ValueError(f"relative_l2 shape mismatch {pred.shape} vs {target.shape}")
    tnorm = np.linalg.norm(target.ravel())
    if tnorm == 0.0:
        raise DegenerateTargetError("relative_l2 target has zero norm")
    return np.float64(np.linalg.norm((pred - target).ravel()) / tnorm)


# ---------------------------------------------------------------------------
# adjoints: given the adjoint of the output, return adjoints per operand
# ---------------------------------------------------------------------------


def _vjp_dft(g, out, operands, attrs):
    axes = attrs["axes"]
    h = np.fft.ifftn(g, axes=axes) * _axes_size(g.shape, axes)
    if not np.iscomplexobj(operands[0]):
        h = np.ascontiguousarray(h.real)
    return (h,)


def _vjp_idft(g, out, operands, attrs):
    axes = attrs["axes"]
    return (np.fft.fftn(g, axes=axes) / _axes_size(g.shape, axes),)


def _vjp_mode_contract(g, out, operands, attrs):
    vhat, weights = operands
    ndims = weights.ndim - 2
    counts = weights.shape[:ndims]
    grid = vhat.shape[:ndims]
    g_packed = gather_modes(g, counts)
    v_packed = gather_modes(vhat, counts)
    vbar_packed = np.einsum("...o,...io->...i", g_packed, np.conj(weights))
    vbar = scatter_modes(vbar_packed, grid)
    wbar = np.einsum("...i,...o->...io", np.conj(v_packed), g_packed)
    return (vbar, wbar)


def _vjp_pointwise_linear(g, out, operands, attrs):
    x, w, _ = operands
    xbar = g @ w.T
    wbar = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    bbar = g.reshape(-1, g.shape[-1]).sum(axis=0)
    return (xbar, wbar, bbar)


def _vjp_add(g, out, operands, attrs):
    return (g, g)


def _vjp_relu(g, out, operands, attrs):
    return (g * (operands[0] > 0.0),)


def _vjp_instance_norm(g, out, operands, attrs):
    x, gamma, _ = operands
    eps = attrs.get("eps", 1e-6)
    grid_axes = tuple(range(x.ndim - 1))
    mean = x.mean(axis=grid_axes, keepdims=True)
    var = x.var(axis=grid_axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv
    gx = g * gamma
    xbar = inv * (
        gx
        - gx.mean(axis=grid_axes, keepdims=True)
        - xhat * (gx * xhat).mean(axis=grid_axes, keepdims=True)
    )
    gbar = (g * xhat).reshape(-1, x.shape[-1]).sum(axis=0)
    bbar = g.reshape(-1, x.shape[-1]).sum(axis=0)
    return (xbar, gbar, bbar)


def _vjp_scalar_mul(g, out, operands, attrs):
    return (g * float(attrs["scale"]),)


def _vjp_relative_l2(g, out, operands, attrs):
    pred, target = operands
    diff = pred - target
    dnorm = np.linalg.norm(diff.ravel())
    tnorm = np.linalg.norm(target.ravel())
    g = float(g)
    if dnorm == 0.0:
        pbar = np.zeros_like(pred)
        tbar = -out * g * target / (tnorm * tnorm)
    else:
        pbar = g * diff / (dnorm * tnorm)
        tbar = -pbar - out * g * target / (tnorm * tnorm)
    return (pbar, tbar)


_FORWARD = {
    "dft": _fwd_dft,
    "idft": _fwd_idft,
    "mode_contract": _fwd_mode_contract,
    "pointwise_linear": _fwd_pointwise_linear,
    "add": _fwd_add,
    "relu": _fwd_relu,
    "instance_norm": _fwd_instance_norm,
    "scalar_mul": _fwd_scalar_mul,
    "relative_l2": _fwd_relative_l2,
}

_VJP = {
    "dft": _vjp_dft,
    "idft": _vjp_idft,
    "mode_contract": _vjp_mode_contract,
    "pointwise_linear": _vjp_pointwise_linear,
    "add": _vjp_add,
    "relu": _vjp_relu,
    "instance_norm": _vjp_instance_norm,
    "scalar_mul": _vjp_scalar_mul,
    "relative_l2": _vjp_relative_l2,
}


def evaluate(prim, *operands, **attrs):
    """Run a primitive forward without recording anything."""
    if prim not in _FORWARD:
        raise ValueError(f"unknown primitive {prim!r}")
    return _FORWARD[prim](*operands, **attrs)


def vjp(prim, adjoint, out, operands, attrs=None):
    """Pull an output adjoint back through one primitive application."""
    if prim not in _VJP:
        raise ValueError(f"unknown primitive {prim!r}")
    return _VJP[prim](adjoint, out, tuple(operands), attrs or {})


class Node:
    """One recorded value: a leaf or the output of a primitive."""

    __slots__ = ("value", "prim", "parents", "attrs", "requires_grad", "index", "param")

    def __init__(self, value, prim, parents, attrs, requires_grad, index, param=None):
        self.value = value
        self.prim = prim
        self.parents = parents
        self.attrs = attrs
        self.requires_grad = requires_grad
        self.index = index
        self.param = param

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Single-threaded record of primitive applications.

    Leaves registered with a ``param`` name receive gradients from
    :meth:`backward`; all other leaves are treated as constants.
    """

    def __init__(self):
        self.nodes = []
        self.params = {}

    def leaf(self, value, param=None):
        """Register an input array; ``param`` marks it as trainable."""
        if param is not None and param in self.params:
            raise ValueError(f"parameter {param!r} already registered")
        node = Node(_as_any(value), None, (), {}, param is not None, len(self.nodes), param)
        self.nodes.append(node)
        if param is not None:
            self.params[param] = node
        return node

    def param_leaf(self, name, value):
        """Register a named parameter once; later calls return the same node."""
        if name in self.params:
            return self.params[name]
        return self.leaf(value, param=name)

    def record(self, prim, *operands, **attrs):
        """Apply a primitive to nodes and append the result to the tape."""
        if prim not in _FORWARD:
            raise ValueError(f"unknown primitive {prim!r}")
        for op in operands:
            if not isinstance(op, Node):
                raise TypeError("record() operands must be tape nodes")
        value = _FORWARD[prim](*(op.value for op in operands), **attrs)
        requires = any(op.requires_grad for op in operands)
        node = Node(value, prim, operands, attrs, requires, len(self.nodes))
        self.nodes.append(node)
        return node

    def backward(self, loss):
        """Reverse sweep from a real scalar node; returns ``{param: grad}``.

        Every registered parameter gets a gradient of its own shape, zero
        where the loss does not depend on it.
        """
        if not isinstance(loss, Node) or loss.value.shape != ():
            raise ValueError("backward() needs a scalar node on this tape")
        if np.iscomplexobj(loss.value):
            raise ValueError("loss must be real")
        adjoints = [None] * len(self.nodes)
        adjoints[loss.index] = np.float64(1.0)
        for node in reversed(self.nodes[: loss.index + 1]):
            g = adjoints[node.index]
            if g is None or node.prim is None or not node.requires_grad:
                continue
            parent_grads = _VJP[node.prim](
                g, node.value, tuple(p.value for p in node.parents), node.attrs
            )
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if adjoints[parent.index] is None:
                    adjoints[parent.index] = pg.copy() if isinstance(pg, np.ndarray) else pg
                else:
                    adjoints[parent.index] = adjoints[parent.index] + pg
        grads = {}
        for name, node in self.params.items():
            g = adjoints[node.index]
            grads[name] = np.zeros_like(node.value) if g is None else np.asarray(g)
        return grads


def apply(tape, prim, *operands, **attrs):
    """Record on ``tape`` when given one, otherwise evaluate raw arrays."""
    if tape is None:
        return evaluate(prim, *operands, **attrs)
    return tape.record(prim, *operands, **attrs)


def finite_diff_check(loss_and_grad, params, h=1e-6):
    """Compare analytic gradients against central differences.

    ``loss_and_grad(params) -> (loss, grads)`` must be a pure function of
    the parameter dict.  Every real coordinate (complex entries count as
    two) is perturbed by ``+-h``; the return value is the worst
    ``|analytic - numeric| / max(|numeric|, 1e-8)`` over all coordinates.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    work = {k: np.ascontiguousarray(v) for k, v in params.items()}
    _, grads = loss_and_grad(work)
    worst = 0.0
    for name, arr in work.items():
        flat = arr.view(np.float64).reshape(-1)
        gflat = np.ascontiguousarray(grads[name]).view(np.float64).reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            hi, _ = loss_and_grad(work)
            flat[i] = saved - h
            lo, _ = loss_and_grad(work)
            flat[i] = saved
            numeric = (float(hi) - float(lo)) / (2.0 * h)
            err = abs(float(gflat[i]) - numeric) / max(abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
