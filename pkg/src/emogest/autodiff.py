"""Dense-tensor compute layer with reverse-mode automatic differentiation.

Tensors wrap contiguous numpy buffers (float64 by default).  A ``Tape``
records every operation executed on tensors attached to it, in execution
order; ``Tape.backward`` replays the records in reverse, which is a valid
topological order, visiting each node exactly once.  Tensors without a tape
behave as constants and incur no recording overhead, so the same forward
code serves both training and inference.

No operation mutates its inputs' value buffers.
"""

from __future__ import annotations

import numpy as np

MAX_DIMS = 4


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "tape")

    # make `ndarray <op> Tensor` defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, tape=None, dtype=np.float64):
        arr = np.asarray(data, dtype=dtype)
        if arr.ndim > MAX_DIMS:
            raise ShapeError(f"tensors support up to {MAX_DIMS} dims, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, tape={'yes' if self.tape else 'no'})"

    # operator sugar; all arithmetic goes through the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_scalar(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Tape:
    """Append-only record of ops for one forward pass."""

    def __init__(self):
        self.nodes = []
        self.watched = []

    def watch(self, t: Tensor):
        """Attach a leaf tensor (parameter) to this tape."""
        t.tape = self
        t.grad = None
        self.watched.append(t)

    def backward(self, loss: Tensor):
        """Populate gradients of everything reachable from ``loss``.

        Watched leaves that do not influence the loss end up with zero
        gradients rather than ``None``.
        """
        if loss.tape is not self:
            raise ValueError("loss is not attached to this tape")
        if loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        for leaf in self.watched:
            leaf.grad = np.zeros_like(leaf.data)
        loss.grad = np.ones_like(loss.data)
        for out, rule in reversed(self.nodes):
            if out.grad is not None:
                rule(out.grad)

    def release(self):
        """Detach watched leaves so later ops on them are not recorded."""
        for leaf in self.watched:
            leaf.tape = None
        self.nodes.clear()
        self.watched.clear()


def _merge_tape(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Tensor) and x.tape is not None:
            if tape is None:
                tape = x.tape
            elif tape is not x.tape:
                raise ValueError("operands belong to different tapes")
    return tape


def _value(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _accum(x, g):
    if isinstance(x, Tensor) and x.tape is not None:
        ub = _unbroadcast(g, x.data.shape)
        if x.grad is None:
            # copy when unbroadcast passed g through unchanged: the buffer
            # may be shared with another consumer's accumulation
            x.grad = ub.copy() if ub is g else ub
        else:
            x.grad += ub


def _unbroadcast(g, shape):
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _broadcast_error(a, b, opname):
    return ShapeError(
        f"{opname}: shapes {np.shape(_value(a))} and {np.shape(_value(b))} do not broadcast"
    )


def _make(data, tape, rule):
    out = Tensor(data, tape=tape)
    if tape is not None:
        tape.nodes.append((out, rule))
    return out


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    tape = _merge_tape(a, b)
    try:
        out_data = _value(a) + _value(b)
    except ValueError:
        raise _broadcast_error(a, b, "add") from None

    def rule(g):
        _accum(a, g)
        _accum(b, g)

    return _make(out_data, tape, rule)


def sub(a, b):
    tape = _merge_tape(a, b)
    try:
        out_data = _value(a) - _value(b)
    except ValueError:
        raise _broadcast_error(a, b, "sub") from None

    def rule(g):
        _accum(a, g)
        _accum(b, -g)

    return _make(out_data, tape, rule)


def mul(a, b):
    tape = _merge_tape(a, b)
    av, bv = _value(a), _value(b)
    try:
        out_data = av * bv
    except ValueError:
        raise _broadcast_error(a, b, "mul") from None

    def rule(g):
        _accum(a, g * bv)
        _accum(b, g * av)

    return _make(out_data, tape, rule)


def div(a, b):
    tape = _merge_tape(a, b)
    av, bv = _value(a), _value(b)
    try:
        out_data = av / bv
    except ValueError:
        raise _broadcast_error(a, b, "div") from None

    def rule(g):
        _accum(a, g / bv)
        _accum(b, -g * av / (bv * bv))

    return _make(out_data, tape, rule)


def neg(a):
    tape = _merge_tape(a)

    def rule(g):
        _accum(a, -g)

    return _make(-_value(a), tape, rule)


def scale(a, s: float):
    """Multiply by a python scalar."""
    return mul(a, float(s))


def pow_scalar(a, p):
    tape = _merge_tape(a)
    av = _value(a)

    def rule(g):
        _accum(a, g * p * av ** (p - 1))

    return _make(av**p, tape, rule)


def sqrt(a):
    tape = _merge_tape(a)
    out_data = np.sqrt(_value(a))

    def rule(g):
        _accum(a, g / (2.0 * out_data))

    return _make(out_data, tape, rule)


def exp(a):
    tape = _merge_tape(a)
    out_data = np.exp(_value(a))

    def rule(g):
        _accum(a, g * out_data)

    return _make(out_data, tape, rule)


def log(a):
    tape = _merge_tape(a)
    av = _value(a)

    def rule(g):
        _accum(a, g / av)

    return _make(np.log(av), tape, rule)


def sin(a):
    tape = _merge_tape(a)
    av = _value(a)

    def rule(g):
        _accum(a, g * np.cos(av))

    return _make(np.sin(av), tape, rule)


def cos(a):
    tape = _merge_tape(a)
    av = _value(a)

    def rule(g):
        _accum(a, -g * np.sin(av))

    return _make(np.cos(av), tape, rule)


# The 1e-12 floors below cap the (unbounded) derivatives of arcsin/arccos at
# |x|=1 and of arctan2 at the origin, so a masked-out singular branch cannot
# poison gradients with inf*0 = NaN.


def arcsin(a):
    tape = _merge_tape(a)
    av = _value(a)

    def rule(g):
        _accum(a, g / np.sqrt(np.maximum(1.0 - av * av, 1e-12)))

    return _make(np.arcsin(av), tape, rule)


def arccos(a):
    tape = _merge_tape(a)
    av = _value(a)

    def rule(g):
        _accum(a, -g / np.sqrt(np.maximum(1.0 - av * av, 1e-12)))

    return _make(np.arccos(av), tape, rule)


def arctan2(y, x):
    tape = _merge_tape(y, x)
    yv, xv = _value(y), _value(x)
    try:
        denom = np.maximum(xv * xv + yv * yv, 1e-12)
    except ValueError:
        raise _broadcast_error(y, x, "arctan2") from None

    def rule(g):
        _accum(y, g * xv / denom)
        _accum(x, -g * yv / denom)

    return _make(np.arctan2(yv, xv), tape, rule)


def relu(a):
    tape = _merge_tape(a)
    av = _value(a)
    mask = av > 0

    def rule(g):
        _accum(a, g * mask)

    return _make(np.where(mask, av, 0.0), tape, rule)


def clip(a, lo=None, hi=None):
    """Clamp values; gradient passes where lo <= x <= hi."""
    tape = _merge_tape(a)
    av = _value(a)
    mask = np.ones(av.shape, dtype=bool)
    if lo is not None:
        mask &= av >= lo
    if hi is not None:
        mask &= av <= hi

    def rule(g):
        _accum(a, g * mask)

    return _make(np.clip(av, lo, hi), tape, rule)


def where(cond, a, b):
    """Select per element; ``cond`` is a plain boolean array, not differentiated."""
    cond = np.asarray(cond, dtype=bool)
    tape = _merge_tape(a, b)
    av, bv = _value(a), _value(b)

    def rule(g):
        _accum(a, np.where(cond, g, 0.0))
        _accum(b, np.where(cond, 0.0, g))

    return _make(np.where(cond, av, bv), tape, rule)


def stop_gradient(a):
    return Tensor(_value(a).copy())


# ---------------------------------------------------------------------------
# structure


def matmul(a, b):
    av, bv = _value(a), _value(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise ShapeError(f"matmul requires >=2-dim operands, got {av.shape} and {bv.shape}")
    if av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ between {av.shape} and {bv.shape}")
    tape = _merge_tape(a, b)

    def rule(g):
        _accum(a, g @ np.swapaxes(bv, -1, -2))
        _accum(b, np.swapaxes(av, -1, -2) @ g)

    return _make(av @ bv, tape, rule)


def transpose(a, axes):
    tape = _merge_tape(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def rule(g):
        _accum(a, np.transpose(g, inv))

    return _make(np.transpose(_value(a), axes), tape, rule)


def swap_last(a):
    """Swap the last two axes (the matmul transpose)."""
    n = _value(a).ndim
    axes = list(range(n))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def reshape(a, shape):
    tape = _merge_tape(a)
    av = _value(a)
    out_data = av.reshape(shape)
    if out_data.ndim > MAX_DIMS:
        raise ShapeError(f"reshape to {out_data.shape} exceeds {MAX_DIMS} dims")

    def rule(g):
        _accum(a, g.reshape(av.shape))

    return _make(out_data, tape, rule)


def getitem(a, idx):
    """Basic (slice/int/ellipsis) indexing."""
    tape = _merge_tape(a)
    av = _value(a)

    def rule(g):
        full = np.zeros_like(av)
        full[idx] += g
        _accum(a, full)

    return _make(av[idx], tape, rule)


def concat(parts, axis):
    parts = list(parts)
    tape = _merge_tape(*parts)
    datas = [_value(p) for p in parts]
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def rule(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(p, g[tuple(sl)])

    return _make(np.concatenate(datas, axis=axis), tape, rule)


def sum_(a, axis=None, keepdims=False):
    tape = _merge_tape(a)
    av = _value(a)

    def rule(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accum(a, np.broadcast_to(gg, av.shape))

    return _make(av.sum(axis=axis, keepdims=keepdims), tape, rule)


def mean(a, axis=None, keepdims=False):
    av = _value(a)
    if axis is None:
        count = av.size
    else:
        count = np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def softmax(a, axis=-1):
    tape = _merge_tape(a)
    av = _value(a)
    shifted = av - av.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        _accum(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _make(s, tape, rule)


def masked_fill(a, mask, value=-np.inf):
    """Replace entries where ``mask`` is True; gradient is blocked there."""
    mask = np.asarray(mask, dtype=bool)
    tape = _merge_tape(a)
    av = _value(a)
    try:
        out_data = np.where(mask, value, av)
    except ValueError:
        raise _broadcast_error(a, mask, "masked_fill") from None

    def rule(g):
        _accum(a, np.where(mask, 0.0, g))

    return _make(out_data, tape, rule)


def layer_norm_free_affine(a, axis=-1, eps=1e-5):
    """Layer normalization without learnable scale/shift."""
    mu = mean(a, axis=axis, keepdims=True)
    centered = sub(a, mu)
    var = mean(mul(centered, centered), axis=axis, keepdims=True)
    return div(centered, sqrt(add(var, eps)))


# ---------------------------------------------------------------------------
# gradient verification


class FdBlockReport:
    __slots__ = ("name", "max_rel", "n_checked", "passed")

    def __init__(self, name, max_rel, n_checked, passed):
        self.name = name
        self.max_rel = max_rel
        self.n_checked = n_checked
        self.passed = passed

    def __repr__(self):
        status = "ok" if self.passed else "FAIL"
        return f"[{status}] {self.name}: max_rel={self.max_rel:.3e} over {self.n_checked} coords"


class FdReport:
    def __init__(self, blocks):
        self.blocks = blocks

    @property
    def max_rel(self):
        return max(b.max_rel for b in self.blocks)

    @property
    def passed(self):
        return all(b.passed for b in self.blocks)

    def __repr__(self):
        return "\n".join(repr(b) for b in self.blocks)


def finite_difference_check(f, x, h=1e-5, tol=1e-6, floor=1e-3, max_coords=None, seed=0):
    """Compare analytic gradients of ``f`` against central finite differences.

    ``f`` must be a deterministic scalar-valued function of its tensor
    input(s).  ``x`` is a single Tensor or a dict of named Tensors; with a
    dict, ``f`` is called with the dict and the report carries one block per
    name.  ``floor`` guards the relative-error denominator for near-zero
    gradients.  ``max_coords`` caps the number of coordinates probed per
    block (sampled with a seeded RNG); None checks every coordinate.
    """
    blocks = {"x": x} if isinstance(x, Tensor) else dict(x)
    call = (lambda b: f(b["x"])) if isinstance(x, Tensor) else f

    tape = Tape()
    for t in blocks.values():
        tape.watch(t)
    loss = call(blocks)
    tape.backward(loss)
    analytic = {name: t.grad.copy() for name, t in blocks.items()}
    tape.release()

    rng = np.random.default_rng(seed)
    reports = []
    for name, t in blocks.items():
        flat = t.data.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = np.arange(n)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            f_plus = float(call(blocks).data)
            flat[c] = orig - h
            f_minus = float(call(blocks).data)
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[c])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, rel)
        reports.append(FdBlockReport(name, worst, len(coords), worst <= tol))
    return FdReport(reports)
