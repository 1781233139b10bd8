"""Backend dispatch so geometry code runs on numpy arrays and Tensors alike.

The kinematics, Euler, and affective-feature formulas are written once
against these helpers.  Called with plain ndarrays they reduce to numpy;
called with :class:`~emogest.autodiff.Tensor` operands they build the
differentiation graph.  Either way the arithmetic is bit-identical, so the
loss pipeline and the evaluation metrics cannot drift apart.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def _is_tensor(*xs):
    return any(isinstance(x, Tensor) for x in xs)


def value(x):
    """Plain numpy view of a Tensor or array (no gradient flows out)."""
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def sqrt(x):
    return ad.sqrt(x) if _is_tensor(x) else np.sqrt(x)


def arcsin(x):
    return ad.arcsin(x) if _is_tensor(x) else np.arcsin(x)


def arccos(x):
    return ad.arccos(x) if _is_tensor(x) else np.arccos(x)


def arctan2(y, x):
    return ad.arctan2(y, x) if _is_tensor(y, x) else np.arctan2(y, x)


def cos(x):
    return ad.cos(x) if _is_tensor(x) else np.cos(x)


def sin(x):
    return ad.sin(x) if _is_tensor(x) else np.sin(x)


def clip(x, lo=None, hi=None):
    return ad.clip(x, lo, hi) if _is_tensor(x) else np.clip(x, lo, hi)


def where(cond, a, b):
    return ad.where(cond, a, b) if _is_tensor(a, b) else np.where(cond, a, b)


def concat(parts, axis):
    if _is_tensor(*parts):
        return ad.concat(parts, axis)
    return np.concatenate(parts, axis=axis)


def reshape(x, shape):
    return ad.reshape(x, shape) if _is_tensor(x) else np.reshape(x, shape)


def sum_(x, axis=None, keepdims=False):
    if _is_tensor(x):
        return ad.sum_(x, axis=axis, keepdims=keepdims)
    return np.sum(x, axis=axis, keepdims=keepdims)


def matmul(a, b):
    return ad.matmul(a, b) if _is_tensor(a, b) else np.matmul(a, b)


def getitem(x, idx):
    return x[idx]


def wrap_pi(d):
    """d - pi*round(d/pi), applied per component; the round is not differentiated."""
    k = np.round(value(d) / np.pi)
    return d - np.pi * k
