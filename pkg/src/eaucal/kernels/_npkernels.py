"""Pure-NumPy kernel backend.

Every function here has a twin in the compiled backend (`_ckernels.pyx`);
the two must stay behaviourally identical.  Forward kernels allocate and
return a new array; `acc_*` kernels accumulate in place into their first
argument.  All inputs are C-contiguous float64 arrays of matching shape.
"""

import numpy as np

BACKEND_NAME = "python"


def tanh(x):
    return np.tanh(x)


def sigmoid(x):
    # Split by sign to avoid overflow in exp for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    np.divide(1.0, 1.0 + np.exp(-x, where=pos, out=np.zeros_like(x)), out=out, where=pos)
    ex = np.exp(x, where=~pos, out=np.zeros_like(x))
    np.divide(ex, 1.0 + ex, out=out, where=~pos)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def exp(x):
    return np.exp(x)


def log(x):
    return np.log(x)


def sqrt(x):
    return np.sqrt(x)


def clamp(x, lo, hi):
    return np.clip(x, lo, hi)


def add(a, b):
    return a + b


def sub(a, b):
    return a - b


def mul(a, b):
    return a * b


def neg(a):
    return -a


def scale(a, s):
    return a * s


def acc_add(acc, g):
    np.add(acc, g, out=acc)


def acc_sub(acc, g):
    np.subtract(acc, g, out=acc)


def acc_scaled(acc, g, s):
    acc += g * s


def acc_prod(acc, g, w):
    acc += g * w


def acc_tanh(acc, g, y):
    acc += g * (1.0 - y * y)


def acc_sigmoid(acc, g, y):
    acc += g * y * (1.0 - y)


def acc_relu(acc, g, x):
    acc += g * (x > 0.0)


def acc_exp(acc, g, y):
    acc += g * y


def acc_log(acc, g, x):
    acc += g / x


def acc_sqrt(acc, g, y):
    acc += g * (0.5 / y)


def acc_clamp(acc, g, x, lo, hi):
    # Unit subgradient inside [lo, hi] (boundaries inclusive), zero outside.
    acc += g * ((x >= lo) & (x <= hi))
