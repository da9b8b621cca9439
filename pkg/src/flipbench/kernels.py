"""Matrix-multiply kernels: the measured blocked kernel and a naive oracle.

Both compute ``C <- alpha * A @ B + beta * C`` in place on square, C-ordered
float64 arrays. They are compiled with numba and release the GIL, so one
thread per pinned core runs truly in parallel.

External BLAS libraries can be plugged in through :func:`register_kernel`;
any callable with the ``(alpha, a, b, beta, c, block)`` signature works, for
example a ctypes wrapper around ``cblas_dgemm``.
"""

from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from flipbench.errors import KernelError


def flop_count(order):
    """Operations per call: N^3 multiply-adds plus the alpha/beta scaling."""
    if order < 1:
        raise ValueError("order must be >= 1")
    n = int(order)
    return 2 * n**3 + 2 * n**2


@numba.njit(nogil=True, cache=True)
def _naive(alpha, a, b, beta, c):
    n = a.shape[0]
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += a[i, k] * b[k, j]
            if beta == 0.0:
                c[i, j] = alpha * s
            else:
                c[i, j] = alpha * s + beta * c[i, j]


@numba.njit(nogil=True, cache=True)
def _blocked(alpha, a, b, beta, c, block, counter):
    n = a.shape[0]
    if beta == 0.0:
        for i in range(n):
            for j in range(n):
                c[i, j] = 0.0
    elif beta != 1.0:
        for i in range(n):
            for j in range(n):
                c[i, j] *= beta
    for ii in range(0, n, block):
        i1 = min(ii + block, n)
        for kk in range(0, n, block):
            k1 = min(kk + block, n)
            for jj in range(0, n, block):
                j1 = min(jj + block, n)
                m = j1 - jj
                for i in range(ii, i1):
                    # row slices let LLVM prove the inner loop contiguous and vectorise it
                    crow = c[i, jj:j1]
                    for k in range(kk, k1):
                        aik = alpha * a[i, k]
                        brow = b[k, jj:j1]
                        for j in range(m):
                            crow[j] += aik * brow[j]
                        counter[0] += m


def _check(alpha, a, b, beta, c):
    for name, m in (("a", a), ("b", b), ("c", c)):
        if not isinstance(m, np.ndarray) or m.dtype != np.float64 or m.ndim != 2:
            raise KernelError(f"{name} must be a 2-D float64 array")
        if not m.flags.c_contiguous:
            raise KernelError(f"{name} must be C-contiguous")
        if m.shape[0] != m.shape[1]:
            raise KernelError(f"{name} must be square, got shape {m.shape}")
    if not a.shape == b.shape == c.shape:
        raise KernelError(f"order mismatch: {a.shape}, {b.shape}, {c.shape}")
    if not (np.isfinite(alpha) and np.isfinite(beta)):
        raise KernelError("alpha and beta must be finite")


def dgemm_naive(alpha, a, b, beta, c):
    """Triple-loop reference product. Slow; serves as the correctness oracle."""
    _check(alpha, a, b, beta, c)
    _naive(float(alpha), a, b, float(beta), c)
    return c


def dgemm_blocked(alpha, a, b, beta, c, block=64, counter=None):
    """Cache-blocked product with ``block``-sized square tiles.

    ``counter`` (a one-element int64 array) accumulates the number of
    multiply-adds performed, which is N^3 for any matrix content. A block
    larger than N is clamped to N (one tile covering the whole matrix).
    """
    _check(alpha, a, b, beta, c)
    n = a.shape[0]
    if block < 1:
        raise KernelError(f"block must be >= 1, got {block}")
    block = min(int(block), n)
    if counter is None:
        counter = np.zeros(1, dtype=np.int64)
    _blocked(float(alpha), a, b, float(beta), c, int(block), counter)
    return c


@dataclass(frozen=True)
class GemmArgs:
    """Operands of one call; ``c`` is overwritten."""

    alpha: float
    a: np.ndarray
    b: np.ndarray
    beta: float
    c: np.ndarray

    def __post_init__(self):
        _check(self.alpha, self.a, self.b, self.beta, self.c)

    @property
    def order(self):
        return self.a.shape[0]


@dataclass(frozen=True)
class KernelDescriptor:
    name: str
    fn: Callable
    flops: Callable[[int], int] = flop_count

    def __call__(self, args, block):
        return self.fn(args.alpha, args.a, args.b, args.beta, args.c, block)


KERNELS = {
    "naive": KernelDescriptor("naive", lambda alpha, a, b, beta, c, block: dgemm_naive(alpha, a, b, beta, c)),
    "blocked": KernelDescriptor("blocked", lambda alpha, a, b, beta, c, block: dgemm_blocked(alpha, a, b, beta, c, block)),
}


def register_kernel(name, fn, flops=flop_count):
    KERNELS[name] = KernelDescriptor(name, fn, flops)
    return KERNELS[name]


def get_kernel(name):
    try:
        return KERNELS[name]
    except KeyError:
        raise KernelError(f"unknown kernel {name!r}; known: {', '.join(sorted(KERNELS))}") from None


def warm_jit(order=4):
    """Trigger compilation so the first timed call does not pay for it."""
    a = np.eye(order)
    c = np.zeros((order, order))
    dgemm_naive(1.0, a, a, 0.0, c)
    dgemm_blocked(1.0, a, a, 0.0, c, order)
