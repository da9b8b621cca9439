"""Matrix initialisation schemes and bit-entropy statistics.

Four schemes are supported: a constant fill, the sequence ``i / (N*N - 1)``,
uniform random values on [0, 1), and uniform random values whose low
fraction bits are cleared by a mask of 0..53 bits. All generators are pure
functions of their inputs.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from flipbench import rng
from flipbench.errors import InitSpecError

FRACTION_BITS = 52
MAX_MASK_BITS = 53
# Every element collapses to this value under a 53-bit mask.
FULL_MASK_VALUE = 0.5


class Scheme(enum.Enum):
    CONSTANT = "constant"
    SEQUENTIAL = "sequential"
    RANDOM = "random"
    MASKED = "masked"


@dataclass(frozen=True)
class InitSpec:
    scheme: Scheme
    value: float | None = None
    seed: int | None = None
    mask_bits: int | None = None

    def __post_init__(self):
        s = self.scheme
        if (self.value is not None) != (s is Scheme.CONSTANT):
            raise InitSpecError(f"value is required for, and only for, constant (got {self!r})")
        if s is Scheme.CONSTANT and not math.isfinite(self.value):
            raise InitSpecError(f"constant value must be finite, got {self.value!r}")
        if (self.mask_bits is not None) != (s is Scheme.MASKED):
            raise InitSpecError(f"mask_bits is required for, and only for, masked (got {self!r})")
        if s is Scheme.MASKED and not 0 <= self.mask_bits <= MAX_MASK_BITS:
            raise InitSpecError(f"mask_bits must be in 0..{MAX_MASK_BITS}, got {self.mask_bits}")
        needs_seed = s in (Scheme.RANDOM, Scheme.MASKED)
        if (self.seed is not None) != needs_seed:
            raise InitSpecError(f"seed is required for, and only for, random/masked (got {self!r})")
        if needs_seed and not 0 <= self.seed < 2**64:
            raise InitSpecError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def canonical(self):
        """Textual form used on the command line and in trace files."""
        if self.scheme is Scheme.CONSTANT:
            return f"constant:{format_float(self.value)}"
        if self.scheme is Scheme.MASKED:
            return f"masked:{self.mask_bits}"
        return self.scheme.value

    def __str__(self):
        return self.canonical


def format_float(x):
    """Shortest round-tripping text for a float, without a trailing ``.0``."""
    if x == 0 and math.copysign(1.0, x) < 0:
        return "-0.0"
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def parse_init_spec(text, seed=0):
    """Parse ``constant:<float>``, ``sequential``, ``random`` or ``masked:<k>``.

    ``seed`` is attached only to the schemes that consume randomness.
    """
    name, sep, arg = text.strip().partition(":")
    name = name.strip().lower()
    try:
        scheme = Scheme(name)
    except ValueError:
        raise InitSpecError(f"unknown scheme {name!r} in {text!r}") from None
    if scheme in (Scheme.SEQUENTIAL, Scheme.RANDOM):
        if sep:
            raise InitSpecError(f"scheme {name!r} takes no argument: {text!r}")
        return InitSpec(scheme, seed=seed if scheme is Scheme.RANDOM else None)
    if not sep or not arg.strip():
        raise InitSpecError(f"scheme {name!r} requires an argument: {text!r}")
    if scheme is Scheme.CONSTANT:
        try:
            value = float(arg)
        except ValueError:
            raise InitSpecError(f"bad constant in {text!r}") from None
        return InitSpec(scheme, value=value)
    try:
        k = int(arg)
    except ValueError:
        raise InitSpecError(f"bad mask size in {text!r}") from None
    return InitSpec(scheme, seed=seed, mask_bits=k)


@dataclass(frozen=True, eq=False)
class Matrix:
    """Square order-N matrix stored as a flat row-major binary64 buffer."""

    order: int
    data: np.ndarray

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be positive, got {self.order}")
        if self.data.dtype != np.float64 or self.data.ndim != 1:
            raise ValueError("data must be a 1-D float64 array")
        if self.data.size != self.order * self.order:
            raise ValueError(f"data has {self.data.size} elements, expected {self.order ** 2}")

    def as_2d(self):
        return self.data.reshape(self.order, self.order)

    def bits(self):
        return self.data.view(np.uint64)

    def bit_equal(self, other):
        return self.order == other.order and np.array_equal(self.bits(), other.bits())


def _check_order(order, minimum=1):
    if int(order) != order or order < minimum:
        raise ValueError(f"order must be an integer >= {minimum}, got {order!r}")
    return int(order)


def gen_constant(order, value):
    order = _check_order(order)
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"constant value must be finite, got {value!r}")
    return Matrix(order, np.full(order * order, value, dtype=np.float64))


def gen_sequential(order):
    order = _check_order(order, minimum=2)
    n = order * order
    return Matrix(order, np.arange(n, dtype=np.float64) / float(n - 1))


def gen_random(order, seed):
    order = _check_order(order)
    return Matrix(order, rng.uniform01(seed, order * order))


def mask_bits_array(x, mask_bits):
    """Vectorised mantissa mask over a float64 array; returns a new array."""
    if not 0 <= mask_bits <= MAX_MASK_BITS:
        raise ValueError(f"mask_bits must be in 0..{MAX_MASK_BITS}, got {mask_bits}")
    x = np.asarray(x, dtype=np.float64)
    if mask_bits == MAX_MASK_BITS:
        return np.full_like(x, FULL_MASK_VALUE)
    keep = np.uint64(~((1 << mask_bits) - 1) & 0xFFFFFFFFFFFFFFFF)
    return (x.view(np.uint64) & keep).view(np.float64)


def apply_mantissa_mask(x, mask_bits):
    """Clear the ``mask_bits`` lowest bits of the 52-bit stored fraction of ``x``.

    Sign and exponent are kept. ``mask_bits == 53`` returns 0.5 for every
    input, so a full mask makes all elements equal.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x!r}")
    return float(mask_bits_array(np.array([x]), mask_bits)[0])


def gen_masked(order, seed, mask_bits):
    m = gen_random(order, seed)
    return Matrix(m.order, mask_bits_array(m.data, mask_bits))


def generate(spec, order):
    """Build the single matrix described by ``spec``."""
    if spec.scheme is Scheme.CONSTANT:
        return gen_constant(order, spec.value)
    if spec.scheme is Scheme.SEQUENTIAL:
        return gen_sequential(order)
    if spec.scheme is Scheme.RANDOM:
        return gen_random(order, spec.seed)
    return gen_masked(order, spec.seed, spec.mask_bits)


def _stream_seed(seed, index):
    return seed ^ index


def generate_operands(spec, order):
    """Return the (A, B, C) triple for one experiment.

    Constant and sequential schemes fill all three matrices identically.
    Random schemes use the decorrelated streams ``seed``, ``seed^1`` and
    ``seed^2``.
    """
    if spec.seed is None:
        m = generate(spec, order)
        return m, Matrix(order, m.data.copy()), Matrix(order, m.data.copy())
    return tuple(
        generate(InitSpec(spec.scheme, seed=_stream_seed(spec.seed, i), mask_bits=spec.mask_bits), order)
        for i in range(3)
    )


@dataclass(frozen=True)
class EntropyStats:
    mean_adjacent_hamming: float
    mean_sampled_pairwise_hamming: float
    sample_pairs: int
    seed: int


def _as_bits(m):
    data = m.data if isinstance(m, Matrix) else np.ascontiguousarray(m, dtype=np.float64).ravel()
    if data.size < 2:
        raise ValueError("need at least two elements to measure Hamming distance")
    return data.view(np.uint64)


def mean_adjacent_hamming(m):
    """Mean Hamming distance between consecutive 64-bit patterns in row-major order."""
    b = _as_bits(m)
    return float(np.bitwise_count(b[1:] ^ b[:-1]).mean())


def sample_pairs(n, pairs, seed):
    """Deterministic uniformly sampled unordered pairs ``i != j`` of ``range(n)``."""
    u = rng.uniform01(seed, 2 * pairs)
    i = np.floor(u[0::2] * n).astype(np.int64)
    j = np.floor(u[1::2] * (n - 1)).astype(np.int64)
    j += j >= i
    return i, j


def mean_sampled_pairwise_hamming(m, pairs, seed):
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    b = _as_bits(m)
    i, j = sample_pairs(b.size, pairs, seed)
    return float(np.bitwise_count(b[i] ^ b[j]).mean())


def entropy_stats(m, pairs=10_000, seed=0):
    return EntropyStats(
        mean_adjacent_hamming=mean_adjacent_hamming(m),
        mean_sampled_pairwise_hamming=mean_sampled_pairwise_hamming(m, pairs, seed),
        sample_pairs=pairs,
        seed=seed,
    )
