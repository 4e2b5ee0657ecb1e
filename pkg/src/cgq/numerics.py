"""Working-precision scalars, vectors and small dense linear algebra.

Two backends share one array-based API:

* ``digits <= 16`` runs on hardware IEEE-754 double precision
  (``numpy.float64`` arrays, round-to-nearest-even, unit roundoff 2**-53).
* ``digits > 16`` runs on MPFR through :mod:`gmpy2`. Vectors are numpy
  ``object`` arrays of ``gmpy2.mpfr`` values, all carrying the context's
  binary precision. The requested decimal digits are rounded up to a whole
  number of 64-bit limbs, so the actual precision is somewhat higher than
  requested.

Arithmetic on ``mpfr`` values is rounded to the precision of the *active*
gmpy2 context, so every computation must run inside ``with ctx:``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import gmpy2
import numpy as np

__all__ = [
    "PrecisionContext",
    "PrecisionMismatch",
    "make_context",
    "norm",
    "norms",
    "dot",
    "sqrt",
    "exp",
    "log10",
    "solve",
    "expm",
    "to_float",
    "format_scalar",
]

NATIVE_DIGITS = 16
LIMB_BITS = 64

_local = threading.local()


class PrecisionMismatch(TypeError):
    """Raised when values from two different precision contexts are mixed."""


@dataclass(frozen=True)
class PrecisionContext:
    """A working precision.

    Attributes
    ----------
    digits : int
        Requested number of significant decimal digits.
    bits : int
        Actual binary significand precision.
    """

    digits: int
    bits: int

    @property
    def native(self) -> bool:
        return self.bits == 53 and self.digits <= NATIVE_DIGITS

    @property
    def dtype(self):
        return np.float64 if self.native else object

    @property
    def eps_mach(self):
        """Unit roundoff ``2**-bits`` as a scalar of this context."""
        if self.native:
            return 2.0**-53
        return gmpy2.mpfr(2, self.bits) ** (-self.bits)

    @property
    def n_mach(self) -> float:
        return self.bits * math.log10(2)

    @property
    def string_digits(self) -> int:
        """Significant decimal digits needed for a lossless round trip."""
        return math.ceil(self.bits * math.log10(2)) + 2

    # -- context management ------------------------------------------------

    def __enter__(self):
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        if self.native:
            stack.append(None)
        else:
            cm = gmpy2.context(precision=self.bits, round=gmpy2.RoundToNearest)
            cm.__enter__()
            stack.append(cm)
        return self

    def __exit__(self, *exc):
        cm = _local.stack.pop()
        if cm is not None:
            cm.__exit__(*exc)
        return False

    # -- construction -------------------------------------------------------

    def scalar(self, x):
        """Convert ``x`` (int, str, Fraction, float, mpfr) to a scalar."""
        if self.native:
            if isinstance(x, Fraction):
                return x.numerator / x.denominator
            if isinstance(x, str):
                return float(x)
            if isinstance(x, _MPFR) and x.precision != 53:
                raise PrecisionMismatch(
                    f"mpfr with {x.precision} bits passed to a 53-bit context"
                )
            return float(x)
        if isinstance(x, Fraction):
            with self:
                return gmpy2.mpfr(x.numerator, self.bits) / x.denominator
        if isinstance(x, str):
            return gmpy2.mpfr(x.strip(), self.bits)
        if isinstance(x, _MPFR):
            if x.precision != self.bits:
                raise PrecisionMismatch(
                    f"mpfr with {x.precision} bits passed to a {self.bits}-bit context"
                )
            return x
        if isinstance(x, (np.floating, float)):
            x = float(x)
        elif isinstance(x, np.integer):
            x = int(x)
        return gmpy2.mpfr(x, self.bits)

    def array(self, values) -> np.ndarray:
        """Convert a nested sequence to an array of this context's scalars."""
        if self.native and isinstance(values, np.ndarray) and values.dtype.kind in "fiu":
            return values.astype(np.float64)
        obj = np.array(values, dtype=object)
        flat = [self.scalar(v) for v in obj.ravel()]
        if self.native:
            return np.array(flat, dtype=np.float64).reshape(obj.shape)
        out = np.empty(obj.shape, dtype=object)
        out.ravel()[:] = flat
        return out

    vector = array
    matrix = array

    def zeros(self, shape) -> np.ndarray:
        if self.native:
            return np.zeros(shape)
        arr = np.empty(shape, dtype=object)
        zero = gmpy2.mpfr(0, self.bits)
        arr.fill(zero)
        return arr

    def ones(self, shape) -> np.ndarray:
        if self.native:
            return np.ones(shape)
        arr = np.empty(shape, dtype=object)
        arr.fill(gmpy2.mpfr(1, self.bits))
        return arr

    def identity(self, n: int) -> np.ndarray:
        out = self.zeros((n, n))
        one = self.scalar(1)
        for i in range(n):
            out[i, i] = one
        return out

    def pi(self):
        if self.native:
            return math.pi
        with self:
            return gmpy2.const_pi()

    def check(self, arr) -> None:
        """Raise :class:`PrecisionMismatch` unless ``arr`` belongs here."""
        a = np.asarray(arr)
        if self.native:
            if a.dtype == object:
                raise PrecisionMismatch("object array passed to a native context")
            return
        if a.dtype != object:
            raise PrecisionMismatch(
                f"{a.dtype} array passed to a {self.bits}-bit context"
            )
        for v in a.ravel():
            if not isinstance(v, _MPFR) or v.precision != self.bits:
                raise PrecisionMismatch(
                    f"value {v!r} does not carry {self.bits}-bit precision"
                )

    # -- serialization ------------------------------------------------------

    def to_string(self, x) -> str:
        return format_scalar(x, self.string_digits if not self.native else 17)

    def parse(self, s: str):
        return self.scalar(s)


_MPFR = type(gmpy2.mpfr(0))


@lru_cache(maxsize=None)
def make_context(digits: int) -> PrecisionContext:
    """Return the precision context for ``digits`` significant digits.

    Up to 16 digits maps to IEEE double. Above that the binary precision is
    ``digits * log2(10)`` rounded up to a multiple of 64 bits.

    >>> make_context(420).bits
    1408
    """
    if isinstance(digits, bool) or int(digits) != digits or digits < 1:
        raise ValueError(f"digits must be a positive integer, got {digits!r}")
    digits = int(digits)
    if digits <= NATIVE_DIGITS:
        return PrecisionContext(digits, 53)
    bits = LIMB_BITS * math.ceil(digits * math.log2(10) / LIMB_BITS)
    return PrecisionContext(digits, bits)


def format_scalar(x, digits: int) -> str:
    """Scientific notation with explicit sign and ``digits`` significant digits."""
    if isinstance(x, _MPFR):
        if gmpy2.is_nan(x):
            return "nan"
        if gmpy2.is_infinite(x):
            return "+inf" if x > 0 else "-inf"
        mant, exp10, _ = x.digits(10, digits)
        sign = "-" if mant.startswith("-") else "+"
        mant = mant.lstrip("-")
        if set(mant) <= {"0"}:
            return f"{sign}0." + "0" * (digits - 1) + "e+00"
        return f"{sign}{mant[0]}.{mant[1:]}e{exp10 - 1:+03d}"
    x = float(x)
    return format(x, f"+.{digits - 1}e")


# -- elementwise helpers ----------------------------------------------------


def _is_obj(a) -> bool:
    return isinstance(a, np.ndarray) and a.dtype == object


def _precision_of(*arrays) -> int:
    """Largest mpfr precision among the arguments (53 if there is none)."""
    bits = 53
    for a in arrays:
        if isinstance(a, _MPFR):
            bits = max(bits, a.precision)
        elif _is_obj(a) and a.size:
            v = a.flat[0]
            if isinstance(v, _MPFR):
                bits = max(bits, v.precision)
    return bits


def _working(*arrays):
    """gmpy2 context at the operands' precision, so helpers work outside ``with ctx``."""
    return gmpy2.context(precision=_precision_of(*arrays), round=gmpy2.RoundToNearest)


def sqrt(x):
    if isinstance(x, _MPFR):
        with _working(x):
            return gmpy2.sqrt(x)
    if _is_obj(x):
        with _working(x):
            return _apply(gmpy2.sqrt, x)
    return np.sqrt(x)


def exp(x):
    if isinstance(x, _MPFR):
        with _working(x):
            return gmpy2.exp(x)
    if _is_obj(x):
        with _working(x):
            return _apply(gmpy2.exp, x)
    return np.exp(x)


def log10(x):
    if isinstance(x, _MPFR):
        with _working(x):
            return gmpy2.log10(x)
    if _is_obj(x):
        with _working(x):
            return _apply(gmpy2.log10, x)
    return np.log10(x)


def _apply(fn, arr):
    out = np.empty(arr.shape, dtype=object)
    out.ravel()[:] = [fn(v) for v in arr.ravel()]
    return out


def dot(a, b):
    """Euclidean inner product of two vectors."""
    if _is_obj(a) or _is_obj(b):
        with _working(a, b):
            return sum((x * y for x, y in zip(a, b)), start=0 * a[0])
    return float(np.dot(a, b))


def norm(v):
    """Euclidean norm at working precision."""
    v = np.asarray(v)
    if v.dtype == object:
        with _working(v):
            return gmpy2.sqrt(sum((x * x for x in v.ravel()), start=0 * v.flat[0]))
    return float(np.sqrt(np.dot(v.ravel(), v.ravel())))


def norms(arr):
    """Euclidean norms along the last axis."""
    if _is_obj(arr):
        with _working(arr):
            return sqrt((arr * arr).sum(axis=-1))
    return np.sqrt(np.einsum("...i,...i->...", arr, arr))


def to_float(x):
    """Round to double precision for reporting and plotting."""
    if isinstance(x, np.ndarray):
        return x.astype(np.float64)
    return float(x)


# -- linear algebra ---------------------------------------------------------


class SingularMatrix(ArithmeticError):
    pass


def solve(A, b):
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides. Native arrays go
    straight to LAPACK.
    """
    if not (_is_obj(A) or _is_obj(b)):
        try:
            return np.linalg.solve(A, b)
        except np.linalg.LinAlgError as err:
            raise SingularMatrix(str(err)) from err
    with _working(A, b):
        return _gauss_solve(A, b)


def _gauss_solve(A, b):
    A = A.copy()
    x = b.copy()
    n = A.shape[0]
    for col in range(n):
        piv = col + int(np.argmax([abs(A[r, col]) for r in range(col, n)]))
        if A[piv, col] == 0:
            raise SingularMatrix(f"zero pivot in column {col}")
        if piv != col:
            A[[col, piv]] = A[[piv, col]]
            x[[col, piv]] = x[[piv, col]]
        inv = 1 / A[col, col]
        below = A[col + 1 :, col] * inv
        if below.size:
            A[col + 1 :, col:] -= np.multiply.outer(below, A[col, col:])
            x[col + 1 :] -= np.multiply.outer(below, x[col])
    for col in range(n - 1, -1, -1):
        x[col] = (x[col] - A[col, col + 1 :] @ x[col + 1 :]) / A[col, col]
    return x


def expm(A, ctx: PrecisionContext):
    """Matrix exponential by scaling and squaring of a Taylor series."""
    n = A.shape[0]
    if ctx.native:
        A = np.asarray(A, dtype=np.float64)
    with ctx:
        size = max((float(abs(v)) for v in A.ravel()), default=0.0) * n
        squarings = max(0, math.ceil(math.log2(size)) + 1) if size > 0 else 0
        B = A / (2**squarings)
        term = ctx.identity(n)
        total = ctx.identity(n)
        eps = float(ctx.eps_mach) if ctx.native else ctx.eps_mach
        k = 1
        while True:
            term = (term @ B) / k
            total = total + term
            if max(abs(v) for v in term.ravel()) <= eps * 1e-3 or k > 10 * ctx.bits:
                break
            k += 1
        for _ in range(squarings):
            total = total @ total
        return total
