"""Linear algebra over the chain rings Z/p^n.

Row spans over ``Z/p^n`` are compared through the Howell normal form, which is
a canonical row echelon form for modules over a non-field.  Everything above
this layer (ideals of the truncated divided-power ring, lattices inside the
filtered modules) is flattened into row spans here.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import AmbientMismatch

# products of two residues must fit into int64
MAX_MODULUS = 2**31


def _valuations(col: np.ndarray, p: int, n: int) -> np.ndarray:
    """p-adic valuation of each residue (``n`` for zero)."""
    val = np.zeros(col.shape, dtype=np.int64)
    pk = 1
    for _ in range(n):
        pk *= p
        val += (col % pk == 0)
    return val


class ChainMatrix:
    """Matrix with entries in ``Z/p^n`` stored as canonical residues."""

    __slots__ = ("p", "n", "modulus", "rows")

    def __init__(self, p: int, n: int, rows, ncols: Optional[int] = None):
        self.p = p
        self.n = n
        self.modulus = p**n
        if self.modulus >= MAX_MODULUS:
            raise ValueError(f"modulus {p}^{n} too large for int64 arithmetic")
        arr = np.asarray(rows, dtype=object if _is_big(rows) else np.int64)
        if arr.size == 0:
            if ncols is None:
                ncols = arr.shape[1] if arr.ndim == 2 else 0
            arr = np.zeros((0, ncols), dtype=np.int64)
        arr = np.mod(arr, self.modulus).astype(np.int64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        self.rows = arr

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    @property
    def ncols(self) -> int:
        return self.rows.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChainMatrix):
            return NotImplemented
        return (self.p, self.n) == (other.p, other.n) and np.array_equal(self.rows, other.rows)

    def __hash__(self) -> int:
        return hash((self.p, self.n, self.rows.shape, self.rows.tobytes()))

    def __repr__(self) -> str:
        return f"ChainMatrix(p={self.p}, n={self.n}, rows={self.rows.tolist()})"


def _is_big(rows) -> bool:
    try:
        return any(abs(int(x)) >= 2**62 for x in np.asarray(rows, dtype=object).ravel())
    except TypeError:
        return False


def howell_form(m: ChainMatrix) -> ChainMatrix:
    """Howell normal form of ``m``.

    The result is in row echelon form, each pivot is a power ``p^a``, entries
    above a pivot lie in ``[0, p^a)`` and every row killed in its pivot column
    by ``p^(n-a)`` stays in the span of the rows below it.  Two matrices have
    the same row span iff their Howell forms are equal.
    """
    p, n, q = m.p, m.n, m.modulus
    ncols = m.ncols
    pool = m.rows[np.any(m.rows != 0, axis=1)].copy()
    out_rows: list[np.ndarray] = []
    pivots: list[tuple[int, int]] = []
    for c in range(ncols):
        if pool.shape[0] == 0:
            break
        col = pool[:, c]
        nz = np.nonzero(col)[0]
        if nz.size == 0:
            continue
        vals = _valuations(col[nz], p, n)
        k = int(nz[int(np.argmin(vals))])
        a = int(vals.min())
        pa = p**a
        unit = int(pool[k, c]) // pa
        piv = (pool[k] * pow(unit, -1, q)) % q
        pool = np.delete(pool, k, axis=0)
        if pool.shape[0]:
            f = pool[:, c] // pa
            pool = (pool - np.outer(f, piv) % q) % q
        if a > 0:
            extra = (piv * (p ** (n - a))) % q
            if np.any(extra):
                pool = np.vstack([pool, extra])
        pool = pool[np.any(pool != 0, axis=1)]
        out_rows.append(piv)
        pivots.append((c, a))
    # back-substitution: reduce entries above each pivot into [0, p^a)
    for i, (c, a) in enumerate(pivots):
        pa = p**a
        piv = out_rows[i]
        for k in range(i):
            f = int(out_rows[k][c]) // pa
            if f:
                out_rows[k] = (out_rows[k] - f * piv) % q
    res = ChainMatrix(p, n, np.array(out_rows, dtype=np.int64).reshape(len(out_rows), ncols))
    return res


def pivot_structure(h: ChainMatrix) -> list[tuple[int, int]]:
    """(column, exponent) of each pivot of a Howell form."""
    out = []
    for row in h.rows:
        nz = np.nonzero(row)[0]
        c = int(nz[0])
        v = int(row[c])
        a = 0
        while v % h.p == 0:
            v //= h.p
            a += 1
        out.append((c, a))
    return out


def _reduce(h: ChainMatrix, piv: list[tuple[int, int]], v: np.ndarray, track: bool = False):
    q = h.modulus
    w = np.mod(np.asarray(v, dtype=np.int64), q)
    coeffs = np.zeros(h.rows.shape[0], dtype=np.int64) if track else None
    for k, (c, a) in enumerate(piv):
        if np.any(w[:c]):
            return w, coeffs, False
        pa = h.p**a
        if w[c] % pa:
            return w, coeffs, False
        f = int(w[c]) // pa
        if f:
            w = (w - f * h.rows[k]) % q
            if track:
                coeffs[k] = f
    return w, coeffs, not np.any(w)


def left_kernel(m: ChainMatrix) -> ChainMatrix:
    """Howell form of ``{x : x m = 0}`` over ``Z/p^n``."""
    r, c = m.shape
    aug = ChainMatrix(m.p, m.n, np.hstack([m.rows, np.eye(r, dtype=np.int64)]), ncols=c + r)
    h = howell_form(aug)
    keep = [row[c:] for row in h.rows if not np.any(row[:c])]
    return howell_form(ChainMatrix(m.p, m.n, np.array(keep, dtype=np.int64).reshape(len(keep), r), ncols=r))


def solve_membership(gens: ChainMatrix, v) -> Optional[np.ndarray]:
    """Coefficients ``x`` with ``x @ gens == v`` (mod p^n), or ``None``."""
    r, c = gens.shape
    aug = ChainMatrix(gens.p, gens.n, np.hstack([gens.rows, np.eye(r, dtype=np.int64)]), ncols=c + r)
    h = howell_form(aug)
    piv = pivot_structure(h)
    w = np.concatenate([np.mod(np.asarray(v, dtype=np.int64), gens.modulus), np.zeros(r, dtype=np.int64)])
    q = gens.modulus
    for k, (col, a) in enumerate(piv):
        if col >= c:
            break
        if np.any(w[:col]):
            return None
        pa = gens.p**a
        if w[col] % pa:
            return None
        f = int(w[col]) // pa
        if f:
            w = (w - f * h.rows[k]) % q
    if np.any(w[:c]):
        return None
    return (-w[c:]) % q


class FlatLattice:
    """A ``Z/p^n``-submodule of ``(Z/p^n)^dim`` kept in Howell form.

    ``closure`` optionally maps a vector to the matrix of all its multiples the
    span must contain (for instance the products with every divided monomial,
    which turns a ``Z``-span into an ``S``-span).  It must already be closed:
    multiples of multiples are not expanded again.
    """

    __slots__ = ("p", "n", "dim", "basis", "_piv")

    def __init__(self, basis: ChainMatrix, dim: int):
        self.p = basis.p
        self.n = basis.n
        self.dim = dim
        self.basis = basis
        self._piv = pivot_structure(basis)

    # construction -----------------------------------------------------
    @classmethod
    def span(cls, p: int, n: int, dim: int, gens, closure: Optional[Callable] = None) -> "FlatLattice":
        g = np.asarray(gens, dtype=np.int64).reshape(-1, dim) if len(gens) else np.zeros((0, dim), dtype=np.int64)
        if closure is None:
            return cls(howell_form(ChainMatrix(p, n, g, ncols=dim)), dim)
        lat = cls.zero(p, n, dim)
        for v in g:
            if lat.contains(v):
                continue
            stack = np.vstack([lat.basis.rows, np.mod(closure(v), p**n)])
            lat = cls(howell_form(ChainMatrix(p, n, stack, ncols=dim)), dim)
        return lat

    @classmethod
    def zero(cls, p: int, n: int, dim: int) -> "FlatLattice":
        return cls(ChainMatrix(p, n, np.zeros((0, dim), dtype=np.int64), ncols=dim), dim)

    @classmethod
    def full(cls, p: int, n: int, dim: int) -> "FlatLattice":
        return cls(ChainMatrix(p, n, np.eye(dim, dtype=np.int64)), dim)

    # queries ----------------------------------------------------------
    @property
    def rows(self) -> np.ndarray:
        return self.basis.rows

    @property
    def modulus(self) -> int:
        return self.basis.modulus

    def contains(self, v) -> bool:
        return _reduce(self.basis, self._piv, v)[2]

    def contains_lattice(self, other: "FlatLattice") -> bool:
        self._check(other)
        return all(self.contains(r) for r in other.rows)

    def solve(self, v) -> Optional[np.ndarray]:
        """Coefficients on the Howell rows, or ``None`` if ``v`` is not a member."""
        w, coeffs, ok = _reduce(self.basis, self._piv, v, track=True)
        return coeffs if ok else None

    def log_size(self) -> int:
        """log_p of the number of elements."""
        return sum(self.n - a for _, a in self._piv)

    def content(self) -> int:
        """Largest t with every element divisible by p^t (n for the zero lattice)."""
        if not self.rows.shape[0]:
            return self.n
        return int(_valuations(self.rows.ravel(), self.p, self.n).min())

    def containment_exponent(self) -> Optional[int]:
        """Smallest h with ``p^h (Z/p^n)^dim`` inside the lattice (``n`` if not of full rank)."""
        q = self.modulus
        for h in range(self.n + 1):
            test = (np.eye(self.dim, dtype=np.int64) * (self.p**h)) % q
            ok = True
            for k, (c, a) in enumerate(self._piv):
                col = test[:, c]
                pa = self.p**a
                if np.any(col % pa):
                    ok = False
                    break
                f = col // pa
                if np.any(f):
                    test = (test - np.outer(f, self.rows[k]) % q) % q
            if ok and not np.any(test):
                return h
        return None

    # algebra ----------------------------------------------------------
    def _check(self, other: "FlatLattice") -> None:
        if (self.p, self.n, self.dim) != (other.p, other.n, other.dim):
            raise AmbientMismatch(
                f"ambient (p={self.p}, n={self.n}, dim={self.dim}) vs "
                f"(p={other.p}, n={other.n}, dim={other.dim})"
            )

    def __add__(self, other: "FlatLattice") -> "FlatLattice":
        self._check(other)
        stack = np.vstack([self.rows, other.rows])
        return FlatLattice(howell_form(ChainMatrix(self.p, self.n, stack, ncols=self.dim)), self.dim)

    def intersection(self, other: "FlatLattice") -> "FlatLattice":
        self._check(other)
        d = self.dim
        top = np.hstack([self.rows, self.rows])
        bot = np.hstack([other.rows, np.zeros_like(other.rows)])
        h = howell_form(ChainMatrix(self.p, self.n, np.vstack([top, bot]), ncols=2 * d))
        keep = [row[d:] for row in h.rows if not np.any(row[:d])]
        return FlatLattice.span(self.p, self.n, d, keep)

    def preimage(self, matrix: np.ndarray) -> "FlatLattice":
        """``{x : x @ matrix in self}`` for a ``(k, dim)`` integer matrix."""
        k = matrix.shape[0]
        top = np.hstack([np.mod(matrix, self.modulus), np.eye(k, dtype=np.int64)])
        bot = np.hstack([self.rows, np.zeros((self.rows.shape[0], k), dtype=np.int64)])
        h = howell_form(ChainMatrix(self.p, self.n, np.vstack([top, bot]), ncols=self.dim + k))
        keep = [row[self.dim:] for row in h.rows if not np.any(row[: self.dim])]
        return FlatLattice.span(self.p, self.n, k, keep)

    def scale(self, t: int) -> "FlatLattice":
        return FlatLattice.span(self.p, self.n, self.dim, (self.rows * (self.p**t)) % self.modulus)

    def with_precision(self, n: int) -> "FlatLattice":
        """Image in ``(Z/p^n)^dim`` for ``n`` no larger than the current one."""
        if n > self.n:
            raise ValueError("cannot raise precision of a stored lattice")
        return FlatLattice.span(self.p, n, self.dim, self.rows % (self.p**n))

    def lift(self, n: int, h: int) -> "FlatLattice":
        """Lift to precision ``n`` knowing the true lattice contains ``p^h`` times everything."""
        q = self.p**n
        rows = np.vstack([self.rows, (np.eye(self.dim, dtype=np.int64) * self.p**h) % q])
        return FlatLattice(howell_form(ChainMatrix(self.p, n, rows, ncols=self.dim)), self.dim)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlatLattice):
            return NotImplemented
        return (self.dim == other.dim) and self.basis == other.basis

    def __hash__(self) -> int:
        return hash((self.dim, self.basis))

    def __repr__(self) -> str:
        return f"FlatLattice(p={self.p}, n={self.n}, dim={self.dim}, rank_rows={self.rows.shape[0]})"


def lattice_sum(a: FlatLattice, b: FlatLattice) -> FlatLattice:
    return a + b


def lattice_eq(a: FlatLattice, b: FlatLattice) -> bool:
    a._check(b)
    return a == b


def span_enumeration(gens: Sequence[Sequence[int]], modulus: int) -> set[tuple[int, ...]]:
    """All Z/modulus-combinations of ``gens`` (brute force, for tiny cases)."""
    gens = [tuple(int(x) % modulus for x in g) for g in gens]
    if not gens:
        return set()
    dim = len(gens[0])
    seen = {tuple([0] * dim)}
    frontier = list(seen)
    while frontier:
        nxt = []
        for v in frontier:
            for g in gens:
                w = tuple((a + b) % modulus for a, b in zip(v, g))
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return seen


def stack(rows: Iterable[np.ndarray], dim: int) -> np.ndarray:
    rows = list(rows)
    if not rows:
        return np.zeros((0, dim), dtype=np.int64)
    return np.vstack(rows).astype(np.int64)


class LinearSolver:
    """Repeated coefficient recovery against a fixed generator matrix.

    ``solve(v)`` returns ``x`` with ``x @ gens == v`` or ``None``; the Howell
    form of ``[gens | I]`` is computed once.
    """

    def __init__(self, gens: ChainMatrix):
        self.gens = gens
        r, c = gens.shape
        self.ncols = c
        aug = ChainMatrix(gens.p, gens.n, np.hstack([gens.rows, np.eye(r, dtype=np.int64)]), ncols=c + r)
        self._h = howell_form(aug)
        self._piv = pivot_structure(self._h)
        self._kernel = None

    def solve(self, v) -> Optional[np.ndarray]:
        h, c, q, p = self._h, self.ncols, self.gens.modulus, self.gens.p
        r = self.gens.shape[0]
        w = np.concatenate([np.mod(np.asarray(v, dtype=np.int64), q), np.zeros(r, dtype=np.int64)])
        for k, (col, a) in enumerate(self._piv):
            if col >= c:
                break
            if np.any(w[:col]):
                return None
            pa = p**a
            if w[col] % pa:
                return None
            f = int(w[col]) // pa
            if f:
                w = (w - f * h.rows[k]) % q
        if np.any(w[:c]):
            return None
        return (-w[c:]) % q

    def kernel(self) -> np.ndarray:
        """Rows spanning ``{x : x @ gens == 0}``."""
        if self._kernel is None:
            c = self.ncols
            keep = [row[c:] for row in self._h.rows if not np.any(row[:c])]
            r = self.gens.shape[0]
            self._kernel = np.array(keep, dtype=np.int64).reshape(len(keep), r)
        return self._kernel
