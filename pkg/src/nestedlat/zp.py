"""Linear codes over the prime field Z_p.

Residues are always stored as non-negative integers in ``[0, p-1]``.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BudgetExceeded, DimensionTooSmall, InvalidK1, InvalidShape, LengthMismatch
from .rng import as_generator


def is_prime(p):
    p = int(p)
    if p < 2:
        return False
    if p < 4:
        return True
    if p % 2 == 0:
        return False
    f = 3
    while f * f <= p:
        if p % f == 0:
            return False
        f += 2
    return True


def prime_for_dimension(n):
    """Largest prime ``p`` with ``n**1.5 / 2 <= p < n**1.5``."""
    if n < 2:
        raise DimensionTooSmall(f"n={n}: need n >= 2")
    top = n ** 1.5
    lo = top / 2
    cand = int(np.ceil(top)) - 1
    while cand >= lo:
        if is_prime(cand):
            return cand
        cand -= 1
    raise DimensionTooSmall(f"no prime in [{lo}, {top}) for n={n}")


@dataclass(frozen=True, eq=False)
class LinearCode:
    """A k x n generator matrix over Z_p."""

    p: int
    G: np.ndarray

    def __post_init__(self):
        G = np.array(self.G, dtype=np.int64, copy=True)
        # p = 1 is allowed only for the empty code of a plain integer lattice
        if not (is_prime(self.p) or (self.p == 1 and G.shape[0] == 0)):
            raise ValueError(f"p={self.p} is not prime")
        if G.ndim != 2:
            raise InvalidShape("generator must be 2-D")
        if G.shape[0] > G.shape[1]:
            raise InvalidShape(f"k={G.shape[0]} > n={G.shape[1]}")
        if G.size and (G.min() < 0 or G.max() >= self.p):
            raise ValueError("generator entries must lie in [0, p-1]")
        G.setflags(write=False)
        object.__setattr__(self, "G", G)

    @property
    def k(self):
        return self.G.shape[0]

    @property
    def n(self):
        return self.G.shape[1]

    @classmethod
    def trivial(cls, n, p):
        return cls(p, np.zeros((0, n), dtype=np.int64))

    def __eq__(self, other):
        return (isinstance(other, LinearCode) and self.p == other.p
                and np.array_equal(self.G, other.G) and self.G.shape == other.G.shape)

    def __hash__(self):
        return hash((self.p, self.G.shape, self.G.tobytes()))

    @cached_property
    def rank(self):
        return rank_mod_p(self)

    @cached_property
    def echelon(self):
        return row_echelon(self.G, self.p)

    def contains(self, vectors):
        return in_code(self, vectors)


def draw_generator(n, k, p, rng):
    """Generator matrix with i.i.d. uniform entries on Z_p."""
    if not 0 < k <= n:
        raise InvalidShape(f"need 0 < k <= n, got k={k}, n={n}")
    rng = as_generator(rng)
    return LinearCode(p, rng.integers(0, p, size=(k, n), dtype=np.int64))


def encode(code, w):
    """``w^T G mod p``; ``w`` may be a single message or a batch (rows)."""
    w = np.asarray(w, dtype=np.int64)
    if w.shape[-1] != code.k:
        raise LengthMismatch(f"message length {w.shape[-1]} != k={code.k}")
    # int64 is safe: k * (p-1)^2 stays far below 2**63 for any p used here
    return (w % code.p) @ code.G % code.p


def _inv_mod(a, p):
    return pow(int(a), -1, p)


def row_echelon(G, p):
    """Reduced row echelon form over Z_p.

    Returns ``(R, pivots)`` where ``R`` holds only the nonzero rows.
    """
    A = np.array(G, dtype=np.int64) % p
    rows, cols = A.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(A[r:, c])[0]
        if nz.size == 0:
            continue
        piv = r + nz[0]
        if piv != r:
            A[[r, piv]] = A[[piv, r]]
        A[r] = A[r] * _inv_mod(A[r, c], p) % p
        others = np.nonzero(A[:, c])[0]
        for i in others:
            if i != r:
                A[i] = (A[i] - A[i, c] * A[r]) % p
        pivots.append(c)
        r += 1
    return A[:r].copy(), tuple(pivots)


def rank_mod_p(code):
    G = code.G if isinstance(code, LinearCode) else np.asarray(code)
    p = code.p if isinstance(code, LinearCode) else None
    if p is None:
        raise TypeError("rank_mod_p needs a LinearCode")
    if G.size == 0:
        return 0
    return len(row_echelon(G, p)[1])


def in_code(code, vectors):
    """Exact membership test of length-n residue vectors in the code."""
    v = np.atleast_2d(np.asarray(vectors, dtype=np.int64)) % code.p
    if code.k == 0:
        return ~v.any(axis=1)
    R, pivots = code.echelon
    # subtract the echelon combination that matches the pivot coordinates
    coeff = v[:, list(pivots)]
    resid = (v - coeff @ R) % code.p
    return ~resid.any(axis=1)


def nested_subcode(code, k1):
    """The code generated by the first ``k1`` rows."""
    if not 0 < k1 <= code.k:
        raise InvalidK1(f"need 0 < k1 <= k={code.k}, got k1={k1}")
    return LinearCode(code.p, code.G[:k1])


def messages(p, k, budget=None):
    """All of Z_p^k in lexicographic order, last coordinate fastest."""
    total = p ** k
    if budget is not None and total > budget:
        raise BudgetExceeded(total, budget, "messages")
    idx = np.arange(total, dtype=np.int64)
    out = np.empty((total, k), dtype=np.int64)
    for j in range(k - 1, -1, -1):
        idx, out[:, j] = np.divmod(idx, p)
    return out


def enumerate_codewords(code, budget=1 << 24):
    """Every codeword, one per message (duplicates kept if rank-deficient)."""
    return encode(code, messages(code.p, code.k, budget)).reshape(-1, code.n)


def distinct_codewords(code, budget=1 << 24):
    return np.unique(enumerate_codewords(code, budget), axis=0)
