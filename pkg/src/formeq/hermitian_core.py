"""Dense Hermitian linear algebra used throughout the package.

Matrices are plain numpy arrays.  Most routines accept a stack of matrices
with shape ``(..., n, n)`` so they can be evaluated over a whole grid at once.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np


class SingularMatrixError(ValueError):
    """Raised when a matrix that must be inverted is numerically singular."""


# ---------------------------------------------------------------------------
# index bookkeeping


@lru_cache(maxsize=None)
def subsets(n, k):
    """Sorted k-subsets of range(n) in lexicographic order."""
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def subset_index(n, k):
    return {s: i for i, s in enumerate(subsets(n, k))}


def perm_sign(seq):
    """Parity of the permutation that sorts ``seq`` (entries distinct)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def complement(n, I):
    s = set(I)
    return tuple(i for i in range(n) if i not in s)


@dataclass(frozen=True)
class SubspaceSelector:
    """A coordinate index set or an orthonormal basis of a subspace.

    Exactly one of ``indices`` / ``basis`` is set.  ``basis`` columns span
    the subspace.
    """

    indices: tuple = None
    basis: np.ndarray = None

    def __post_init__(self):
        if (self.indices is None) == (self.basis is None):
            raise ValueError("give either indices or basis")
        if self.indices is not None:
            idx = tuple(int(i) for i in self.indices)
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValueError("indices must be strictly increasing")
            object.__setattr__(self, "indices", idx)
        else:
            E = np.atleast_2d(np.asarray(self.basis, dtype=complex))
            gram = E.conj().T @ E
            if not np.allclose(gram, np.eye(E.shape[1]), atol=1e-12):
                raise ValueError("basis columns are not orthonormal")
            object.__setattr__(self, "basis", E)

    @property
    def dim(self):
        return len(self.indices) if self.indices is not None else self.basis.shape[1]

    def matrix(self, n):
        """n x d matrix whose columns span the subspace."""
        if self.basis is not None:
            if self.basis.shape[0] != n:
                raise ValueError("basis has wrong ambient dimension")
            return self.basis
        if self.indices and max(self.indices) >= n:
            raise IndexError("subspace index out of range")
        return np.eye(n, dtype=complex)[:, list(self.indices)]

    def projector(self, n):
        E = self.matrix(n)
        return E @ E.conj().T


def as_selector(s):
    if isinstance(s, SubspaceSelector):
        return s
    return SubspaceSelector(indices=tuple(s))


# ---------------------------------------------------------------------------
# classification


def hermitize(A):
    A = np.asarray(A)
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def is_hermitian(A, tol=1e-12):
    A = np.asarray(A)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    return bool(np.all(np.abs(A - np.conj(np.swapaxes(A, -1, -2))) <= tol * scale))


def is_positive_definite(A):
    """min eigenvalue > n * eps * ||A||."""
    A = np.asarray(A)
    n = A.shape[-1]
    w = np.linalg.eigvalsh(hermitize(A))
    norm = np.linalg.norm(A, axis=(-2, -1))
    return w[..., 0] > n * np.finfo(float).eps * norm


def is_psd(A, tol=1e-12):
    A = np.asarray(A)
    w = np.linalg.eigvalsh(hermitize(A))
    norm = np.linalg.norm(A, axis=(-2, -1))
    return w[..., 0] >= -tol * np.maximum(norm, 1e-300)


# ---------------------------------------------------------------------------
# minors and compound matrices


def minor(A, I, J):
    """Determinant of the submatrix of A with rows I and columns J."""
    A = np.asarray(A)
    I, J = tuple(I), tuple(J)
    if len(I) != len(J):
        raise ValueError("row and column index sets differ in size")
    n = A.shape[-1]
    if any(i < 0 or i >= n for i in I + J):
        raise IndexError("minor index out of range")
    if not I:
        return np.ones(A.shape[:-2], dtype=A.dtype)[()]
    return np.linalg.det(A[..., list(I), :][..., :, list(J)])


def compound(A, k):
    """k-th compound matrix: all k x k minors, rows/cols indexed by subsets(n, k).

    Works on stacks (..., n, n) and returns (..., C(n,k), C(n,k)).
    """
    A = np.asarray(A)
    n = A.shape[-1]
    S = subsets(n, k)
    if k == 0:
        return np.ones(A.shape[:-2] + (1, 1), dtype=A.dtype)
    if k == 1:
        return A.copy()
    if k == n:
        return np.linalg.det(A)[..., None, None]
    idx = np.array(S)
    sub = A[..., idx[:, None, :, None], idx[None, :, None, :]]
    return np.linalg.det(sub)


# ---------------------------------------------------------------------------
# inverses, restrictions, Schur complements


def safe_inv(A, cond_max=1e14):
    A = np.asarray(A)
    c = np.linalg.cond(A)
    if np.any(~np.isfinite(c)) or np.any(c > cond_max):
        raise SingularMatrixError(
            "matrix is numerically singular (condition number %.3e)" % float(np.max(c)))
    return np.linalg.inv(A)


def restrict(A, sel):
    """Compression E^dagger A E of A onto the subspace ``sel``."""
    A = np.asarray(A)
    E = as_selector(sel).matrix(A.shape[-1])
    return E.conj().T @ A @ E


@dataclass
class SchurBlocks:
    H: np.ndarray          # top-left block (complement of split)
    D: np.ndarray          # off-diagonal block
    V: np.ndarray          # bottom-right block (the split indices)
    H_hat: np.ndarray      # H - D V^-1 D^dagger
    V_hat: np.ndarray      # V - D^dagger H^-1 D
    inv_blocks: tuple      # blocks (TL, TR, BL, BR) of A^-1 assembled blockwise
    order: tuple           # permutation used: complement indices then split

    def assembled_inverse(self):
        """A^-1 in the original index order."""
        TL, TR, BL, BR = self.inv_blocks
        M = np.block([[TL, TR], [BL, BR]])
        out = np.empty_like(M)
        p = np.array(self.order)
        out[np.ix_(p, p)] = M
        return out


def schur_split(A, split):
    """Block decomposition of A with V the rows/cols in ``split``.

    Returns the two Schur complements and the blockwise inverse
    [[H^-1_hat, -H^-1_hat D V^-1], [-V^-1 D^dagger H^-1_hat, V^-1 + V^-1 D^dagger H^-1_hat D V^-1]].
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    vs = list(as_selector(split).indices)
    hs = [i for i in range(n) if i not in vs]
    H = A[np.ix_(hs, hs)]
    D = A[np.ix_(hs, vs)]
    V = A[np.ix_(vs, vs)]
    safe_inv(A)
    Vi = safe_inv(V)
    H_hat = H - D @ Vi @ D.conj().T
    Hh_i = safe_inv(H_hat) if len(hs) else H_hat
    if len(hs):
        V_hat = V - D.conj().T @ safe_inv(H) @ D
    else:
        V_hat = V.copy()
    TL = Hh_i
    TR = -Hh_i @ D @ Vi
    BL = -Vi @ D.conj().T @ Hh_i
    BR = Vi + Vi @ D.conj().T @ Hh_i @ D @ Vi
    return SchurBlocks(H, D, V, H_hat, V_hat, (TL, TR, BL, BR), tuple(hs + vs))


def mp_ray_limit(A, V, rank_tol=1e-10):
    """Limit of (A + tV)^-1 as t -> +inf for A > 0 and V >= 0.

    Equals K (K^dagger A K)^-1 K^dagger where the columns of K span ker V.
    """
    A = np.asarray(A, dtype=complex)
    V = hermitize(np.asarray(V, dtype=complex))
    n = A.shape[-1]
    w, U = np.linalg.eigh(V)
    vnorm = np.linalg.norm(V)
    if vnorm == 0:
        raise ValueError("direction V is zero")
    if w[0] < -1e-12 * vnorm:
        raise ValueError("direction V is not positive semidefinite")
    K = U[:, w <= rank_tol * vnorm]
    if K.shape[1] == 0:
        return np.zeros((n, n), dtype=complex)
    inner = K.conj().T @ A @ K
    return hermitize(K @ np.linalg.solve(inner, K.conj().T))


# ---------------------------------------------------------------------------
# elementary symmetric functions


def esym(lam, k):
    """k-th elementary symmetric polynomial of the last axis of ``lam``."""
    lam = np.asarray(lam)
    m = lam.shape[-1]
    if k < 0 or k > m:
        return np.zeros(lam.shape[:-1])
    e = [np.ones(lam.shape[:-1], dtype=lam.dtype)] + [np.zeros(lam.shape[:-1], dtype=lam.dtype)] * k
    for j in range(m):
        x = lam[..., j]
        for r in range(min(k, j + 1), 0, -1):
            e[r] = e[r] + x * e[r - 1]
    return e[k]


def sigma(A, k):
    """k-th elementary symmetric function of the eigenvalues of Hermitian A."""
    A = np.asarray(A)
    n = A.shape[-1]
    if not 0 <= k <= n:
        raise ValueError("k out of range")
    lam = np.linalg.eigvalsh(hermitize(A))
    return esym(lam, k)


def sigma_by_minors(A, k):
    """Sum of principal k x k minors (slow oracle for ``sigma``)."""
    A = np.asarray(A)
    n = A.shape[-1]
    return sum(minor(A, I, I) for I in subsets(n, k)).real


def sigma_linearized(A, k):
    """T_{k-1}(A), the gradient of sigma_k at A.

    Normalized so that d/dt sigma_k(A + tB) = trace(T B).  For diagonal A this
    is diag(sigma_{k-1}(A|i)) with A|i the matrix with row/column i removed.
    """
    A = hermitize(np.asarray(A))
    n = A.shape[-1]
    if not 1 <= k <= n:
        raise ValueError("k out of range")
    lam, U = np.linalg.eigh(A)
    d = np.empty(lam.shape)
    for i in range(n):
        rest = np.delete(lam, i, axis=-1)
        d[..., i] = esym(rest, k - 1)
    return (U * d[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))


def frobenius(B):
    return float(np.linalg.norm(B))


def complement_sign(n, I, J):
    """Sign of the permutations (I, I^c) and (J, J^c) multiplied together."""
    return perm_sign(tuple(I) + complement(n, I)) * perm_sign(tuple(J) + complement(n, J))
