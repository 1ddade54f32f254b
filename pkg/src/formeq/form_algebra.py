"""Constant-coefficient (k,k)-forms and (k,k)-vectors.

A (k,k)-form is stored as a dense coefficient array ``c[I, J]`` over pairs of
sorted k-subsets (ordered as :func:`hermitian_core.subsets`), with

    form = (i^{k^2} / 2^k) * sum_{I,J} c[I, J] dz^I ^ dzbar^J.

With this normalization rho^k/k! has the k x k minors of rho as coefficients
and the top coefficient of an (n,n)-form is its density against Lebesgue
measure in the coordinates.  (k,k)-vectors use the dual normalization

    vec = sum_{I,J} v[I, J] 2^k i^{k^2} d/dzbar^J ^ d/dz^I,

so that the pairing is the plain bilinear sum ``sum(c * v)``.  Both kinds
multiply with the same signed-shuffle rule.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

from .hermitian_core import (
    as_selector,
    compound,
    hermitize,
    perm_sign,
    subset_index,
    subsets,
)


# ---------------------------------------------------------------------------
# containers


@dataclass
class FormComponent:
    """Coefficients of one real (k,k)-form on C^n."""

    n: int
    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        C = comb(self.n, self.k)
        if self.coeffs.shape[-2:] != (C, C):
            raise ValueError("coefficient array has shape %s, expected (%d, %d)"
                             % (self.coeffs.shape, C, C))

    def __add__(self, other):
        _check_same(self, other)
        return FormComponent(self.n, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return FormComponent(self.n, self.k, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return FormComponent(self.n, self.k, self.coeffs * s)

    __rmul__ = __mul__

    def __neg__(self):
        return FormComponent(self.n, self.k, -self.coeffs)

    def is_real(self, tol=1e-12):
        c = self.coeffs
        return bool(np.all(np.abs(c - np.conj(np.swapaxes(c, -1, -2))) <= tol * max(1.0, np.abs(c).max())))

    def entry(self, I, J):
        idx = subset_index(self.n, self.k)
        return self.coeffs[..., idx[tuple(I)], idx[tuple(J)]]

    @classmethod
    def zero(cls, n, k):
        C = comb(n, k)
        return cls(n, k, np.zeros((C, C), dtype=complex))


def _check_same(a, b):
    if a.n != b.n or a.k != b.k:
        raise ValueError("forms of different type (%d,%d) vs (%d,%d)" % (a.n, a.k, b.n, b.k))


@dataclass
class FormBundle:
    """Lambda = sum_k Lambda^[k] (k < n) plus Lambda^[n] = f rho^n/n!.

    ``components`` maps degree to FormComponent.  ``f`` is a scalar or an
    array of grid values.
    """

    n: int
    rho: np.ndarray
    components: dict = field(default_factory=dict)
    f: object = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.shape != (self.n, self.n):
            raise ValueError("rho must be n x n")
        for k, c in self.components.items():
            if c.n != self.n or c.k != k:
                raise ValueError("component of degree %d does not match" % k)
            if not 1 <= k <= self.n - 1:
                raise ValueError("component degrees must lie in 1..n-1")

    def degrees(self):
        return sorted(k for k, c in self.components.items())

    def coeff(self, k):
        c = self.components.get(k)
        if c is None:
            return np.zeros((comb(self.n, k),) * 2, dtype=complex)
        return c.coeffs

    def scaled(self, s, f=None):
        """s * (non-top part) with the density replaced by ``f`` (default s*f)."""
        comps = {k: c * s for k, c in self.components.items()}
        return FormBundle(self.n, self.rho, comps, s * self.f if f is None else f)

    def with_f(self, f):
        return FormBundle(self.n, self.rho, dict(self.components), f)

    def top_density(self):
        """Coefficient of Lambda^[n] against Lebesgue measure: f * det rho."""
        return self.f * np.linalg.det(self.rho).real

    def lowest_degree(self):
        nz = [k for k in self.degrees() if np.any(self.components[k].coeffs != 0)]
        return min(nz) if nz else None


# ---------------------------------------------------------------------------
# wedge products


@lru_cache(maxsize=None)
def _shuffle_table(n, ka, kb):
    Sa, Sb = subsets(n, ka), subsets(n, kb)
    idx = subset_index(n, ka + kb)
    T = np.zeros((len(Sa), len(Sb), len(idx)))
    for i, I in enumerate(Sa):
        for j, K in enumerate(Sb):
            if set(I) & set(K):
                continue
            T[i, j, idx[tuple(sorted(I + K))]] = perm_sign(I + K)
    T.setflags(write=False)
    return T


def wedge_coeffs(a, ka, b, kb, n):
    """Coefficient array of a ^ b for coefficient arrays (batched over leading axes)."""
    if ka + kb > n:
        raise ValueError("degree overflow: %d + %d > %d" % (ka, kb, n))
    if ka == 0:
        return a[..., 0, 0][..., None, None] * b
    if kb == 0:
        return b[..., 0, 0][..., None, None] * a
    T = _shuffle_table(n, ka, kb)
    tmp = np.einsum("IKM,...IJ->...KMJ", T, a)
    tmp = np.einsum("...KMJ,...KL->...MJL", tmp, b)
    return np.einsum("...MJL,JLN->...MN", tmp, T)


def wedge(a, b):
    if a.n != b.n:
        raise ValueError("dimension mismatch")
    return FormComponent(a.n, a.k + b.k, wedge_coeffs(a.coeffs, a.k, b.coeffs, b.k, a.n))


def top_coefficient(c):
    """Scalar coefficient of an (n,n) coefficient array."""
    return c[..., 0, 0]


# ---------------------------------------------------------------------------
# standard forms


def power_form(rho, k, scale=1.0):
    """scale * rho^k / k!"""
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[-1]
    if not 0 <= k <= n:
        raise ValueError("k out of range")
    return FormComponent(n, k, scale * compound(rho, k))


def exp_form(omega, top=None):
    """[omega^k/k! for k = 0..top] as FormComponents."""
    omega = np.asarray(omega, dtype=complex)
    n = omega.shape[-1]
    top = n if top is None else top
    if not 0 <= top <= n:
        raise ValueError("top out of range")
    return [FormComponent(n, k, compound(omega, k)) for k in range(top + 1)]


def one_one_form(M):
    M = np.asarray(M, dtype=complex)
    return FormComponent(M.shape[-1], 1, M)


def pairing(c, v):
    """Bilinear pairing of a form with a vector of the same degree."""
    c = c.coeffs if isinstance(c, FormComponent) else c
    v = v.coeffs if isinstance(v, FormComponent) else v
    return np.sum(c * v, axis=(-2, -1))


def chi_power(Ainv, k):
    """Coefficients of chi^k/k! for chi built from A^-1: v[I, J] = det A^-1[J, I]."""
    return compound(np.swapaxes(np.asarray(Ainv), -1, -2), k)


def pair_with_chi_power(c, Ainv, k=None):
    """<Lambda^[k], chi^k/k!> = sum_{I,J} c[I,J] det(A^-1[J, I]).

    ``k`` is required when ``c`` is a raw array, since C(n,k) = C(n,n-k).
    """
    if isinstance(c, FormComponent):
        k, coeffs = c.k, c.coeffs
    else:
        if k is None:
            raise ValueError("degree k is required for raw coefficient arrays")
        coeffs = np.asarray(c)
    val = pairing(coeffs, chi_power(Ainv, k))
    return val.real


def wedge_quotient(c, A):
    """Oracle for pair_with_chi_power: top(c ^ A^{n-k}/(n-k)!) / det A."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    num = top_coefficient(wedge_coeffs(c.coeffs, c.k, compound(A, n - c.k), n - c.k, n))
    return (num / np.linalg.det(A)).real


# ---------------------------------------------------------------------------
# duality for (n-1,n-1)-forms


@lru_cache(maxsize=None)
def _codim_one_signs(n):
    idx = subset_index(n, n - 1)
    pos, sgn = [], []
    for i in range(n):
        I = tuple(j for j in range(n) if j != i)
        pos.append(idx[I])
        sgn.append(perm_sign(I + (i,)))
    return np.array(pos), np.array(sgn, dtype=float)


def dual_cone_matrix(alpha):
    """Hermitian Q with top(alpha ^ (i/2) b ^ bbar) = b^dagger Q b.

    Here b is the column of covector components, so the (1,1)-form
    (i/2) b ^ bbar has coefficient matrix b b^dagger.  Accepts a
    FormComponent of degree n-1 or a batched coefficient array.
    """
    if isinstance(alpha, FormComponent):
        n, a = alpha.n, alpha.coeffs
        if alpha.k != n - 1:
            raise ValueError("dual cone matrix needs a form of degree n-1")
    else:
        a = np.asarray(alpha)
        n = next(m for m in range(1, 9) if comb(m, m - 1) == a.shape[-1])
    if n == 1:
        return a.copy()
    pos, sgn = _codim_one_signs(n)
    K = a[..., pos[:, None], pos[None, :]] * (sgn[:, None] * sgn[None, :])
    return np.swapaxes(K, -1, -2)


# ---------------------------------------------------------------------------
# restriction and embedding


def restrict_coeffs(c, n, k, indices):
    """Coefficients of the restriction to the coordinate subspace ``indices``."""
    indices = tuple(indices)
    d = len(indices)
    idx = subset_index(n, k)
    rows = [idx[tuple(indices[i] for i in S)] for S in subsets(d, k)]
    return c[..., rows, :][..., :, rows]


def embed_coeffs(c, d, k, n, indices):
    """Pull back a (k,k)-form on C^d to C^n along the coordinate projection onto ``indices``."""
    idx = subset_index(n, k)
    rows = [idx[tuple(indices[i] for i in S)] for S in subsets(d, k)]
    C = comb(n, k)
    out = np.zeros(c.shape[:-2] + (C, C), dtype=complex)
    out[..., np.array(rows)[:, None], np.array(rows)[None, :]] = c
    return out


def block_rho(rho, sel):
    """rho_i = pi_i^* rho for the rho-orthogonal projection onto the block ``sel``.

    Equals rho E (E^dagger rho E)^-1 E^dagger rho with E spanning the block.
    """
    rho = np.asarray(rho, dtype=complex)
    E = as_selector(sel).matrix(rho.shape[-1])
    R = rho @ E
    return R @ np.linalg.solve(E.conj().T @ R, R.conj().T)


@dataclass(frozen=True)
class SplittingLabel:
    """Labeled orthogonal splitting: blocks (selector, k) covering C^n."""

    n: int
    blocks: tuple

    def __post_init__(self):
        blocks = tuple((as_selector(s), int(k)) for s, k in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if sum(s.dim for s, _ in blocks) != self.n:
            raise ValueError("block dimensions must add up to n")
        for s, k in blocks:
            if not 1 <= k <= s.dim:
                raise ValueError("labels must satisfy 1 <= k_i <= d_i")
        E = np.hstack([s.matrix(self.n) for s, _ in blocks])
        if not np.allclose(E.conj().T @ E, np.eye(self.n), atol=1e-12):
            raise ValueError("blocks are not mutually orthogonal")

    @classmethod
    def trivial(cls, n, k0):
        return cls(n, ((tuple(range(n)), k0),))

    @property
    def n_p(self):
        return len(self.blocks)

    @property
    def dims(self):
        return tuple(s.dim for s, _ in self.blocks)

    @property
    def labels(self):
        return tuple(k for _, k in self.blocks)

    def check_rho_orthogonal(self, rho, tol=1e-12):
        mats = [s.matrix(self.n) for s, _ in self.blocks]
        scale = max(1.0, float(np.abs(rho).max()))
        for i in range(len(mats)):
            for j in range(i + 1, len(mats)):
                if np.abs(mats[i].conj().T @ rho @ mats[j]).max() > tol * scale:
                    return False
        return True

    def block_forms(self, rho):
        """[(rho_i, k_i)] for each block."""
        return [(block_rho(rho, s), k) for s, k in self.blocks]


# ---------------------------------------------------------------------------
# positivity


@dataclass
class ProbeResult:
    passed: bool
    min_value: float
    witness: object = None
    exact: bool = False
    samples: int = 0


def decomposable_vectors(n, k, samples, rng):
    """Random strongly positive decomposable (k,k)-vectors.

    Built as wedges of k rank-one vectors xi xi^dagger; the coefficient
    array is m m^dagger with m the k x k minors of the n x k matrix of xis.
    """
    X = rng.standard_normal((samples, n, k)) + 1j * rng.standard_normal((samples, n, k))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    if k == 0:
        m = np.ones((samples, 1), dtype=complex)
    else:
        S = np.array(subsets(n, k))
        m = np.linalg.det(X[:, S, :])
    return m[:, :, None] * np.conj(m[:, None, :])


def positivity_probe(c, samples=2000, seed=0, tol=1e-12):
    """Sampled (or, for k in {0, 1, n-1, n}, exact) positivity test of a real (k,k)-form."""
    n, k, coeffs = c.n, c.k, c.coeffs
    scale = max(1.0, float(np.abs(coeffs).max()))
    if k in (0, 1, n - 1, n):
        H = hermitize(coeffs)
        w, U = np.linalg.eigh(H)
        ok = bool(w[0] >= -tol * scale)
        wit = None
        if not ok:
            m = np.conj(U[:, 0])
            wit = m[:, None] * np.conj(m[None, :])
        return ProbeResult(ok, float(w[0]), wit, exact=True, samples=0)
    rng = np.random.default_rng(seed)
    V = decomposable_vectors(n, k, samples, rng)
    vals = pairing(coeffs[None], V).real
    j = int(np.argmin(vals))
    ok = bool(vals[j] >= -tol * scale)
    return ProbeResult(ok, float(vals[j]), None if ok else V[j], exact=False, samples=samples)


# ---------------------------------------------------------------------------
# JSON round trip (1-based indices in files)


def component_to_json(c, tol=0.0):
    S = subsets(c.n, c.k)
    entries = []
    for a, I in enumerate(S):
        for b, J in enumerate(S):
            z = complex(c.coeffs[a, b])
            if abs(z) > tol:
                entries.append([[i + 1 for i in I], [j + 1 for j in J], z.real, z.imag])
    return {"k": c.k, "entries": entries}


def component_from_json(obj, n):
    k = int(obj["k"])
    C = comb(n, k)
    coeffs = np.zeros((C, C), dtype=complex)
    idx = subset_index(n, k)
    seen = set()
    for I, J, re, im in obj["entries"]:
        I = tuple(sorted(i - 1 for i in I))
        J = tuple(sorted(j - 1 for j in J))
        a, b = idx[I], idx[J]
        coeffs[a, b] = complex(re, im)
        seen.add((a, b))
    for a, b in list(seen):
        if (b, a) not in seen:
            coeffs[b, a] = np.conj(coeffs[a, b])
    return FormComponent(n, k, coeffs)


def matrix_to_json(M):
    M = np.asarray(M, dtype=complex)
    if np.all(M.imag == 0):
        return M.real.tolist()
    return [[[z.real, z.imag] for z in row] for row in M]


def matrix_from_json(obj):
    """Rows of entries, each a real number or a [re, im] pair."""
    rows = [[complex(z[0], z[1]) if isinstance(z, (list, tuple)) else complex(z) for z in row]
            for row in obj]
    if len({len(r) for r in rows}) > 1:
        raise ValueError("ragged matrix")
    return np.array(rows, dtype=complex)


def bundle_to_json(b):
    f = b.f
    f = float(f) if np.ndim(f) == 0 else np.asarray(f).tolist()
    return {
        "n": b.n,
        "components": [component_to_json(b.components[k]) for k in b.degrees()],
        "f": f,
        "rho": matrix_to_json(b.rho),
    }


def bundle_from_json(obj):
    n = int(obj["n"])
    rho = matrix_from_json(obj["rho"]) if "rho" in obj else np.eye(n, dtype=complex)
    comps = {}
    for item in obj.get("components", []):
        c = component_from_json(item, n)
        comps[c.k] = comps[c.k] + c if c.k in comps else c
    return FormBundle(n, rho, comps, float(obj.get("f", 0.0)))


def rho_power_bundle(rho, weights, f=0.0):
    """Bundle sum_k weights[k] * rho^k/k! over the given degrees."""
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[-1]
    comps = {k: power_form(rho, k, w) for k, w in weights.items() if 1 <= k <= n - 1}
    return FormBundle(n, rho, comps, f)
