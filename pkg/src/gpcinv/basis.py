"""Jacobi polynomial chaos bases on shifted-Beta input measures."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import special

from .distributions import DomainError, ShiftedBeta

__all__ = [
    "JacobiFamily",
    "MultiIndexSet",
    "TensorBasis",
    "jacobi_from_beta",
    "affine_to_canonical",
    "canonical_to_affine",
    "jacobi_eval_all",
    "gauss_jacobi",
    "univariate_norms",
    "total_degree_multiindices",
    "build_basis",
]


@dataclass(frozen=True)
class JacobiFamily:
    """Jacobi polynomials orthogonal for the weight ``(1-z)**alpha * (1+z)**beta``."""

    alpha: float
    beta: float
    max_degree: int

    def __post_init__(self):
        if not (self.alpha > -1 and self.beta > -1):
            raise DomainError(f"Jacobi exponents must exceed -1, got ({self.alpha}, {self.beta})")
        if self.max_degree < 0:
            raise DomainError("max_degree must be non-negative")


def jacobi_from_beta(prior: ShiftedBeta, max_degree: int = 0) -> JacobiFamily:
    """Family orthogonal under ``prior`` pushed to [-1, 1].

    Beta(a, b) on [0, 1] becomes the weight ``(1-z)**(b-1) (1+z)**(a-1)``.
    """
    return JacobiFamily(prior.b - 1.0, prior.a - 1.0, int(max_degree))


def affine_to_canonical(xi, lo, hi):
    return 2.0 * (np.asarray(xi, dtype=float) - lo) / (hi - lo) - 1.0


def canonical_to_affine(z, lo, hi):
    return lo + 0.5 * (np.asarray(z, dtype=float) + 1.0) * (hi - lo)


@numba.njit(cache=True)
def _jacobi_fill(alpha, beta, z, out):
    # classical three-term recurrence for P_n^(alpha, beta)
    p = out.shape[0] - 1
    out[0] = 1.0
    if p == 0:
        return
    ab = alpha + beta
    out[1] = 0.5 * ((alpha - beta) + (ab + 2.0) * z)
    for n in range(2, p + 1):
        c = 2.0 * n + ab
        a1 = 2.0 * n * (n + ab) * (c - 2.0)
        a2 = (c - 1.0) * (c * (c - 2.0) * z + alpha * alpha - beta * beta)
        a3 = 2.0 * (n + alpha - 1.0) * (n + beta - 1.0) * c
        out[n] = (a2 * out[n - 1] - a3 * out[n - 2]) / a1


@numba.njit(cache=True)
def _jacobi_table(alpha, beta, p, zs):
    out = np.empty((zs.shape[0], p + 1))
    for i in range(zs.shape[0]):
        _jacobi_fill(alpha, beta, zs[i], out[i])
    return out


def jacobi_eval_all(family: JacobiFamily, z):
    """Values ``psi_0(z), ..., psi_p(z)``.

    Scalar ``z`` gives shape ``(p+1,)``; an array gives ``z.shape + (p+1,)``.
    Points outside [-1, 1] are evaluated without complaint.
    """
    z = np.asarray(z, dtype=float)
    flat = np.ascontiguousarray(z.reshape(-1))
    tab = _jacobi_table(float(family.alpha), float(family.beta), int(family.max_degree), flat)
    return tab.reshape(z.shape + (family.max_degree + 1,))


def gauss_jacobi(family: JacobiFamily, n_nodes: int):
    """Gauss-Jacobi nodes on [-1, 1] with weights normalized to sum to one."""
    z, w = special.roots_jacobi(n_nodes, family.alpha, family.beta)
    return z, w / w.sum()


def univariate_norms(family: JacobiFamily, n_nodes: int | None = None) -> np.ndarray:
    """``E[psi_j^2]`` for ``j = 0..p`` under the probability measure of ``family``."""
    p = family.max_degree
    if n_nodes is None:
        n_nodes = p + 2
    if n_nodes < p + 1:
        raise RuntimeError(f"{n_nodes} quadrature nodes cannot integrate degree {2 * p} exactly")
    z, w = gauss_jacobi(family, n_nodes)
    vals = jacobi_eval_all(family, z)
    norms = w @ (vals * vals)
    norms[0] = 1.0
    return norms


def total_degree_multiindices(d: int, p: int) -> np.ndarray:
    """All ``alpha`` in N^d with ``sum(alpha) <= p``, graded lexicographic order.

    Rows are sorted by total degree, and within a degree in descending
    lexicographic order, so for ``d=2, p=1`` the result is
    ``[[0, 0], [1, 0], [0, 1]]``.
    """
    if d < 1 or p < 0:
        raise ValueError(f"need d >= 1 and p >= 0, got d={d}, p={p}")
    card = math.comb(p + d, d)
    if card > np.iinfo(np.int64).max:
        raise OverflowError(f"cardinality {card} of the (d={d}, p={p}) total-degree set overflows int64")
    out = np.empty((card, d), dtype=np.int64)
    row = 0

    def fill(prefix, pos, remaining):
        nonlocal row
        if pos == d - 1:
            out[row, :pos] = prefix
            out[row, pos] = remaining
            row += 1
            return
        for k in range(remaining, -1, -1):
            prefix.append(k)
            fill(prefix, pos + 1, remaining - k)
            prefix.pop()

    for deg in range(p + 1):
        fill([], 0, deg)
    return out


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    """Truncated multi-index set; ``indices`` is an (m, d) integer array."""

    indices: np.ndarray
    degree: int

    @classmethod
    def total_degree(cls, d: int, p: int) -> "MultiIndexSet":
        return cls(total_degree_multiindices(d, p), p)

    @property
    def dim(self) -> int:
        return self.indices.shape[1]

    def __len__(self):
        return self.indices.shape[0]

    def position(self, alpha) -> int:
        hits = np.flatnonzero((self.indices == np.asarray(alpha)).all(axis=1))
        if hits.size == 0:
            raise KeyError(f"multi-index {tuple(alpha)} not in set")
        return int(hits[0])

    def label(self, a: int) -> str:
        return "(" + ",".join(str(int(k)) for k in self.indices[a]) + ")"


@dataclass(frozen=True, eq=False)
class TensorBasis:
    """Tensor-product Jacobi basis over independent shifted-Beta inputs.

    Polynomials are kept unnormalized; ``norms[a]`` holds
    ``E[psi_a(xi)^2]`` under the input measure.
    """

    priors: tuple
    index_set: MultiIndexSet
    families: tuple = field(init=False)
    norms: np.ndarray = field(init=False)
    strict: bool = True

    def __post_init__(self):
        if len(self.priors) != self.index_set.dim:
            raise ValueError(
                f"{len(self.priors)} priors for a {self.index_set.dim}-dimensional index set"
            )
        p = self.index_set.degree
        fams = tuple(jacobi_from_beta(pr, p) for pr in self.priors)
        uni = np.array([univariate_norms(f) for f in fams])  # (d, p+1)
        idx = self.index_set.indices
        z = np.prod(uni[np.arange(idx.shape[1]), idx], axis=1)
        z[~idx.any(axis=1)] = 1.0
        object.__setattr__(self, "families", fams)
        object.__setattr__(self, "norms", z)

    @property
    def dim(self) -> int:
        return len(self.priors)

    @property
    def size(self) -> int:
        return len(self.index_set)

    @property
    def degree(self) -> int:
        return self.index_set.degree

    @property
    def lows(self) -> np.ndarray:
        return np.array([pr.min for pr in self.priors])

    @property
    def highs(self) -> np.ndarray:
        return np.array([pr.max for pr in self.priors])

    def to_canonical(self, xi):
        return affine_to_canonical(xi, self.lows, self.highs)

    def univariate_tables(self, xi):
        """Per-dimension polynomial values, shape ``(n, d, p+1)``."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if xi.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {xi.shape[1]}")
        z = self.to_canonical(xi)
        if self.strict:
            bad = (z < -1.0) | (z > 1.0) | ~np.isfinite(z)
            if bad.any():
                row, col = np.argwhere(bad)[0]
                raise DomainError(
                    f"row {row}: input dimension {col} value {xi[row, col]} outside "
                    f"[{self.priors[col].min}, {self.priors[col].max}]"
                )
        return np.stack([jacobi_eval_all(f, z[:, j]) for j, f in enumerate(self.families)], axis=1)

    def evaluate(self, xi) -> np.ndarray:
        """``psi_a(xi)`` for every basis; shape ``(m,)`` for a single point, else ``(n, m)``."""
        single = np.ndim(xi) == 1
        tabs = self.univariate_tables(xi)
        idx = self.index_set.indices
        out = np.ones((tabs.shape[0], idx.shape[0]))
        for j in range(self.dim):
            out *= tabs[:, j, idx[:, j]]
        return out[0] if single else out

    def design_matrix(self, inputs) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim != 2:
            raise ValueError("inputs must be an (n, d) matrix")
        return self.evaluate(inputs)

    def with_strict(self, strict: bool) -> "TensorBasis":
        return TensorBasis(self.priors, self.index_set, strict=strict)

    # serialization

    def to_dict(self) -> dict:
        return {
            "priors": [pr.to_dict() for pr in self.priors],
            "degree": int(self.degree),
            "multi_indices": self.index_set.indices.tolist(),
            "norms": [float(v) for v in self.norms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TensorBasis":
        priors = tuple(ShiftedBeta.from_dict(p) for p in d["priors"])
        idx = np.asarray(d["multi_indices"], dtype=np.int64).reshape(-1, len(priors))
        basis = cls(priors, MultiIndexSet(idx, int(d["degree"])))
        if "norms" in d:
            stored = np.asarray(d["norms"], dtype=float)
            if stored.shape != basis.norms.shape or not np.allclose(stored, basis.norms, rtol=1e-12, atol=0):
                raise ValueError("stored normalization constants disagree with recomputed values")
            object.__setattr__(basis, "norms", stored)
        return basis

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "TensorBasis":
        return cls.from_dict(json.loads(s))

    def fingerprint(self) -> str:
        import hashlib

        d = self.to_dict()
        d.pop("norms")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def build_basis(priors, degree: int, strict: bool = True) -> TensorBasis:
    """Total-degree tensor basis of the given degree over ``priors``."""
    priors = tuple(priors)
    return TensorBasis(priors, MultiIndexSet.total_degree(len(priors), degree), strict=strict)
