"""Spike-and-slab Gibbs sampler for sparse PC coefficient estimation.

Model::

    u | c, sigma2          ~ N(X c, sigma2 I)
    c_a | gamma_a, ...     ~ gamma_a N(0, sigma2 / lambda) + (1 - gamma_a) delta_0
    gamma_a | rho          ~ Bernoulli(rho)
    sigma2                 ~ InverseGamma(a_sigma, b_sigma)
    lambda                 ~ Gamma(a_lambda, b_lambda)
    rho                    ~ Beta(a_rho, b_rho)

One sweep updates every ``(gamma_a, c_a)`` pair in turn, then ``sigma2``,
``lambda`` and ``rho`` from their conjugate full conditionals.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .basis import TensorBasis
from .distributions import sample_beta, sample_gamma, sample_inverse_gamma

__all__ = [
    "GibbsHyperparams",
    "TrainingDataset",
    "GibbsState",
    "GibbsChain",
    "conditional_moments",
    "inclusion_probability",
    "coefficient_block_update",
    "sigma2_update",
    "lambda_update",
    "rho_update",
    "initial_state",
    "run_gibbs",
]


@dataclass(frozen=True)
class GibbsHyperparams:
    a_sigma: float = 1e-3
    b_sigma: float = 1e-3
    a_lambda: float = 1e-3
    b_lambda: float = 1e-3
    a_rho: float = 1.0
    b_rho: float = 1.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"hyperparameter {k} must be positive, got {v}")


@dataclass(frozen=True, eq=False)
class TrainingDataset:
    inputs: np.ndarray
    outputs: np.ndarray
    label: str = ""

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        u = np.asarray(self.outputs, dtype=float).reshape(-1)
        if x.shape[0] != u.shape[0]:
            raise ValueError(f"{x.shape[0]} input rows but {u.shape[0]} outputs")
        if u.shape[0] < 1:
            raise ValueError("training dataset needs at least one row")
        if not (np.isfinite(x).all() and np.isfinite(u).all()):
            raise ValueError("training data contains non-finite values")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", u)

    @property
    def n(self) -> int:
        return self.outputs.shape[0]


@dataclass
class GibbsState:
    c: np.ndarray
    gamma: np.ndarray
    sigma2: float
    lam: float
    rho: float

    @property
    def n_active(self) -> int:
        return int(self.gamma.sum())

    def copy(self) -> "GibbsState":
        return replace(self, c=self.c.copy(), gamma=self.gamma.copy())


def conditional_moments(xa, resid, sigma2, lam):
    """Full-conditional mean and variance of one coefficient given the rest.

    ``resid`` is ``u - X_{-a} c_{-a}``; ``lam`` may be zero here (plain
    least squares on the column).
    """
    xa = np.asarray(xa, dtype=float)
    prec = xa @ xa + lam
    return (xa @ np.asarray(resid, dtype=float)) / prec, sigma2 / prec


def _inclusion_from_parts(r, prec, sigma2, lam, rho):
    # P = 1 / (1 + (1-rho)/rho * sqrt(prec/lam) * exp(-r^2 / (2 sigma2 prec)))
    if rho >= 1.0:
        return 1.0
    if rho <= 0.0:
        return 0.0
    lo = math.log1p(-rho) - math.log(rho) + 0.5 * math.log(prec / lam) - 0.5 * r * r / (sigma2 * prec)
    if lo > 0.0:
        e = math.exp(-lo)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(lo))


_inclusion_nb = numba.njit(cache=True)(_inclusion_from_parts)


def inclusion_probability(mu, s2, sigma2, lam, rho):
    """Posterior probability that a basis is included given everything else.

    Evaluates ``[1 + (1-rho)/rho * sqrt(2 pi sigma2/lam) * N(0 | mu, s2)]^-1``
    in log space.
    """
    if not (sigma2 > 0 and lam > 0):
        raise ValueError(f"need sigma2 > 0 and lambda > 0, got {sigma2}, {lam}")
    prec = sigma2 / s2
    return _inclusion_from_parts(mu * prec, prec, sigma2, lam, rho)


def coefficient_block_update(a, state: GibbsState, X, u, rng, fixed_gamma: bool = False):
    """Draw ``(gamma_a, c_a)`` from their joint full conditional.

    Returns the new pair; ``state`` is not modified.
    """
    if not (state.sigma2 > 0 and state.lam > 0):
        raise ValueError(f"invalid state: sigma2={state.sigma2}, lambda={state.lam}")
    X = np.asarray(X, dtype=float)
    c_rest = state.c.copy()
    c_rest[a] = 0.0
    resid = u - X @ c_rest
    xa = X[:, a]
    prec = xa @ xa + state.lam
    r = xa @ resid
    if fixed_gamma:
        g = int(state.gamma[a])
    else:
        p = _inclusion_from_parts(r, prec, state.sigma2, state.lam, state.rho)
        g = int(rng.random() < p)
    if g:
        return 1, r / prec + math.sqrt(state.sigma2 / prec) * rng.standard_normal()
    return 0, 0.0


def sigma2_update(state: GibbsState, X, u, hyper: GibbsHyperparams, rng) -> float:
    """Draw sigma2 ~ IG(n/2 + m_gamma/2 + a_sigma, b_sigma + |u-Xc|^2/2 + lambda |c|^2/2)."""
    resid = u - X @ state.c
    shape = 0.5 * len(u) + 0.5 * state.n_active + hyper.a_sigma
    rate = hyper.b_sigma + 0.5 * (resid @ resid) + 0.5 * state.lam * (state.c @ state.c)
    return float(sample_inverse_gamma(shape, rate, rng))


def lambda_update(state: GibbsState, hyper: GibbsHyperparams, rng) -> float:
    """Draw lambda ~ Gamma(m_gamma/2 + a_lambda, |c|^2 / (2 sigma2) + b_lambda)."""
    shape = 0.5 * state.n_active + hyper.a_lambda
    rate = (state.c @ state.c) / (2.0 * state.sigma2) + hyper.b_lambda
    return float(sample_gamma(shape, rate, rng))


def rho_update(state: GibbsState, hyper: GibbsHyperparams, rng) -> float:
    """Draw rho ~ Beta(m_gamma + a_rho, m - m_gamma + b_rho)."""
    k = state.n_active
    return float(sample_beta(k + hyper.a_rho, len(state.gamma) - k + hyper.b_rho, rng))


@numba.njit(cache=True)
def _sweep_coefficients(G, Xtu, c, gamma, Gc, sigma2, lam, rho, order, unif, normals, hold_gamma):
    for a in order:
        gaa = G[a, a]
        prec = gaa + lam
        r = Xtu[a] - Gc[a] + gaa * c[a]
        if hold_gamma:
            g = gamma[a]
        else:
            g = 1 if unif[a] < _inclusion_nb(r, prec, sigma2, lam, rho) else 0
        if g == 1:
            new = r / prec + math.sqrt(sigma2 / prec) * normals[a]
        else:
            new = 0.0
        delta = new - c[a]
        if delta != 0.0:
            for k in range(Gc.shape[0]):
                Gc[k] += delta * G[k, a]
        c[a] = new
        gamma[a] = g


def initial_state(X, u, gamma=None) -> GibbsState:
    """Least-squares start on the active set (ridge with unit penalty if ill-posed)."""
    n, m = X.shape
    gamma = np.ones(m, dtype=np.int8) if gamma is None else np.asarray(gamma, dtype=np.int8).copy()
    c = np.zeros(m)
    act = np.flatnonzero(gamma)
    if act.size:
        Xs = X[:, act]
        G = Xs.T @ Xs
        if n >= act.size and np.linalg.cond(G) < 1e10:
            c[act] = np.linalg.solve(G, Xs.T @ u)
        else:
            c[act] = np.linalg.solve(G + np.eye(act.size), Xs.T @ u)
    resid = u - X @ c
    floor = 1e-12 * max(1.0, float(np.mean(u * u)))
    sigma2 = max(float(np.var(resid)), floor)
    return GibbsState(c, gamma, sigma2, 1.0, 0.5)


@dataclass(eq=False)
class GibbsChain:
    """Post-burn-in Gibbs draws; row ``k`` of each array is one stored sweep."""

    c: np.ndarray
    gamma: np.ndarray
    sigma2: np.ndarray
    lam: np.ndarray
    rho: np.ndarray
    iteration: np.ndarray
    total: int
    burn_in: int
    thin: int = 1
    basis_id: str = ""
    label: str = ""
    fixed_gamma: np.ndarray | None = None
    basis: TensorBasis | None = field(default=None, repr=False)

    def __len__(self):
        return self.c.shape[0]

    @property
    def size(self) -> int:
        return self.c.shape[1]

    def state(self, k: int) -> GibbsState:
        return GibbsState(self.c[k].copy(), self.gamma[k].copy(), float(self.sigma2[k]),
                          float(self.lam[k]), float(self.rho[k]))

    def columns(self) -> list[str]:
        m = self.size
        return (["iteration", "sigma2", "lambda", "rho"]
                + [f"c_{a}" for a in range(m)] + [f"gamma_{a}" for a in range(m)])

    def to_csv(self, path_or_buf=None) -> str | None:
        """Write ``iteration, sigma2, lambda, rho, c_0..c_{m-1}, gamma_0..gamma_{m-1}``.

        Metadata goes in leading ``#`` comment lines.
        """
        buf = io.StringIO()
        buf.write(f"# basis={self.basis_id} label={self.label} total={self.total} "
                  f"burn_in={self.burn_in} thin={self.thin}\n")
        if self.fixed_gamma is not None:
            buf.write("# fixed_gamma=" + "".join(str(int(g)) for g in self.fixed_gamma) + "\n")
        buf.write(",".join(self.columns()) + "\n")
        for k in range(len(self)):
            row = [str(int(self.iteration[k])), repr(float(self.sigma2[k])),
                   repr(float(self.lam[k])), repr(float(self.rho[k]))]
            row += [repr(float(v)) for v in self.c[k]]
            row += [str(int(g)) for g in self.gamma[k]]
            buf.write(",".join(row) + "\n")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        with open(path_or_buf, "w") as fh:
            fh.write(text)
        return None

    @classmethod
    def from_csv(cls, path) -> "GibbsChain":
        with open(path) as fh:
            lines = fh.read().splitlines()
        meta, fixed = {}, None
        body = []
        for line in lines:
            if line.startswith("# fixed_gamma="):
                fixed = np.array([int(ch) for ch in line.split("=", 1)[1]], dtype=np.int8)
            elif line.startswith("#"):
                for tok in line[1:].split():
                    k, _, v = tok.partition("=")
                    meta[k] = v
            else:
                body.append(line)
        header = body[0].split(",")
        m = (len(header) - 4) // 2
        data = np.array([[float(x) for x in ln.split(",")] for ln in body[1:]]).reshape(-1, len(header))
        return cls(
            c=data[:, 4:4 + m].copy(),
            gamma=data[:, 4 + m:].astype(np.int8),
            sigma2=data[:, 1].copy(), lam=data[:, 2].copy(), rho=data[:, 3].copy(),
            iteration=data[:, 0].astype(np.int64),
            total=int(meta.get("total", 0)), burn_in=int(meta.get("burn_in", 0)),
            thin=int(meta.get("thin", 1)), basis_id=meta.get("basis", ""),
            label=meta.get("label", ""), fixed_gamma=fixed,
        )


def run_gibbs(dataset: TrainingDataset, basis: TensorBasis, hyper: GibbsHyperparams | None = None,
              iterations: int = 200_000, burn_in: int = 100_000, thin: int = 1, rng=None,
              fixed_gamma=None, fixed_sigma2: float | None = None, fixed_lambda: float | None = None,
              init: GibbsState | None = None, scan: str = "systematic", progress=None) -> GibbsChain:
    """Run the spike-and-slab Gibbs sampler.

    Parameters
    ----------
    fixed_gamma
        Inclusion vector to hold constant; the indicator draws are skipped
        and only the included coefficients are sampled.
    fixed_sigma2, fixed_lambda
        Hold the noise variance / slab precision at a given value instead of
        drawing them.
    scan
        ``"systematic"`` (ascending basis order) or ``"random"`` (fresh
        permutation every sweep).
    progress
        Optional callable receiving the completed fraction in [0, 1].
    """
    hyper = hyper or GibbsHyperparams()
    if rng is None:
        raise ValueError("an explicit random generator is required")
    if not 0 <= burn_in < iterations:
        raise ValueError(f"need 0 <= burn_in < iterations, got {burn_in}, {iterations}")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    if scan not in ("systematic", "random"):
        raise ValueError(f"unknown scan order {scan!r}")

    X = basis.design_matrix(dataset.inputs)
    u = dataset.outputs
    n, m = X.shape
    G = X.T @ X
    zero = np.flatnonzero(np.diag(G) == 0.0)
    if zero.size:
        raise ValueError(f"design column for multi-index {basis.index_set.label(zero[0])} is identically zero")
    Xtu = X.T @ u

    hold = fixed_gamma is not None
    if hold:
        fixed_gamma = np.asarray(fixed_gamma, dtype=np.int8)
        if fixed_gamma.shape != (m,):
            raise ValueError(f"fixed_gamma must have length {m}")
    state = init.copy() if init is not None else initial_state(X, u, fixed_gamma)
    if hold:
        state.gamma = fixed_gamma.copy()
        state.c[fixed_gamma == 0] = 0.0
    if fixed_sigma2 is not None:
        state.sigma2 = float(fixed_sigma2)
    if fixed_lambda is not None:
        state.lam = float(fixed_lambda)

    n_keep = (iterations - burn_in) // thin
    out_c = np.empty((n_keep, m))
    out_g = np.empty((n_keep, m), dtype=np.int8)
    out_s = np.empty(n_keep)
    out_l = np.empty(n_keep)
    out_r = np.empty(n_keep)
    out_t = np.empty(n_keep, dtype=np.int64)

    c = state.c.astype(float)
    gamma = state.gamma.astype(np.int8)
    sigma2, lam, rho = state.sigma2, state.lam, state.rho
    order = np.arange(m)
    half_n = 0.5 * n
    k = 0
    step = max(1, iterations // 100)
    for t in range(1, iterations + 1):
        if scan == "random":
            order = rng.permutation(m)
        unif = rng.random(m)
        normals = rng.standard_normal(m)
        Gc = G @ c
        _sweep_coefficients(G, Xtu, c, gamma, Gc, sigma2, lam, rho, order, unif, normals, hold)
        m_act = int(gamma.sum())
        cc = float(c @ c)
        if fixed_sigma2 is None:
            resid = u - X @ c
            shape = half_n + 0.5 * m_act + hyper.a_sigma
            rate = hyper.b_sigma + 0.5 * float(resid @ resid) + 0.5 * lam * cc
            sigma2 = rate / rng.standard_gamma(shape)
        if fixed_lambda is None:
            lam = rng.standard_gamma(0.5 * m_act + hyper.a_lambda) / (cc / (2.0 * sigma2) + hyper.b_lambda)
        rho = rng.beta(m_act + hyper.a_rho, m - m_act + hyper.b_rho)
        if t > burn_in and (t - burn_in) % thin == 0:
            out_c[k] = c
            out_g[k] = gamma
            out_s[k] = sigma2
            out_l[k] = lam
            out_r[k] = rho
            out_t[k] = t
            k += 1
        if progress is not None and t % step == 0:
            progress(t / iterations)

    return GibbsChain(out_c, out_g, out_s, out_l, out_r, out_t, iterations, burn_in, thin,
                      basis_id=basis.fingerprint(), label=dataset.label,
                      fixed_gamma=fixed_gamma if hold else None, basis=basis)
