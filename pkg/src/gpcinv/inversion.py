"""Surrogate-based Bayesian inversion of forward-model inputs.

Posterior over inputs ``xi`` and per-channel noise variances ``sigma2``::

    u_obs_j | xi, sigma2_j ~ N(u_hat_j(xi), sigma2_j)       (independent channels)
    xi_i                   ~ ShiftedBeta(a_i, b_i, min_i, max_i)
    sigma2_j               ~ InverseGamma(a_sigma2, b_sigma2)

sampled by alternating single-site random-walk Metropolis on ``xi`` (proposals
on the canonical [-1, 1] scale) with exact conjugate draws of ``sigma2``.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .basis import _jacobi_fill
from .distributions import InverseGamma, ShiftedBeta, normal_log_density
from .surrogate import SurrogateModel

__all__ = [
    "InversionProblem",
    "InversionChain",
    "log_unnormalized_posterior",
    "mh_update_xi",
    "sigma2_update_inv",
    "run_inversion",
    "posterior_summary",
    "posterior_predictive",
    "QUANTILE_LEVELS",
]

QUANTILE_LEVELS = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass(frozen=True, eq=False)
class InversionProblem:
    surrogates: tuple
    observed: np.ndarray
    priors: tuple | None = None
    a_sigma2: float = 1e-3
    b_sigma2: float = 1e-3
    names: tuple | None = None

    def __post_init__(self):
        surr = tuple(self.surrogates)
        if not surr:
            raise ValueError("at least one surrogate is required")
        obs = np.asarray(self.observed, dtype=float).reshape(-1)
        if obs.shape[0] != len(surr):
            raise ValueError(f"{len(surr)} surrogates but {obs.shape[0]} observations")
        if not np.isfinite(obs).all():
            raise ValueError("observations must be finite")
        ref = surr[0].basis
        for s in surr[1:]:
            if s.basis.fingerprint() != ref.fingerprint():
                raise ValueError(f"surrogate {s.label!r} uses a different basis than {surr[0].label!r}")
        priors = tuple(self.priors) if self.priors is not None else tuple(ref.priors)
        if len(priors) != ref.dim:
            raise ValueError(f"{len(priors)} priors for {ref.dim} inputs")
        for i, (pr, bp) in enumerate(zip(priors, ref.priors)):
            if pr.min < bp.min or pr.max > bp.max:
                raise ValueError(f"prior support of input {i} exceeds the surrogate's domain")
        InverseGamma(self.a_sigma2, self.b_sigma2)
        names = tuple(self.names) if self.names is not None else tuple(f"xi_{i + 1}" for i in range(ref.dim))
        object.__setattr__(self, "surrogates", surr)
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "names", names)

    @property
    def basis(self):
        return self.surrogates[0].basis

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def n_channels(self) -> int:
        return len(self.surrogates)

    @property
    def coef_matrix(self) -> np.ndarray:
        return np.stack([s.coef for s in self.surrogates])

    def predict(self, xi) -> np.ndarray:
        """Surrogate outputs for every channel; ``(d_u,)`` or ``(n, d_u)``."""
        return self.basis.evaluate(xi) @ self.coef_matrix.T

    def subset(self, channels) -> "InversionProblem":
        ch = list(channels)
        return InversionProblem(tuple(self.surrogates[j] for j in ch), self.observed[ch], self.priors,
                                self.a_sigma2, self.b_sigma2, self.names)


def _in_support(problem, xi):
    return all(pr.min <= x <= pr.max for pr, x in zip(problem.priors, xi))


def log_unnormalized_posterior(problem: InversionProblem, xi, sigma2) -> float:
    """Log posterior density up to a constant; ``-inf`` outside the prior box."""
    xi = np.asarray(xi, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if not _in_support(problem, xi):
        return -math.inf
    if np.any(sigma2 <= 0):
        return -math.inf
    uhat = problem.basis.with_strict(False).evaluate(xi) @ problem.coef_matrix.T
    loglik = float(np.sum(normal_log_density(problem.observed, uhat, sigma2)))
    logprior = sum(float(pr.logpdf(x)) for pr, x in zip(problem.priors, xi))
    ig = InverseGamma(problem.a_sigma2, problem.b_sigma2)
    return loglik + logprior + float(np.sum(ig.logpdf(sigma2)))


def _kernel_args(problem: InversionProblem):
    basis = problem.basis
    fams = basis.families
    return (
        problem.coef_matrix,
        np.ascontiguousarray(basis.index_set.indices),
        np.array([f.alpha for f in fams]),
        np.array([f.beta for f in fams]),
        basis.lows,
        basis.highs,
        np.array([pr.a for pr in problem.priors]),
        np.array([pr.b for pr in problem.priors]),
        np.array([pr.min for pr in problem.priors]),
        np.array([pr.max for pr in problem.priors]),
        problem.observed,
        float(problem.b_sigma2),
    )


@numba.njit(cache=True)
def _beta_logkernel(x, a, b, lo, hi):
    t = (x - lo) / (hi - lo)
    if t < 0.0 or t > 1.0:
        return -np.inf
    out = 0.0
    if a != 1.0:
        out += (a - 1.0) * math.log(t) if t > 0.0 else -np.inf
    if b != 1.0:
        out += (b - 1.0) * math.log1p(-t) if t < 1.0 else -np.inf
    return out


@numba.njit(cache=True)
def _fill_psi(V, A, psi):
    m, d = A.shape
    for k in range(m):
        v = 1.0
        for j in range(d):
            v *= V[j, A[k, j]]
        psi[k] = v


@numba.njit(cache=True)
def _sq_misfit(C, psi, u, s2):
    tot = 0.0
    for j in range(C.shape[0]):
        r = u[j] - C[j] @ psi
        tot += r * r / s2[j]
    return tot


@numba.njit(cache=True)
def _run_kernel(C, A, alphas, betas, blo, bhi, pa, pb, plo, phi, u, b_s,
                xi0, s2_0, scales0, normals, unifs, gammas, burn_in, adapt, target, joint):
    T, d = normals.shape
    du, m = C.shape
    p = 0
    for k in range(m):
        for j in range(d):
            if A[k, j] > p:
                p = A[k, j]
    n_keep = T - burn_in
    xi_out = np.empty((n_keep, d))
    s2_out = np.empty((n_keep, du))
    acc_out = np.zeros((n_keep, d), dtype=np.int8)
    scale_out = np.empty((n_keep, d))

    xi = xi0.copy()
    s2 = s2_0.copy()
    logs = np.log(scales0)
    V = np.empty((d, p + 1))
    for j in range(d):
        _jacobi_fill(alphas[j], betas[j], 2.0 * (xi[j] - blo[j]) / (bhi[j] - blo[j]) - 1.0, V[j])
    psi = np.empty(m)
    _fill_psi(V, A, psi)
    misfit = _sq_misfit(C, psi, u, s2)
    row = np.empty(p + 1)
    Vp = V.copy()
    acc = np.zeros(d, dtype=np.int8)

    for t in range(T):
        if joint:
            ok = True
            xp = xi.copy()
            dlp = 0.0
            for i in range(d):
                w = phi[i] - plo[i]
                zp = 2.0 * (xi[i] - plo[i]) / w - 1.0 + math.exp(logs[i]) * normals[t, i]
                if zp < -1.0 or zp > 1.0:
                    ok = False
                    break
                xp[i] = plo[i] + 0.5 * (zp + 1.0) * w
                dlp += _beta_logkernel(xp[i], pa[i], pb[i], plo[i], phi[i]) \
                    - _beta_logkernel(xi[i], pa[i], pb[i], plo[i], phi[i])
            a_flag = 0
            if ok:
                for i in range(d):
                    _jacobi_fill(alphas[i], betas[i], 2.0 * (xp[i] - blo[i]) / (bhi[i] - blo[i]) - 1.0, Vp[i])
                psi_p = np.empty(m)
                _fill_psi(Vp, A, psi_p)
                mis_p = _sq_misfit(C, psi_p, u, s2)
                logr = dlp - 0.5 * (mis_p - misfit)
                if math.log(unifs[t, 0]) < logr:
                    a_flag = 1
                    xi[:] = xp
                    V[:, :] = Vp
                    psi[:] = psi_p
                    misfit = mis_p
            for i in range(d):
                acc[i] = a_flag
        else:
            for i in range(d):
                w = phi[i] - plo[i]
                zp = 2.0 * (xi[i] - plo[i]) / w - 1.0 + math.exp(logs[i]) * normals[t, i]
                acc[i] = 0
                if zp < -1.0 or zp > 1.0:
                    continue
                xpi = plo[i] + 0.5 * (zp + 1.0) * w
                dlp = _beta_logkernel(xpi, pa[i], pb[i], plo[i], phi[i]) \
                    - _beta_logkernel(xi[i], pa[i], pb[i], plo[i], phi[i])
                if dlp == -np.inf:
                    continue
                _jacobi_fill(alphas[i], betas[i], 2.0 * (xpi - blo[i]) / (bhi[i] - blo[i]) - 1.0, row)
                for k in range(p + 1):
                    Vp[i, k] = row[k]
                psi_p = np.empty(m)
                _fill_psi(Vp, A, psi_p)
                mis_p = _sq_misfit(C, psi_p, u, s2)
                logr = dlp - 0.5 * (mis_p - misfit)
                if math.log(unifs[t, i]) < logr:
                    acc[i] = 1
                    xi[i] = xpi
                    for k in range(p + 1):
                        V[i, k] = row[k]
                    psi[:] = psi_p
                    misfit = mis_p
                else:
                    for k in range(p + 1):
                        Vp[i, k] = V[i, k]

        if adapt and t < burn_in:
            eta = (t + 1.0) ** -0.6
            for i in range(d):
                logs[i] += eta * (acc[i] - target)
                if logs[i] < -12.0:
                    logs[i] = -12.0
                elif logs[i] > 2.0:
                    logs[i] = 2.0

        # conjugate variance block, one datum per channel
        for j in range(du):
            r = u[j] - C[j] @ psi
            s2[j] = (0.5 * r * r + b_s) / gammas[t, j]
        misfit = _sq_misfit(C, psi, u, s2)

        if t >= burn_in:
            k = t - burn_in
            xi_out[k] = xi
            s2_out[k] = s2
            acc_out[k] = acc
            for i in range(d):
                scale_out[k, i] = math.exp(logs[i])
    return xi_out, s2_out, acc_out, scale_out


@dataclass(eq=False)
class InversionChain:
    xi: np.ndarray
    sigma2: np.ndarray
    accepted: np.ndarray
    iteration: np.ndarray
    total: int
    burn_in: int
    scales: np.ndarray
    names: tuple = ()
    channels: tuple = ()
    scale_trace: np.ndarray | None = field(default=None, repr=False)
    diagnostics: list = field(default_factory=list)

    def __len__(self):
        return self.xi.shape[0]

    @property
    def acceptance_rate(self) -> np.ndarray:
        return self.accepted.mean(axis=0) if len(self) else np.zeros(self.xi.shape[1])

    def columns(self) -> list[str]:
        d, du = self.xi.shape[1], self.sigma2.shape[1]
        return (["iteration"] + [f"xi_{i + 1}" for i in range(d)]
                + [f"sigma2_{j + 1}" for j in range(du)] + [f"accepted_{i + 1}" for i in range(d)])

    def to_csv(self, path=None):
        """``iteration, xi_1..xi_d, sigma2_1..sigma2_du, accepted_1..accepted_d``."""
        buf = io.StringIO()
        buf.write(f"# total={self.total} burn_in={self.burn_in} scales="
                  + ";".join(repr(float(s)) for s in self.scales) + "\n")
        if self.names:
            buf.write("# names=" + ";".join(self.names) + "\n")
        if self.channels:
            buf.write("# channels=" + ";".join(str(c) for c in self.channels) + "\n")
        buf.write(",".join(self.columns()) + "\n")
        for k in range(len(self)):
            row = [str(int(self.iteration[k]))]
            row += [repr(float(v)) for v in self.xi[k]]
            row += [repr(float(v)) for v in self.sigma2[k]]
            row += [str(int(v)) for v in self.accepted[k]]
            buf.write(",".join(row) + "\n")
        if path is None:
            return buf.getvalue()
        with open(path, "w") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "InversionChain":
        meta, body = {}, []
        with open(path) as fh:
            for line in fh.read().splitlines():
                if line.startswith("# names="):
                    meta["names"] = tuple(line.split("=", 1)[1].split(";"))
                elif line.startswith("# channels="):
                    meta["channels"] = tuple(line.split("=", 1)[1].split(";"))
                elif line.startswith("#"):
                    for tok in line[1:].split():
                        k, _, v = tok.partition("=")
                        meta[k] = v
                elif line.strip():
                    body.append(line)
        header = body[0].split(",")
        d = sum(h.startswith("xi_") for h in header)
        du = sum(h.startswith("sigma2_") for h in header)
        data = np.array([[float(x) for x in ln.split(",")] for ln in body[1:]]).reshape(-1, len(header))
        scales = np.array([float(s) for s in meta.get("scales", "").split(";") if s])
        return cls(
            xi=data[:, 1:1 + d].copy(), sigma2=data[:, 1 + d:1 + d + du].copy(),
            accepted=data[:, 1 + d + du:].astype(np.int8), iteration=data[:, 0].astype(np.int64),
            total=int(meta.get("total", 0)), burn_in=int(meta.get("burn_in", 0)), scales=scales,
            names=meta.get("names", ()), channels=meta.get("channels", ()),
        )


def mh_update_xi(xi, sigma2, problem: InversionProblem, scales, rng, joint: bool = False):
    """One Metropolis sweep over ``xi`` with ``sigma2`` held fixed.

    Returns the new point and per-dimension acceptance flags.
    """
    xi = np.asarray(xi, dtype=float)
    scales = np.asarray(scales, dtype=float)
    if np.any(scales <= 0):
        raise ValueError("proposal scales must be positive")
    d = problem.dim
    normals = rng.standard_normal((1, d))
    unifs = rng.random((1, d))
    # the kernel also runs the variance block; that draw is discarded
    out_xi, _, acc, _ = _run_kernel(*_kernel_args(problem), xi.copy(), np.asarray(sigma2, float).copy(),
                                    scales, normals, unifs, np.ones((1, problem.n_channels)), 0, False,
                                    0.3, joint)
    return out_xi[0], acc[0].astype(bool)


def sigma2_update_inv(xi, problem: InversionProblem, rng) -> np.ndarray:
    """Per-channel draw ``sigma2_j ~ IG(1/2 + a, (u_j - u_hat_j(xi))^2 / 2 + b)``."""
    r = problem.observed - problem.basis.with_strict(False).evaluate(np.asarray(xi, float)) @ problem.coef_matrix.T
    return (0.5 * r * r + problem.b_sigma2) / rng.standard_gamma(0.5 + problem.a_sigma2, size=r.shape)


def run_inversion(problem: InversionProblem, iterations: int = 20_000, burn_in: int = 10_000, rng=None,
                  adapt: bool = True, xi0=None, scales=None, target: float = 0.3,
                  joint: bool = False) -> InversionChain:
    """Metropolis-within-Gibbs sampling of the input posterior.

    With ``adapt`` the per-dimension proposal scales follow a Robbins-Monro
    recursion on the log scale towards ``target`` acceptance during burn-in
    and are frozen afterwards.
    """
    if rng is None:
        raise ValueError("an explicit random generator is required")
    if not 0 <= burn_in < iterations:
        raise ValueError(f"need 0 <= burn_in < iterations, got {burn_in}, {iterations}")
    d, du = problem.dim, problem.n_channels
    xi0 = np.array([pr.mean() for pr in problem.priors]) if xi0 is None else np.asarray(xi0, float)
    if not _in_support(problem, xi0):
        raise ValueError("starting point outside the prior support")
    scales = np.full(d, 0.5) if scales is None else np.asarray(scales, dtype=float)
    if np.any(scales <= 0):
        raise ValueError("proposal scales must be positive")
    a_post = 0.5 + problem.a_sigma2
    r0 = problem.observed - problem.predict(xi0)
    s2_0 = (0.5 * r0 * r0 + problem.b_sigma2) / a_post

    normals = rng.standard_normal((iterations, d))
    unifs = rng.random((iterations, d))
    gammas = rng.standard_gamma(a_post, size=(iterations, du))
    xi, s2, acc, trace = _run_kernel(*_kernel_args(problem), xi0.copy(), s2_0, scales.copy(), normals, unifs,
                                     gammas, burn_in, bool(adapt), float(target), bool(joint))
    final = trace[-1].copy()
    chain = InversionChain(xi, s2, acc, np.arange(burn_in + 1, iterations + 1), iterations, burn_in, final,
                           names=problem.names, channels=tuple(s.label for s in problem.surrogates),
                           scale_trace=trace)
    low = np.flatnonzero(chain.acceptance_rate < 0.01)
    for i in low:
        msg = f"acceptance rate {chain.acceptance_rate[i]:.4f} for {problem.names[i]} after burn-in"
        chain.diagnostics.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return chain


def posterior_summary(chain: InversionChain, bins: int = 30, names=None) -> list[dict]:
    """Per-dimension mean, sd, quantiles and histogram of the stored draws."""
    names = names or chain.names or tuple(f"xi_{i + 1}" for i in range(chain.xi.shape[1]))
    out = []
    for i, name in enumerate(names):
        x = chain.xi[:, i]
        counts, edges = np.histogram(x, bins=bins)
        out.append({
            "name": name,
            "mean": float(x.mean()),
            "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
            "quantiles": {f"{q:g}": float(v) for q, v in zip(QUANTILE_LEVELS, np.quantile(x, QUANTILE_LEVELS))},
            "acceptance_rate": float(chain.acceptance_rate[i]),
            "hist_edges": edges.tolist(),
            "hist_counts": counts.tolist(),
        })
    return out


def posterior_predictive(chain: InversionChain, problem: InversionProblem, rng) -> np.ndarray:
    """Predictive output draws, shape (n_draws, d_u): surrogate plus noise."""
    mean = problem.basis.with_strict(False).evaluate(chain.xi) @ problem.coef_matrix.T
    return mean + np.sqrt(chain.sigma2) * rng.standard_normal(mean.shape)
