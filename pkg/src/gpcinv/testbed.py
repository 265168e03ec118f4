"""Synthetic forward models, quasi-Monte Carlo designs and quadrature oracles."""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import qmc

from .basis import TensorBasis, build_basis, canonical_to_affine, gauss_jacobi
from .distributions import ShiftedBeta

__all__ = [
    "qmc_design",
    "beta_inverse_cdf",
    "SyntheticForward",
    "evaluate_synthetic",
    "projection_oracle",
    "LAND_INPUTS",
    "default_scenario",
    "scenario_from_dict",
]

_MAX_TENSOR_NODES = 2_000_000


def beta_inverse_cdf(prior: ShiftedBeta, q):
    """Quantile function of a shifted Beta; ``q`` in [0, 1]."""
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("quantile levels must lie in [0, 1]")
    return prior.min + prior.width * special.betaincinv(prior.a, prior.b, q)


def qmc_design(priors, n: int, scramble: bool = False, seed=None) -> np.ndarray:
    """Sobol' design of ``n`` points pushed through the priors' quantile functions.

    The unscrambled sequence starts at the origin, so the first row sits at
    each prior's lower bound. ``scramble=True`` applies seeded Owen scrambling.
    """
    if n <= 0:
        raise ValueError(f"design size must be positive, got {n}")
    priors = list(priors)
    sampler = qmc.Sobol(d=len(priors), scramble=scramble, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance warning for non powers of two
        u = sampler.random(n)
    return np.column_stack([beta_inverse_cdf(pr, u[:, j]) for j, pr in enumerate(priors)])


@dataclass(frozen=True, eq=False)
class SyntheticForward:
    """Known multi-channel gPC forward model used in place of a simulator.

    ``coef`` has shape ``(n_channels, m)``; with ``nonlinearity="exp"`` each
    channel returns ``exp`` of its expansion.
    """

    basis: TensorBasis
    coef: np.ndarray
    noise_sd: np.ndarray
    nonlinearity: str = "none"
    labels: tuple = ()

    def __post_init__(self):
        coef = np.atleast_2d(np.asarray(self.coef, dtype=float))
        if coef.shape[1] != self.basis.size:
            raise ValueError(f"coefficient rows must have length {self.basis.size}")
        sd = np.broadcast_to(np.asarray(self.noise_sd, dtype=float), (coef.shape[0],)).copy()
        if np.any(sd < 0):
            raise ValueError("noise standard deviations must be non-negative")
        if self.nonlinearity not in ("none", "exp"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        labels = tuple(self.labels) or tuple(f"ch{j + 1}" for j in range(coef.shape[0]))
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "noise_sd", sd)
        object.__setattr__(self, "labels", labels)

    @property
    def n_channels(self) -> int:
        return self.coef.shape[0]

    def mean(self, xi) -> np.ndarray:
        """Noise-free output, shape ``(d_u,)`` or ``(n, d_u)``."""
        out = self.basis.evaluate(xi) @ self.coef.T
        return np.exp(out) if self.nonlinearity == "exp" else out

    def channel(self, j: int) -> "SyntheticForward":
        return SyntheticForward(self.basis, self.coef[j:j + 1], self.noise_sd[j:j + 1], self.nonlinearity,
                                (self.labels[j],))


def evaluate_synthetic(forward: SyntheticForward, xi, rng=None) -> np.ndarray:
    """Forward output plus Gaussian noise; ``rng`` may be omitted when all noise is zero."""
    mean = forward.mean(xi)
    if np.all(forward.noise_sd == 0):
        return mean
    if rng is None:
        raise ValueError("a random generator is required for noisy evaluation")
    return mean + forward.noise_sd * rng.standard_normal(mean.shape)


def projection_oracle(forward, basis: TensorBasis, nodes_per_dim: int) -> np.ndarray:
    """Coefficients ``E[u psi_a] / Z_a`` by full tensor Gauss-Jacobi quadrature.

    ``forward`` is a callable mapping an ``(N, d)`` array of inputs to ``N``
    outputs (or a single-channel :class:`SyntheticForward`).
    """
    d = basis.dim
    total = nodes_per_dim**d
    if total > _MAX_TENSOR_NODES:
        raise ValueError(
            f"{nodes_per_dim}^{d} = {total} tensor nodes is too many; the full-tensor oracle "
            "is meant for low-dimensional checks"
        )
    if isinstance(forward, SyntheticForward):
        fwd = forward
        forward = lambda x: fwd.mean(x)[:, 0]  # noqa: E731
    pts, wts = [], []
    for fam, pr in zip(basis.families, basis.priors):
        z, w = gauss_jacobi(fam, nodes_per_dim)
        pts.append(canonical_to_affine(z, pr.min, pr.max))
        wts.append(w)
    grid = np.array(list(itertools.product(*pts)))
    weight = np.prod(np.array(list(itertools.product(*wts))), axis=1)
    vals = np.asarray(forward(grid), dtype=float).reshape(-1)
    psi = basis.with_strict(False).evaluate(grid)
    return (weight * vals) @ psi / basis.norms


# Input names follow the land-surface application; the supports are
# illustrative placeholders, not calibrated prior ranges. Entries flagged
# log_scale are handled in log10 units.
LAND_INPUTS = (
    {"name": "Fmax", "a": 2.0, "b": 2.0, "min": 0.1, "max": 0.8, "log_scale": False},
    {"name": "Cs", "a": 2.0, "b": 2.0, "min": 0.05, "max": 0.95, "log_scale": False},
    {"name": "Fover", "a": 1.0, "b": 1.0, "min": 0.1, "max": 5.0, "log_scale": False},
    {"name": "Fdrai", "a": 1.0, "b": 1.0, "min": 0.1, "max": 5.0, "log_scale": False},
    {"name": "Qdm", "a": 1.0, "b": 1.0, "min": -6.0, "max": -1.0, "log_scale": True},
    {"name": "Sy", "a": 2.0, "b": 2.0, "min": 0.02, "max": 0.27, "log_scale": False},
    {"name": "B", "a": 2.0, "b": 2.0, "min": 1.0, "max": 15.0, "log_scale": False},
    {"name": "Psis", "a": 1.0, "b": 1.0, "min": -3.0, "max": 1.0, "log_scale": True},
    {"name": "Ks", "a": 1.0, "b": 1.0, "min": -7.0, "max": -2.0, "log_scale": True},
    {"name": "thetas", "a": 2.0, "b": 2.0, "min": 0.3, "max": 0.7, "log_scale": False},
)

MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")


def default_scenario(active_inputs=("Fdrai", "Qdm", "B"), n_channels: int = 12, n_train: int = 256,
                     degree: int = 2, noise_sd: float = 0.5) -> dict:
    """Scenario document shaped like the land-surface application.

    Ten inputs, a 256-point design and twelve monthly channels. The truth
    involves only ``active_inputs``: every channel has an intercept, a
    linear term per active input and one interaction term. Each input's
    effect follows its own seasonal cycle so that the channels jointly
    identify all active inputs.
    """
    names = [p["name"] for p in LAND_INPUTS]
    act = [names.index(a) for a in active_inputs]
    d = len(names)
    channels = []
    for j in range(n_channels):
        phase = 2.0 * np.pi * (j + 0.5) / n_channels
        terms = [([0] * d, round(30.0 + 15.0 * np.sin(phase - 0.5 * np.pi), 6))]
        for k, i in enumerate(act):
            alpha = [0] * d
            alpha[i] = 1
            amp = (4.0 - 0.5 * k) * (1.0 + 0.6 * np.sin(phase + 2.0 * np.pi * k / max(len(act), 1)))
            terms.append((alpha, round(amp * (-1) ** k, 6)))
        if len(act) >= 2 and degree >= 2:
            alpha = [0] * d
            alpha[act[0]] = 1
            alpha[act[1]] = 1
            terms.append((alpha, round(1.5 + np.cos(phase), 6)))
        label = MONTHS[j] if n_channels == 12 else f"ch{j + 1}"
        channels.append({"label": label, "noise_sd": noise_sd,
                         "coefficients": [{"index": a, "value": v} for a, v in terms]})
    return {
        "inputs": [dict(p) for p in LAND_INPUTS],
        "degree": degree,
        "n_train": n_train,
        "nonlinearity": "none",
        "channels": channels,
        "measurement": {"xi": None, "noise_sd": noise_sd},
    }


def scenario_from_dict(doc: dict, basis: TensorBasis | None = None) -> SyntheticForward:
    """Build the :class:`SyntheticForward` described by a scenario document."""
    if basis is None:
        priors = [ShiftedBeta(p["a"], p["b"], p["min"], p["max"]) for p in doc["inputs"]]
        basis = build_basis(priors, int(doc["degree"]))
    coef = np.zeros((len(doc["channels"]), basis.size))
    for j, ch in enumerate(doc["channels"]):
        for term in ch["coefficients"]:
            coef[j, basis.index_set.position(term["index"])] += float(term["value"])
    return SyntheticForward(basis, coef, [float(ch.get("noise_sd", 0.0)) for ch in doc["channels"]],
                            doc.get("nonlinearity", "none"), tuple(ch["label"] for ch in doc["channels"]))


def dump_scenario(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
