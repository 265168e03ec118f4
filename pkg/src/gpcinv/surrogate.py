"""Surrogate models built from Gibbs output: model averaging and median
probability model selection."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .basis import TensorBasis
from .gibbs import GibbsChain, GibbsHyperparams, TrainingDataset, run_gibbs

__all__ = [
    "SurrogateModel",
    "integrated_autocorrelation_time",
    "inclusion_probabilities",
    "bma_estimate",
    "mpm_select",
    "mpm_estimate",
    "evaluate",
    "parameter_importance",
    "coefficient_summary",
]


@dataclass(frozen=True, eq=False)
class SurrogateModel:
    """PC surrogate ``u(xi) ~= sum_a coef[a] * psi_a(xi)``.

    ``mean`` and ``variance`` are the chain estimates of the output mean and
    variance under the input prior.
    """

    basis: TensorBasis
    coef: np.ndarray
    coef_se: np.ndarray
    inclusion: np.ndarray
    mode: str
    sigma2: float
    lam: float
    rho: float
    mean: float
    variance: float
    label: str = ""
    n_draws: int = 0

    def __post_init__(self):
        if self.mode not in ("bma", "mpm"):
            raise ValueError(f"mode must be 'bma' or 'mpm', got {self.mode!r}")
        m = self.basis.size
        for name in ("coef", "coef_se", "inclusion"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (m,):
                raise ValueError(f"{name} must have length {m}")
            object.__setattr__(self, name, arr)
        if np.any((self.inclusion < 0) | (self.inclusion > 1)):
            raise ValueError("inclusion probabilities must lie in [0, 1]")
        if self.mode == "mpm" and np.any(self.coef[self.inclusion <= 0.5] != 0.0):
            raise ValueError("MPM model has nonzero coefficients on unselected bases")

    def __call__(self, xi):
        return evaluate(self, xi)

    @property
    def selected(self) -> np.ndarray:
        return mpm_select(self.inclusion)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "mode": self.mode,
            "basis": self.basis.to_dict(),
            "coefficients": self.coef.tolist(),
            "standard_errors": self.coef_se.tolist(),
            "inclusion": self.inclusion.tolist(),
            "sigma2": float(self.sigma2),
            "lambda": float(self.lam),
            "rho": float(self.rho),
            "mean": float(self.mean),
            "variance": float(self.variance),
            "n_draws": int(self.n_draws),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateModel":
        return cls(
            basis=TensorBasis.from_dict(d["basis"]),
            coef=np.asarray(d["coefficients"], dtype=float),
            coef_se=np.asarray(d["standard_errors"], dtype=float),
            inclusion=np.asarray(d["inclusion"], dtype=float),
            mode=d["mode"], sigma2=d["sigma2"], lam=d["lambda"], rho=d["rho"],
            mean=d["mean"], variance=d["variance"], label=d.get("label", ""),
            n_draws=d.get("n_draws", 0),
        )

    def to_json(self, path=None, indent=1):
        text = json.dumps(self.to_dict(), indent=indent)
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text + "\n")

    @classmethod
    def from_json(cls, path_or_text) -> "SurrogateModel":
        text = str(path_or_text)
        if not text.lstrip().startswith("{"):
            with open(path_or_text) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def integrated_autocorrelation_time(x, max_lag: int | None = None) -> float:
    """Geyer's initial positive sequence estimate of the IAT.

    Sums consecutive autocorrelation pairs while they stay positive, up to
    ``max_lag`` (default ``len(x) // 50``). Constant input gives 1.
    """
    x = np.asarray(x, dtype=float)
    T = x.shape[0]
    if T < 2:
        return 1.0
    xc = x - x.mean()
    var = xc @ xc / T
    if var <= 1e-300 * max(1.0, float(np.abs(x).max()) ** 2):
        return 1.0
    if max_lag is None:
        max_lag = max(1, T // 50)
    nfft = 1 << int(np.ceil(np.log2(2 * T)))
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 2] / T
    rho = acov / acov[0]
    tau = -1.0
    k = 0
    while 2 * k + 1 <= max_lag:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        k += 1
    # antithetic chains can push the estimate below zero
    return max(tau, 1.0 / np.log10(max(T, 10)))


def inclusion_probabilities(chain: GibbsChain) -> np.ndarray:
    return chain.gamma.mean(axis=0)


def _standard_errors(draws: np.ndarray) -> np.ndarray:
    T = draws.shape[0]
    sd = draws.std(axis=0, ddof=1) if T > 1 else np.zeros(draws.shape[1])
    tau = np.array([integrated_autocorrelation_time(draws[:, a]) for a in range(draws.shape[1])])
    return sd * np.sqrt(tau / T)


def _estimate(chain: GibbsChain, basis: TensorBasis, mode: str, inclusion=None) -> SurrogateModel:
    if len(chain) == 0:
        raise ValueError("cannot estimate from an empty chain")
    if basis.size != chain.size:
        raise ValueError(f"basis has {basis.size} terms but chain has {chain.size}")
    coef = chain.c.mean(axis=0)
    nz = basis.index_set.indices.any(axis=1)
    variance = float(np.mean((chain.c[:, nz] ** 2) @ basis.norms[nz]))
    inc = inclusion_probabilities(chain) if inclusion is None else np.asarray(inclusion, dtype=float)
    if mode == "mpm":
        coef = np.where(inc > 0.5, coef, 0.0)
    return SurrogateModel(
        basis=basis, coef=coef, coef_se=_standard_errors(chain.c), inclusion=inc, mode=mode,
        sigma2=float(chain.sigma2.mean()), lam=float(chain.lam.mean()), rho=float(chain.rho.mean()),
        mean=float(coef[~nz].sum()), variance=variance, label=chain.label, n_draws=len(chain),
    )


def bma_estimate(chain: GibbsChain, basis: TensorBasis | None = None) -> SurrogateModel:
    """Model-averaged surrogate from ergodic averages of the chain."""
    basis = basis if basis is not None else chain.basis
    if basis is None:
        raise ValueError("chain carries no basis; pass one explicitly")
    return _estimate(chain, basis, "bma")


def mpm_select(inclusion) -> np.ndarray:
    """Median probability model: keep bases with inclusion probability > 0.5."""
    return (np.asarray(inclusion) > 0.5).astype(np.int8)


def mpm_estimate(dataset: TrainingDataset, basis: TensorBasis, hyper: GibbsHyperparams | None,
                 selected, iterations: int, burn_in: int, rng, inclusion=None,
                 thin: int = 1) -> SurrogateModel:
    """Refit with the inclusion vector fixed to ``selected``.

    ``inclusion`` records the selection-run probabilities on the returned
    model; by default the 0/1 selection itself is stored.
    """
    selected = np.asarray(selected, dtype=np.int8)
    chain = run_gibbs(dataset, basis, hyper, iterations, burn_in, thin, rng, fixed_gamma=selected)
    inc = selected.astype(float) if inclusion is None else np.asarray(inclusion, dtype=float)
    if np.any(mpm_select(inc) != selected):
        raise ValueError("inclusion probabilities are inconsistent with the selected set")
    return _estimate(chain, basis, "mpm", inclusion=inc)


def evaluate(model: SurrogateModel, xi):
    """Surrogate value at one point (scalar) or at each row of an (n, d) array."""
    psi = model.basis.evaluate(xi)
    return psi @ model.coef


def parameter_importance(model: SurrogateModel):
    """Per-input significance flags and scores.

    Input ``j`` is significant when some basis with inclusion probability
    above 0.5 has a nonzero degree in ``j``. The score is the largest
    inclusion probability among bases involving ``j``, so it exceeds 0.5
    exactly for significant inputs.
    """
    idx = model.basis.index_set.indices
    touches = idx > 0  # (m, d)
    scores = np.where(touches, model.inclusion[:, None], 0.0).max(axis=0)
    flags = (touches & (model.inclusion[:, None] > 0.5)).any(axis=0)
    return flags, scores


def coefficient_summary(chain: GibbsChain) -> np.ndarray:
    """Five-number summary (min, q25, median, q75, max) per coefficient, shape (m, 5)."""
    return np.quantile(chain.c, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0).T
