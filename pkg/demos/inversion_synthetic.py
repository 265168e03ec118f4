"""Recover inputs from twelve surrogate channels and check the predictive fit."""
import numpy as np

from gpcinv import (InversionProblem, TrainingDataset, bma_estimate, evaluate_synthetic, posterior_predictive,
                    posterior_summary, qmc_design, run_gibbs, run_inversion)
from gpcinv.distributions import rng_stream, sample_shifted_beta
from gpcinv.testbed import default_scenario, scenario_from_dict

doc = default_scenario()
fwd = scenario_from_dict(doc)
basis = fwd.basis
names = [p["name"] for p in doc["inputs"]]
x = qmc_design(basis.priors, 256)
y = evaluate_synthetic(fwd, x, rng_stream(10))
models = [bma_estimate(run_gibbs(TrainingDataset(x, y[:, j]), basis, None, 20_000, 10_000,
                                 rng=rng_stream(11, j)), basis) for j in range(fwd.n_channels)]

rng = rng_stream(12)
xi_star = np.array([sample_shifted_beta(p, rng) for p in basis.priors])
obs = fwd.mean(xi_star) + 0.5 * rng.standard_normal(fwd.n_channels)
problem = InversionProblem(models, obs, a_sigma2=3.0, b_sigma2=0.5, names=names)
chain = run_inversion(problem, 20_000, 10_000, rng_stream(13))

print(f"{'input':>8s} {'truth':>9s} {'2.5%':>9s} {'median':>9s} {'97.5%':>9s}  accept")
for s, t in zip(posterior_summary(chain), xi_star):
    q = s["quantiles"]
    print(f"{s['name']:>8s} {t:9.4f} {q['0.025']:9.4f} {q['0.5']:9.4f} {q['0.975']:9.4f}  {s['acceptance_rate']:.2f}")

pred = posterior_predictive(chain, problem, rng_stream(14))
lo, hi = np.quantile(pred, [0.005, 0.995], axis=0)
print("observed inside 99% predictive interval:", int(((lo <= obs) & (obs <= hi)).sum()), "of", len(obs))
