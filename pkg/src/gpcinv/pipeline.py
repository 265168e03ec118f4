"""File-based train / invert / validate workflow behind the command line."""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .basis import TensorBasis, build_basis
from .distributions import ShiftedBeta, beta_moment_match, rng_stream
from .gibbs import GibbsHyperparams, TrainingDataset, run_gibbs
from .inversion import InversionChain, InversionProblem, posterior_predictive, posterior_summary, run_inversion
from .surrogate import (SurrogateModel, bma_estimate, coefficient_summary, mpm_estimate, mpm_select,
                        parameter_importance)
from .testbed import LAND_INPUTS, default_scenario, evaluate_synthetic, qmc_design, scenario_from_dict

log = logging.getLogger(__name__)

# stream ids under the root seed
SYNTH_STREAM, TRAIN_STREAM, MPM_STREAM, INVERT_STREAM, VALIDATE_STREAM = 1, 2, 3, 4, 5

FAST = {"gibbs": (20_000, 10_000), "inversion": (4_000, 2_000)}


class InputError(ValueError):
    """Bad user input: malformed files, inconsistent configuration."""


@dataclass
class InputSpec:
    name: str
    prior: ShiftedBeta
    log_scale: bool = False

    @property
    def display(self) -> str:
        return f"{self.name} (log10)" if self.log_scale else self.name


@dataclass
class RunConfig:
    inputs: list
    degree: int = 2
    strict: bool = True
    mode: str = "bma"
    seed: int = 0
    gibbs_iterations: int = 200_000
    gibbs_burn_in: int = 100_000
    gibbs_thin: int = 1
    scan: str = "systematic"
    hyper: GibbsHyperparams = field(default_factory=GibbsHyperparams)
    inv_iterations: int = 20_000
    inv_burn_in: int = 10_000
    adapt: bool = True
    joint: bool = False
    channels: list | None = None
    a_sigma2: float = 1e-3
    b_sigma2: float = 1e-3
    paths: dict = field(default_factory=dict)
    scenario: dict | None = None
    jobs: int = 1

    @property
    def priors(self) -> tuple:
        return tuple(s.prior for s in self.inputs)

    @property
    def names(self) -> list:
        return [s.name for s in self.inputs]

    def basis(self) -> TensorBasis:
        return build_basis(self.priors, self.degree, strict=self.strict)

    def path(self, key: str, out: Path) -> Path:
        p = Path(self.paths.get(key, DEFAULT_PATHS[key]))
        return p if p.is_absolute() else out / p

    def apply_fast(self):
        self.gibbs_iterations, self.gibbs_burn_in = FAST["gibbs"]
        self.inv_iterations, self.inv_burn_in = FAST["inversion"]


DEFAULT_PATHS = {
    "training": "training.csv",
    "measurements": "measurements.csv",
    "truth": "truth.json",
    "models": "models",
    "chain": "inversion_chain.csv",
    "summary": "posterior_summary.json",
    "predictive": "predictive.json",
    "importance": "importance.csv",
}


def _input_spec(d: dict) -> InputSpec:
    try:
        if "a" in d:
            prior = ShiftedBeta(float(d["a"]), float(d["b"]), float(d["min"]), float(d["max"]))
        else:
            prior = beta_moment_match(float(d["mean"]), float(d["variance"]), float(d["min"]), float(d["max"]))
    except KeyError as exc:
        raise InputError(f"input {d.get('name', '?')!r} is missing field {exc}") from None
    return InputSpec(str(d["name"]), prior, bool(d.get("log_scale", False)))


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON run configuration; missing sections take the documented defaults."""
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise InputError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {path} is not valid JSON: {exc}") from None
    doc = copy.deepcopy(doc)
    scenario = doc.get("scenario")
    inputs = doc.get("inputs") or (scenario or {}).get("inputs") or [dict(p) for p in LAND_INPUTS]
    specs = [_input_spec(p) for p in inputs]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise InputError(f"duplicate input names in config: {names}")
    g = doc.get("gibbs", {})
    inv = doc.get("inversion", {})
    cfg = RunConfig(
        inputs=specs,
        degree=int(doc.get("degree", (scenario or {}).get("degree", 2))),
        strict=bool(doc.get("strict", True)),
        mode=doc.get("mode", "bma"),
        seed=int(doc.get("seed", 0)),
        gibbs_iterations=int(g.get("iterations", 200_000)),
        gibbs_burn_in=int(g.get("burn_in", 100_000)),
        gibbs_thin=int(g.get("thin", 1)),
        scan=g.get("scan", "systematic"),
        hyper=GibbsHyperparams(**g.get("hyper", {})),
        inv_iterations=int(inv.get("iterations", 20_000)),
        inv_burn_in=int(inv.get("burn_in", 10_000)),
        adapt=bool(inv.get("adapt", True)),
        joint=bool(inv.get("joint", False)),
        channels=inv.get("channels"),
        a_sigma2=float(inv.get("a_sigma2", 1e-3)),
        b_sigma2=float(inv.get("b_sigma2", 1e-3)),
        paths=dict(doc.get("paths", {})),
        scenario=scenario,
        jobs=int(doc.get("jobs", 1)),
    )
    for k, v in (overrides or {}).items():
        if v is not None:
            setattr(cfg, k, v)
    if cfg.mode not in ("bma", "mpm"):
        raise InputError(f"mode must be 'bma' or 'mpm', got {cfg.mode!r}")
    for a, b in ((cfg.gibbs_burn_in, cfg.gibbs_iterations), (cfg.inv_burn_in, cfg.inv_iterations)):
        if not 0 <= a < b:
            raise InputError(f"burn-in {a} must be smaller than the iteration count {b}")
    rel = [v for v in cfg.paths.values()]
    if len(set(rel)) != len(rel):
        raise InputError("configured paths must be distinct")
    return cfg


# ---------------------------------------------------------------- ingestion

def _read_csv_rows(path):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    except FileNotFoundError:
        raise InputError(f"file {path} not found") from None
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"{path} is empty")
    return rows


def ingest_training_csv(path, cfg: RunConfig) -> list[TrainingDataset]:
    """Read the training table: input columns (config order) then one column per channel.

    Log-scale inputs are converted to log10 units on ingestion.
    """
    rows = _read_csv_rows(path)
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        dup = sorted({h for h in header if header.count(h) > 1})
        raise InputError(f"{path}: duplicate column names {dup}")
    d = len(cfg.inputs)
    missing = [n for n in cfg.names if n not in header[:d]]
    if missing or header[:d] != cfg.names:
        raise InputError(f"{path}: expected input columns {cfg.names} first, got {header[:d]}")
    labels = header[d:]
    if not labels:
        raise InputError(f"{path}: no output channel columns")
    if len(rows) < 2:
        raise InputError(f"{path}: no data rows")
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise InputError(f"{path}: row {i} has {len(row)} cells, expected {len(header)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise InputError(f"{path}: row {i} contains a non-numeric cell") from None
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"{path}: row {i} contains a non-finite value")
        data[i - 1] = vals
    x = data[:, :d].copy()
    for j, spec in enumerate(cfg.inputs):
        if spec.log_scale:
            if np.any(x[:, j] <= 0):
                bad = int(np.flatnonzero(x[:, j] <= 0)[0]) + 1
                raise InputError(f"{path}: row {bad}: log-scale input {spec.name} must be positive")
            x[:, j] = np.log10(x[:, j])
    if cfg.strict:
        for j, spec in enumerate(cfg.inputs):
            out = (x[:, j] < spec.prior.min) | (x[:, j] > spec.prior.max)
            if out.any():
                bad = int(np.flatnonzero(out)[0]) + 1
                raise InputError(f"{path}: row {bad}: {spec.display} = {x[bad - 1, j]} outside "
                                 f"[{spec.prior.min}, {spec.prior.max}]")
    return [TrainingDataset(x, data[:, d + k], label) for k, label in enumerate(labels)]


def load_us_arm() -> dict:
    """Monthly latent-heat observations bundled with the package (label -> value)."""
    ref = resources.files("gpcinv").joinpath("data/us_arm_lh.csv")
    with resources.as_file(ref) as p:
        return read_measurements(p)


def read_measurements(path) -> dict:
    """``channel,value`` table; ``builtin:us_arm`` selects the bundled fixture."""
    if str(path) == "builtin:us_arm":
        return load_us_arm()
    rows = _read_csv_rows(path)
    if [h.strip() for h in rows[0]] != ["channel", "value"]:
        raise InputError(f"{path}: header must be 'channel,value'")
    out = {}
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != 2:
            raise InputError(f"{path}: row {i} must have two cells")
        label = row[0].strip()
        if label in out:
            raise InputError(f"{path}: duplicate channel label {label!r}")
        try:
            v = float(row[1])
        except ValueError:
            raise InputError(f"{path}: row {i} value is not numeric") from None
        if not math.isfinite(v):
            raise InputError(f"{path}: row {i} value is not finite")
        out[label] = v
    return out


def write_measurements(values: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "value"])
        for k, v in values.items():
            w.writerow([k, repr(float(v))])


def _to_physical(cfg: RunConfig, x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float, copy=True)
    for j, spec in enumerate(cfg.inputs):
        if spec.log_scale:
            x[..., j] = 10.0 ** x[..., j]
    return x


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------- commands

def cmd_synth(cfg: RunConfig, out: Path) -> dict:
    """Materialize a synthetic scenario: training table, measurements and truth record."""
    out.mkdir(parents=True, exist_ok=True)
    doc = copy.deepcopy(cfg.scenario) if cfg.scenario else default_scenario(degree=cfg.degree)
    doc["inputs"] = [{"name": s.name, "a": s.prior.a, "b": s.prior.b, "min": s.prior.min,
                      "max": s.prior.max, "log_scale": s.log_scale} for s in cfg.inputs]
    doc["degree"] = cfg.degree
    fwd = scenario_from_dict(doc, cfg.basis())
    rng = rng_stream(cfg.seed, SYNTH_STREAM)
    n = int(doc.get("n_train", 256))
    x = qmc_design(cfg.priors, n)
    y = evaluate_synthetic(fwd, x, rng)
    header = cfg.names + list(fwd.labels)
    xp = _to_physical(cfg, x)
    with open(cfg.path("training", out), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            w.writerow([repr(float(v)) for v in xp[i]] + [repr(float(v)) for v in y[i]])

    meas = doc.get("measurement") or {}
    if meas.get("xi") is not None:
        xi_star = np.asarray(meas["xi"], dtype=float)
    else:
        xi_star = np.array([pr.min + pr.width * rng.beta(pr.a, pr.b) for pr in cfg.priors])
    sd = float(meas.get("noise_sd", 0.0))
    clean = fwd.mean(xi_star)
    u_obs = clean + sd * rng.standard_normal(clean.shape) if sd > 0 else clean
    write_measurements(dict(zip(fwd.labels, u_obs)), cfg.path("measurements", out))

    active = sorted({cfg.names[j] for row in fwd.coef
                     for a in np.flatnonzero(row) for j in np.flatnonzero(fwd.basis.index_set.indices[a])})
    truth = {
        "xi_star": xi_star.tolist(),
        "names": cfg.names,
        "noise_free_outputs": dict(zip(fwd.labels, clean.tolist())),
        "measurement_noise_sd": sd,
        "active_inputs": active,
        "active_bases": {lab: [int(a) for a in np.flatnonzero(fwd.coef[j])] for j, lab in enumerate(fwd.labels)},
        "scenario": doc,
    }
    _dump_json(truth, cfg.path("truth", out))
    return truth


def _train_channel(args):
    ds, basis, cfg, k, want_mpm = args
    rng = rng_stream(cfg.seed, TRAIN_STREAM, k)

    def report(frac):
        if round(frac * 100) % 10 == 0:
            log.info("channel %s: %d%%", ds.label, round(frac * 100))

    chain = run_gibbs(ds, basis, cfg.hyper, cfg.gibbs_iterations, cfg.gibbs_burn_in, cfg.gibbs_thin, rng,
                      scan=cfg.scan, progress=report)
    bma = bma_estimate(chain, basis)
    mpm = None
    if want_mpm:
        sel = mpm_select(bma.inclusion)
        mpm = mpm_estimate(ds, basis, cfg.hyper, sel, cfg.gibbs_iterations, cfg.gibbs_burn_in,
                           rng_stream(cfg.seed, MPM_STREAM, k), inclusion=bma.inclusion, thin=cfg.gibbs_thin)
    return bma, mpm, coefficient_summary(chain), chain


def cmd_train(cfg: RunConfig, out: Path, save_chains: bool = False) -> dict:
    """Fit one surrogate per output channel; writes models plus report tables."""
    datasets = ingest_training_csv(cfg.path("training", out), cfg)
    basis = cfg.basis()
    mdir = cfg.path("models", out)
    mdir.mkdir(parents=True, exist_ok=True)
    want_mpm = cfg.mode == "mpm"
    jobs = [(ds, basis, cfg, k, want_mpm) for k, ds in enumerate(datasets)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            results = list(ex.map(_train_channel, jobs))
    else:
        results = [_train_channel(j) for j in jobs]

    labels = [ds.label for ds in datasets]
    models = {}
    for ds, (bma, mpm, summ, chain) in zip(datasets, results):
        bma.to_json(mdir / f"{ds.label}_bma.json")
        models[ds.label] = {"bma": bma}
        if mpm is not None:
            mpm.to_json(mdir / f"{ds.label}_mpm.json")
            models[ds.label]["mpm"] = mpm
        if save_chains:
            chain.to_csv(mdir / f"{ds.label}_chain.csv")

    idx = basis.index_set
    with open(mdir / "inclusion.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["basis", "multi_index"] + labels)
        for a in range(basis.size):
            w.writerow([a, idx.label(a)] + [repr(float(models[lab]["bma"].inclusion[a])) for lab in labels])
    with open(mdir / "coefficient_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "basis", "multi_index", "min", "q25", "median", "q75", "max"])
        for lab, (_, _, summ, _) in zip(labels, results):
            for a in range(basis.size):
                w.writerow([lab, a, idx.label(a)] + [repr(float(v)) for v in summ[a]])
    _dump_json({"channels": labels, "basis": basis.to_dict(), "names": cfg.names,
                "modes": ["bma", "mpm"] if want_mpm else ["bma"]}, mdir / "index.json")
    return models


def load_models(cfg: RunConfig, out: Path, mode: str | None = None) -> list[SurrogateModel]:
    mode = mode or cfg.mode
    mdir = cfg.path("models", out)
    try:
        with open(mdir / "index.json") as fh:
            labels = json.load(fh)["channels"]
    except FileNotFoundError:
        raise InputError(f"no trained models in {mdir} (index.json missing)") from None
    models = []
    for lab in labels:
        p = mdir / f"{lab}_{mode}.json"
        if not p.exists():
            raise InputError(f"model file {p} not found")
        models.append(SurrogateModel.from_json(p))
    return models


def build_problem(cfg: RunConfig, out: Path, mode: str | None = None) -> InversionProblem:
    models = load_models(cfg, out, mode)
    src = cfg.paths.get("measurements", "")
    meas = read_measurements(src if src.startswith("builtin:") else cfg.path("measurements", out))
    labels = [m.label for m in models]
    missing = [lab for lab in labels if lab not in meas]
    if missing:
        raise InputError(f"measurements missing for channels {missing}")
    if cfg.channels is not None:
        unknown = [c for c in cfg.channels if c not in labels]
        if unknown:
            raise InputError(f"unknown channels in subset: {unknown}")
        models = [m for m in models if m.label in cfg.channels]
    obs = np.array([meas[m.label] for m in models])
    return InversionProblem(tuple(models), obs, cfg.priors, cfg.a_sigma2, cfg.b_sigma2,
                            names=tuple(s.display for s in cfg.inputs))


def cmd_invert(cfg: RunConfig, out: Path) -> tuple:
    """Sample the input posterior given the measurements; writes chain CSV and summary JSON."""
    problem = build_problem(cfg, out)
    chain = run_inversion(problem, cfg.inv_iterations, cfg.inv_burn_in, rng_stream(cfg.seed, INVERT_STREAM),
                          adapt=cfg.adapt, joint=cfg.joint)
    chain.to_csv(cfg.path("chain", out))
    summary = {"mode": cfg.mode, "channels": list(chain.channels), "iterations": cfg.inv_iterations,
               "burn_in": cfg.inv_burn_in, "diagnostics": chain.diagnostics,
               "parameters": posterior_summary(chain)}
    _dump_json(summary, cfg.path("summary", out))
    return chain, summary


def observed_quantile(samples, value) -> float:
    """Mid-rank position of ``value`` within ``samples``."""
    samples = np.asarray(samples)
    below = np.count_nonzero(samples < value)
    ties = np.count_nonzero(samples == value)
    return (below + 0.5 * ties) / samples.size


def cmd_validate(cfg: RunConfig, out: Path, bins: int = 40) -> dict:
    """Posterior predictive check of every channel against its observation."""
    problem = build_problem(cfg, out)
    try:
        chain = InversionChain.from_csv(cfg.path("chain", out))
    except FileNotFoundError:
        raise InputError(f"inversion chain {cfg.path('chain', out)} not found") from None
    if chain.xi.shape[1] != problem.dim or chain.sigma2.shape[1] != problem.n_channels:
        raise InputError("chain dimensions do not match the models and channel selection")
    pred = posterior_predictive(chain, problem, rng_stream(cfg.seed, VALIDATE_STREAM))
    report = []
    for j, m in enumerate(problem.surrogates):
        s = pred[:, j]
        counts, edges = np.histogram(s, bins=bins)
        q = observed_quantile(s, problem.observed[j])
        lo, hi = np.quantile(s, [0.005, 0.995])
        report.append({
            "channel": m.label,
            "observed": float(problem.observed[j]),
            "quantile": float(q),
            "interval_99": [float(lo), float(hi)],
            "flagged": bool(q < 0.005 or q > 0.995),
            "predictive_mean": float(s.mean()),
            "predictive_sd": float(s.std(ddof=1)),
            "hist_edges": edges.tolist(),
            "hist_counts": counts.tolist(),
        })
    doc = {"channels": report, "n_flagged": sum(r["flagged"] for r in report)}
    _dump_json(doc, cfg.path("predictive", out))
    return doc


def cmd_importance(cfg: RunConfig, out: Path) -> list[dict]:
    """Input significance per channel and aggregated; sorted by score then name."""
    models = load_models(cfg, out)
    names = [s.name for s in cfg.inputs]
    per = {}
    for m in models:
        if m.basis.dim != len(names):
            raise InputError(f"model {m.label} has {m.basis.dim} inputs, config lists {len(names)}")
        per[m.label] = parameter_importance(m)
    rows = []
    for j, name in enumerate(names):
        flags = [bool(per[m.label][0][j]) for m in models]
        scores = [float(per[m.label][1][j]) for m in models]
        rows.append({"name": name, "significant": any(flags), "score": max(scores),
                     "n_channels": sum(flags),
                     "channels": {m.label: {"significant": f, "score": s}
                                  for m, f, s in zip(models, flags, scores)}})
    rows.sort(key=lambda r: (-r["score"], r["name"]))
    with open(cfg.path("importance", out), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "significant", "score", "n_channels"] + [m.label for m in models])
        for r in rows:
            w.writerow([r["name"], int(r["significant"]), repr(r["score"]), r["n_channels"]]
                       + [repr(r["channels"][m.label]["score"]) for m in models])
    return rows
