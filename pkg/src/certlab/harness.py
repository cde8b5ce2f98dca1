"""Replicated experiments: configuration, seeding, aggregation and export.

An experiment draws one mean vector per seed and, for every run of that
seed, plays each configured policy on fresh trial randomness. Policies in
the same (seed, run) share the first-stage stream, so they see identical
first-stage pulls and differ only where their allocations differ.

Every random stream is derived from ``master_seed`` and an index tuple, so
results do not depend on execution order or thread count.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from certlab.arm_model import (MisspecNoise, OutcomeModel, PriorSpec, bundled_effect_sizes,
                               draw_true_means)
from certlab.baselines import succ_elim_trial, two_stage_thompson_run, ucb_trial
from certlab.certificates import bound_from_name
from certlab.design import DesignSpec, TrialResult
from certlab.errors import CertlabError, ConfigError
from certlab.policies import PolicyKind
from certlab.trial_engine import run_multi_stage, run_trial

ADAPTIVE = ("ucb", "succ_elim", "two_stage_thompson")
SWEEP_AXES = ("s1_fraction", "T", "delta", "n", "beta", "noise_mean", "stages", "uniform_low")
CSV_HEADER = ["policy", "sweep_axis", "sweep_value", "mean_norm_cert", "std_err", "count"]
RAW_HEADER = ["policy", "sweep_axis", "sweep_value", "seed", "run", "certificate", "normalized",
              "true_best", "arm", "k", "covered", "iid_violation"]

# domain tags keep the three kinds of stream apart
_MEANS, _STAGE1, _POLICY = 0, 1, 2
_MASK64 = (1 << 64) - 1


def _seed(master: int, *key: int) -> int:
    if not 0 <= master <= _MASK64:
        raise ConfigError(f"master seed must be a 64-bit unsigned integer, got {master}")
    if any(k < 0 for k in key):
        raise ConfigError(f"seed indices must be non-negative, got {key}")
    state = np.random.SeedSequence(master, spawn_key=key).generate_state(2, np.uint32)
    return int(state[0]) | int(state[1]) << 32


def derive_seed(master: int, seed_idx: int, run_idx: int, policy_idx: int) -> int:
    """Seed of the policy-specific stream for one (seed, run, policy) cell."""
    return _seed(master, _POLICY, seed_idx, run_idx, policy_idx)


def stage1_seed(master: int, seed_idx: int, run_idx: int) -> int:
    """Seed of the first-stage stream shared by all policies of a (seed, run) cell."""
    return _seed(master, _STAGE1, seed_idx, run_idx)


def means_seed(master: int, seed_idx: int) -> int:
    return _seed(master, _MEANS, seed_idx)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment table."""

    name: str = "experiment"
    n: int = 10
    T: int = 10_000
    s1_fraction: float = 0.3
    delta: float = 0.1
    bound: Optional[str] = None
    stages: int = 2
    last_stage_only: bool = True
    bonferroni: bool = False
    prior: PriorSpec = field(default_factory=PriorSpec.uniform01)
    outcome: OutcomeModel = field(default_factory=OutcomeModel.bernoulli)
    policies: list = field(default_factory=lambda: ["single_stage", "sample_split"])
    seeds: int = 15
    runs_per_seed: int = 100
    sweep_axis: Optional[str] = None
    sweep_values: list = field(default_factory=list)
    master_seed: int = 0
    posterior_draws: int = 200
    simulate_noise: bool = False
    label: str = ""

    def __post_init__(self):
        if self.seeds < 1 or self.runs_per_seed < 1:
            raise ConfigError("seeds and runs_per_seed must be >= 1")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for p in self.policies:
            if p not in ADAPTIVE:
                PolicyKind.parse(p)
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}; expected one of {SWEEP_AXES}")
            if not self.sweep_values:
                raise ConfigError("a sweep needs at least one value")
        if self.posterior_draws < 1:
            raise ConfigError("posterior_draws must be >= 1")
        if self.bound is not None:
            bound_from_name(self.bound)
        # fail early on invalid sweep points
        for v in self.points():
            self.design_for(v)
            self.prior_for(v)

    def points(self) -> list:
        return list(self.sweep_values) if self.sweep_axis else [None]

    def design_for(self, value=None) -> DesignSpec:
        kw = dict(n=self.n, T=self.T, s1_fraction=self.s1_fraction, delta=self.delta,
                  stages=self.stages)
        axis = self.sweep_axis
        if axis in ("s1_fraction", "delta"):
            kw[axis] = float(value)
        elif axis in ("T", "n", "stages"):
            if float(value) != int(value):
                raise ConfigError(f"sweep axis {axis} needs integer values, got {value}")
            kw[axis] = int(value)
        if not 0 <= kw["s1_fraction"] < 1:
            raise ConfigError(f"s1_fraction must lie in [0, 1), got {kw['s1_fraction']}")
        name = self.bound or ("eq3" if self.outcome.is_bernoulli else "subgaussian")
        return DesignSpec.from_fraction(kw["n"], kw["T"], kw["s1_fraction"], delta=kw["delta"],
                                        bound=bound_from_name(name), stages=kw["stages"],
                                        last_stage_only=self.last_stage_only,
                                        bonferroni=self.bonferroni)

    def prior_for(self, value=None) -> PriorSpec:
        prior = self.prior
        if self.sweep_axis == "beta":
            alpha = prior.alpha if prior.kind == "beta" else 1.0
            prior = PriorSpec.beta_prior(alpha, float(value), misspec=prior.misspec)
        elif self.sweep_axis == "noise_mean":
            var = prior.misspec.variance if prior.misspec else 0.0
            prior = dataclasses.replace(prior, misspec=MisspecNoise(float(value), var))
        elif self.sweep_axis == "uniform_low":
            high = prior.high if prior.kind == "uniform" else 1.0
            prior = PriorSpec.uniform(float(value), high, misspec=prior.misspec)
        return prior

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["prior"] = self.prior.to_dict()
        d["outcome"] = self.outcome.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "prior" in d:
            d["prior"] = PriorSpec.from_dict(d["prior"])
        if "outcome" in d:
            d["outcome"] = OutcomeModel.from_dict(d["outcome"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return ExperimentConfig.from_dict(data)


@dataclass(frozen=True)
class AggregateRow:
    policy: str
    sweep_axis: str
    sweep_value: object
    mean_norm_cert: float
    std_err: float
    count: int


def run_policy(name: str, design: DesignSpec, means, config: ExperimentConfig, prior: PriorSpec,
               rng: np.random.Generator, stage1_rng: np.random.Generator) -> TrialResult:
    """Dispatch one policy name to the trial runner it needs."""
    model = config.outcome
    if name == "ucb":
        return ucb_trial(design, means, model, rng)
    if name == "succ_elim":
        return succ_elim_trial(design, means, model, rng)
    if name == "two_stage_thompson":
        return two_stage_thompson_run(design, means, model, rng, stage1_rng)
    policy = PolicyKind.parse(name, prior=prior, posterior_draws=config.posterior_draws,
                              simulate_noise=config.simulate_noise)
    if policy.name == "single_stage" or design.stages == 1:
        return run_trial(design, "single_stage", means, model, rng)
    if design.stages == 2 and design.last_stage_only:
        return run_trial(design, policy, means, model, rng, stage1_rng)
    return run_multi_stage(design, policy, means, model, rng, stage1_rng)


def _simulate_seed(config: ExperimentConfig, point_idx: int, seed_idx: int) -> list:
    value = config.points()[point_idx]
    design = config.design_for(value)
    prior = config.prior_for(value)
    means = draw_true_means(prior, design.n, np.random.default_rng(means_seed(config.master_seed, seed_idx)),
                            config.outcome)
    records = []
    for run_idx in range(config.runs_per_seed):
        s1_seed = stage1_seed(config.master_seed, seed_idx, run_idx)
        for p_idx, name in enumerate(config.policies):
            rng = np.random.default_rng(derive_seed(config.master_seed, seed_idx, run_idx, p_idx))
            stage1_rng = np.random.default_rng(s1_seed)
            try:
                res = run_policy(name, design, means, config, prior, rng, stage1_rng)
            except CertlabError as exc:
                raise type(exc)(f"{exc} [sweep={value}, seed={seed_idx}, run={run_idx}, "
                                f"policy={name}]") from exc
            records.append(dict(point=point_idx, sweep_value=value, seed=seed_idx, run=run_idx,
                                policy_idx=p_idx, policy=name + config.label, result=res))
    return records


def simulate(config: ExperimentConfig, threads: int = 1) -> list:
    """Per-replication records, ordered by (sweep point, seed, run, policy)."""
    units = [(p, s) for p in range(len(config.points())) for s in range(config.seeds)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda u: _simulate_seed(config, *u), units))
    else:
        chunks = [_simulate_seed(config, *u) for u in units]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r["point"], r["seed"], r["run"], r["policy_idx"]))
    return records


def aggregate(config: ExperimentConfig, records: list) -> list:
    groups = {}
    # fixed summation order so the result does not depend on completion order
    for r in sorted(records, key=lambda r: (r["point"], r["seed"], r["run"], r["policy_idx"])):
        groups.setdefault((r["point"], r["policy_idx"]), []).append(r["result"].score)
    rows = []
    axis = config.sweep_axis or ""
    for (point, p_idx) in sorted(groups):
        vals = np.array(groups[(point, p_idx)])
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        value = config.points()[point]
        rows.append(AggregateRow(config.policies[p_idx] + config.label, axis,
                                 "" if value is None else value, float(vals.mean()), se, int(vals.size)))
    return rows


def run_experiment(config: ExperimentConfig, threads: int = 1) -> list:
    """Aggregated rows, one per (sweep value, policy)."""
    return aggregate(config, simulate(config, threads))


# ---------------------------------------------------------------- export

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(getattr(r, h)) for h in CSV_HEADER])
    return buf.getvalue()


def rows_to_json(rows) -> str:
    return json.dumps([dataclasses.asdict(r) for r in rows], indent=2) + "\n"


def records_to_csv(config: ExperimentConfig, records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RAW_HEADER)
    for r in records:
        res = r["result"]
        norm = res.normalized
        w.writerow([r["policy"], config.sweep_axis or "", _fmt("" if r["sweep_value"] is None else r["sweep_value"]),
                    r["seed"], r["run"], _fmt(res.l), "" if norm is None else _fmt(norm),
                    _fmt(res.true_best), res.certificate.arm, res.certificate.k, int(res.covered),
                    int(res.iid_violation)])
    return buf.getvalue()


def export(rows, path, fmt: str = "csv") -> Path:
    """Write aggregate rows as CSV or JSON."""
    rows = list(rows)
    if not rows:
        raise ConfigError("nothing to export")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown export format {fmt!r}")
    path = Path(path)
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    path.write_text(text)
    return path


def _parse_value(s):
    if s == "":
        return ""
    try:
        return int(s)
    except ValueError:
        return float(s)


def read_rows(path) -> list:
    """Parse a file written by :func:`export` back into rows."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("["):
        return [AggregateRow(**d) for d in json.loads(text)]
    rows = []
    for d in csv.DictReader(io.StringIO(text)):
        rows.append(AggregateRow(d["policy"], d["sweep_axis"], _parse_value(d["sweep_value"]),
                                 float(d["mean_norm_cert"]), float(d["std_err"]), int(d["count"])))
    return rows


# ---------------------------------------------------------------- presets

NON_ADAPTIVE = ["random_k", "best_arm", "single_stage", "sample_split", "omniscient"]
S1_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def _preset(name, **kw) -> ExperimentConfig:
    return ExperimentConfig(name=name, **kw)


def figure_presets() -> dict:
    """Named experiment sets; each value is a list of configs run in turn."""
    beta_prior = PriorSpec.beta_prior(1.0, 1.0)
    return {
        "fig1": [_preset("fig1", policies=NON_ADAPTIVE, sweep_axis="s1_fraction", sweep_values=S1_GRID)],
        "fig2": [_preset("fig2", policies=NON_ADAPTIVE, s1_fraction=0.5, sweep_axis="T",
                         sweep_values=[1000, 2500, 5000, 10000, 20000, 40000])],
        "fig3": [_preset("fig3", policies=["single_stage", "sample_split", "two_stage_se",
                                           "two_stage_thompson"],
                         sweep_axis="s1_fraction", sweep_values=S1_GRID)],
        "fig4": [_preset("fig4", policies=["single_stage", "sample_split", "two_stage_se",
                                           "two_stage_thompson", "succ_elim", "ucb"],
                         sweep_axis="s1_fraction", sweep_values=[0.1, 0.3, 0.5, 0.7])],
        "fig5": [_preset("fig5", prior=beta_prior,
                         policies=["single_stage", "sample_split", "greedy_prior",
                                   "two_stage_thompson", "ucb"],
                         sweep_axis="beta", sweep_values=[1.0, 2.0, 4.0])],
        "fig6": [_preset("fig6", prior=PriorSpec.uniform01(misspec=MisspecNoise(0.0, 0.01)),
                         policies=["single_stage", "sample_split", "greedy_prior"],
                         sweep_axis="noise_mean", sweep_values=[0.05, 0.1, 0.2])],
        "fig7": [_preset("fig7", prior=PriorSpec.discrete(bundled_effect_sizes()), outcome=OutcomeModel.gaussian(1.0),
                         policies=["single_stage", "sample_split", "greedy_prior", "ucb"])],
        "fig_box": [_preset("fig_box", policies=["single_stage", "best_arm", "sample_split"])],
        "fig_delta": [_preset("fig_delta", policies=NON_ADAPTIVE + ["ucb"], sweep_axis="delta",
                              sweep_values=[0.01, 0.05, 0.1, 0.2, 0.3])],
        "fig_multistage": [
            _preset("fig_multistage", policies=["sample_split"], sweep_axis="stages",
                    sweep_values=[2, 3, 4, 5], label="[last_stage]"),
            _preset("fig_multistage", policies=["sample_split"], sweep_axis="stages",
                    sweep_values=[2, 3, 4, 5], last_stage_only=False, label="[all_data]"),
        ],
        "fig_n": [_preset("fig_n", policies=NON_ADAPTIVE + ["ucb"], sweep_axis="n",
                          sweep_values=[5, 10, 20, 50])],
        "fig_dist": [_preset("fig_dist", policies=NON_ADAPTIVE + ["ucb"], sweep_axis="uniform_low",
                             sweep_values=[0.0, 0.25, 0.5, 0.75])],
    }


FIGURES = tuple(figure_presets())


def run_figure(name: str, threads: int = 1, master_seed: Optional[int] = None, **overrides) -> list:
    """Aggregate rows for every config of a named preset."""
    presets = figure_presets()
    if name not in presets:
        raise ConfigError(f"unknown figure {name!r}; expected one of {', '.join(presets)}")
    rows = []
    for cfg in presets[name]:
        if master_seed is not None:
            overrides["master_seed"] = master_seed
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
        rows.extend(run_experiment(cfg, threads))
    return rows
