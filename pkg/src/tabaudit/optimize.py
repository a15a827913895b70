"""Search over the prior parameter space.

Three strategies share one journaled trial format:

  * exhaustive grid (G evenly spaced values per continuous/integer
    parameter, both binary values, all categories; conditional parameters
    expand only under the prior type that activates them);
  * TPE: after random startup trials, split history at the best-quartile
    boundary, fit per-dimension densities over the good and remaining
    trials, draw candidates from the good model and keep the best
    good/rest density ratio;
  * genetic algorithm: elitism, tournament selection, uniform crossover,
    per-parameter mutation.

All searches are resumable from the journal: proposals are recomputed
deterministically (objective values are never recomputed), because every
random decision derives from (master seed, trial index) rather than a
shared stream.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .coverage import CoverageParams, coverage_pair
from .discriminator import bootstrap_auc
from .features import FeatureMatrix, featurize_corpus, get_schema
from .gbdt import GRID_MODE_PARAMS, GbdtParams
from .prior import (
    ColumnCountSampler,
    PriorConfig,
    ScmType,
    TreeFamily,
    UniformIntSampler,
    generate_corpus,
    sample_column_counts,
)
from .seeding import derive_seed, rng_from

FAILED_VALUE = float("inf")


class OptimizeError(ValueError):
    pass


# -- search space ----------------------------------------------------------------


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # continuous | integer | binary | categorical
    bounds: tuple[float, float] | None = None
    choices: tuple[str, ...] | None = None
    active_when: tuple[str, tuple[str, ...]] | None = None

    def __post_init__(self) -> None:
        if self.kind in ("continuous", "integer") and self.bounds is None:
            raise OptimizeError(f"{self.name}: bounds required")
        if self.kind == "categorical" and not self.choices:
            raise OptimizeError(f"{self.name}: choices required")


@dataclass(frozen=True)
class SearchSpace:
    params: tuple[Param, ...]

    def __post_init__(self) -> None:
        seen = set()
        for p in self.params:
            if p.active_when is not None and p.active_when[0] not in seen:
                raise OptimizeError(
                    f"{p.name}: activation refers to {p.active_when[0]}, "
                    "which must be declared earlier"
                )
            seen.add(p.name)

    def is_active(self, p: Param, assignment: dict) -> bool:
        if p.active_when is None:
            return True
        gate, allowed = p.active_when
        return assignment.get(gate) in allowed

    def active_items(self, assignment: dict) -> dict:
        return {
            p.name: assignment[p.name]
            for p in self.params
            if p.name in assignment and self.is_active(p, assignment)
        }

    def by_name(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        raise OptimizeError(f"unknown parameter {name}")


def prior_search_space() -> SearchSpace:
    """The prior hyperparameter space; tree fields activate for tree/mix
    types, the MLP mixing weight for mix only. Column bounds are fixed per
    target dataset, not searched."""
    tree_types = (ScmType.TREE.value, ScmType.MIX.value)
    return SearchSpace(
        params=(
            Param("max_classes", "integer", bounds=(2, 20)),
            Param("p_categorical", "continuous", bounds=(0.0, 0.6)),
            Param("p_ordered", "continuous", bounds=(0.0, 1.0)),
            Param("balanced", "binary"),
            Param("replay_small", "binary"),
            Param(
                "scm_type",
                "categorical",
                choices=(ScmType.MLP.value, ScmType.TREE.value, ScmType.MIX.value),
            ),
            Param(
                "tree_family",
                "categorical",
                choices=tuple(f.value for f in TreeFamily),
                active_when=("scm_type", tree_types),
            ),
            Param(
                "depth_rate", "continuous", bounds=(0.3, 1.0), active_when=("scm_type", tree_types)
            ),
            Param(
                "estimators_rate",
                "continuous",
                bounds=(0.3, 1.0),
                active_when=("scm_type", tree_types),
            ),
            Param(
                "p_mlp", "continuous", bounds=(0.0, 1.0), active_when=("scm_type", (ScmType.MIX.value,))
            ),
        )
    )


def assignment_to_config(assignment: dict, col_bounds: tuple[int, int]) -> PriorConfig:
    """Materialize a prior configuration from a (possibly partial) search
    assignment; parameters inactive under the assignment's type are ignored."""
    scm_type = ScmType(assignment["scm_type"])
    kwargs: dict = {
        "max_classes": int(round(float(assignment["max_classes"]))),
        "p_categorical": float(assignment["p_categorical"]),
        "p_ordered": float(assignment["p_ordered"]),
        "balanced": bool(int(assignment["balanced"])),
        "replay_small": bool(int(assignment["replay_small"])),
        "scm_type": scm_type,
        "col_bounds": col_bounds,
    }
    if scm_type in (ScmType.TREE, ScmType.MIX):
        kwargs["tree_family"] = TreeFamily(assignment["tree_family"])
        kwargs["depth_rate"] = float(assignment["depth_rate"])
        kwargs["estimators_rate"] = float(assignment["estimators_rate"])
    if scm_type is ScmType.MIX:
        kwargs["p_mlp"] = float(assignment["p_mlp"])
    return PriorConfig(**kwargs)


# -- grid --------------------------------------------------------------------


def _grid_values(p: Param, g: int) -> list:
    if p.kind == "continuous":
        lo, hi = p.bounds
        return [float(v) for v in np.linspace(lo, hi, g)]
    if p.kind == "integer":
        lo, hi = p.bounds
        vals = [int(round(v)) for v in np.linspace(lo, hi, g)]
        out = []
        for v in vals:
            if v not in out:
                out.append(v)
        return out
    if p.kind == "binary":
        return [0, 1]
    return list(p.choices)


def grid_enumerate(
    space: SearchSpace, g: int, *, resolutions: dict[str, int] | None = None
) -> list[dict]:
    """Deterministic lexicographic enumeration of the grid.

    Binary parameters always take both values; integer grids are rounded
    then deduplicated; conditional parameters expand only when active.
    ``resolutions`` overrides G per parameter name.
    """
    if g < 1:
        raise OptimizeError("G must be >= 1")
    out: list[dict] = []

    def expand(i: int, partial: dict) -> None:
        if i == len(space.params):
            out.append(dict(partial))
            return
        p = space.params[i]
        if not space.is_active(p, partial):
            expand(i + 1, partial)
            return
        g_p = resolutions.get(p.name, g) if resolutions else g
        for v in _grid_values(p, g_p):
            partial[p.name] = v
            expand(i + 1, partial)
            del partial[p.name]

    expand(0, {})
    return out


# -- trials and journal --------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    index: int
    assignment: dict
    objective: str
    value: float
    auc: float | None = None
    recall: float | None = None
    precision: float | None = None
    n_eval: int | None = None
    seed: int = 0
    group: int = -1
    wall_time: float = 0.0  # in-memory only; journals omit it for reproducibility


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


class TrialJournal:
    """Append-only trial CSV; doubles as the persisted trial table.

    Columns: index, group, objective, value, metrics, seed, then one column
    per search-space parameter. Rows are written in index order.
    """

    FIXED = ("index", "group", "objective", "value", "auc", "recall", "precision", "n_eval", "seed")

    def __init__(self, path: str | Path | None, space: SearchSpace):
        self.path = Path(path) if path is not None else None
        self.space = space
        self.loaded: dict[int, TrialRecord] = {}
        self._fh = None
        if self.path is not None and self.path.exists():
            self._load()

    def _param_names(self) -> list[str]:
        return [p.name for p in self.space.params]

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                assignment = {}
                for p in self.space.params:
                    raw = row.get(p.name, "")
                    if raw == "":
                        continue
                    if p.kind == "continuous":
                        assignment[p.name] = float(raw)
                    elif p.kind == "integer":
                        assignment[p.name] = int(raw)
                    elif p.kind == "binary":
                        assignment[p.name] = int(raw)
                    else:
                        assignment[p.name] = raw
                rec = TrialRecord(
                    index=int(row["index"]),
                    assignment=assignment,
                    objective=row["objective"],
                    value=float(row["value"]),
                    auc=float(row["auc"]) if row["auc"] else None,
                    recall=float(row["recall"]) if row["recall"] else None,
                    precision=float(row["precision"]) if row["precision"] else None,
                    n_eval=int(row["n_eval"]) if row["n_eval"] else None,
                    seed=int(row["seed"]),
                    group=int(row["group"]),
                )
                self.loaded[rec.index] = rec

    def _ensure_open(self) -> None:
        if self.path is None or self._fh is not None:
            return
        new = not self.path.exists()
        self._fh = open(self.path, "a", encoding="utf-8", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if new:
            self._writer.writerow(list(self.FIXED) + self._param_names())

    def append(self, rec: TrialRecord) -> None:
        if self.path is None:
            return
        self._ensure_open()
        row = [
            rec.index,
            rec.group,
            rec.objective,
            _fmt(rec.value),
            _fmt(rec.auc),
            _fmt(rec.recall),
            _fmt(rec.precision),
            _fmt(rec.n_eval),
            rec.seed,
        ]
        row += [_fmt(rec.assignment.get(name)) for name in self._param_names()]
        self._writer.writerow(row)
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


# -- objectives ------------------------------------------------------------------


def triple_loss(recall: float, precision: float, auc: float, mode: str = "verbatim") -> float:
    """Joint coverage + AUC loss, (1/sqrt(3)) * ||(r, p, 2|0.5 - AUC|)||.

    ``verbatim`` uses recall/precision as printed; ``complemented``
    substitutes (1 - recall) and (1 - precision). Both lie in [0, 1].
    """
    for name, v in (("recall", recall), ("precision", precision), ("auc", auc)):
        if not (0.0 <= v <= 1.0):
            raise OptimizeError(f"{name}={v} outside [0, 1]")
    if mode == "complemented":
        recall, precision = 1.0 - recall, 1.0 - precision
    elif mode != "verbatim":
        raise OptimizeError(f"unknown triple-loss mode {mode!r}")
    return math.sqrt(recall**2 + precision**2 + (2.0 * abs(0.5 - auc)) ** 2) / math.sqrt(3.0)


@dataclass
class PriorAucObjective:
    """AUC(theta): generate n_eval tables from theta, featurize with the
    full schema, bootstrap-AUC against a fixed equal-size real sample."""

    real: FeatureMatrix
    col_bounds: tuple[int, int]
    n_eval: int = 200
    gbdt: GbdtParams = field(default_factory=lambda: GRID_MODE_PARAMS)
    n_boot: int = 200
    row_sampler: Callable = field(default_factory=lambda: UniformIntSampler(50, 300))
    col_sampler: Callable | None = None  # default: replay from real features
    sample_seed: int = 0
    objective_name: str = "auc"

    def __post_init__(self) -> None:
        if self.real.n_rows < self.n_eval:
            raise OptimizeError(
                f"real features have {self.real.n_rows} rows, need >= n_eval={self.n_eval}"
            )
        if self.col_sampler is None:
            self.col_sampler = (
                sample_column_counts(self.real)
                if self.real.schema.name == "full"
                else UniformIntSampler(*self.col_bounds)
            )
        # one fixed real sample per search run
        rng = rng_from(self.sample_seed, 0)
        pick = np.sort(rng.choice(self.real.n_rows, size=self.n_eval, replace=False))
        self.real_sample = self.real.values[pick]

    def synth_features(self, assignment: dict, trial_seed: int) -> np.ndarray:
        theta = assignment_to_config(assignment, self.col_bounds)
        corpus = generate_corpus(
            theta,
            self.n_eval,
            self.col_sampler,
            self.row_sampler,
            master_seed=derive_seed(trial_seed, 0),
        )
        fm, _ = featurize_corpus(corpus, get_schema("full"))
        return fm.values

    def __call__(self, assignment: dict, trial_seed: int) -> dict:
        synth = self.synth_features(assignment, trial_seed)
        m = min(len(self.real_sample), len(synth))
        real = self.real_sample[:m]
        synth = synth[:m]
        report = bootstrap_auc(real, synth, self.gbdt, self.n_boot, seed=derive_seed(trial_seed, 1))
        return {"value": report.mean_auc, "auc": report.mean_auc, "n_eval": self.n_eval}


@dataclass
class PriorTripleObjective(PriorAucObjective):
    """Triple loss over (recall, precision, AUC); recall is real-in-synth."""

    coverage: CoverageParams = field(default_factory=CoverageParams)
    mode: str = "verbatim"
    objective_name: str = "triple"

    def __call__(self, assignment: dict, trial_seed: int) -> dict:
        synth = self.synth_features(assignment, trial_seed)
        m = min(len(self.real_sample), len(synth))
        real = self.real_sample[:m]
        synth = synth[:m]
        report = bootstrap_auc(real, synth, self.gbdt, self.n_boot, seed=derive_seed(trial_seed, 1))
        cov = coverage_pair(real, synth, self.coverage)
        value = triple_loss(cov.recall, cov.precision, report.mean_auc, mode=self.mode)
        return {
            "value": value,
            "auc": report.mean_auc,
            "recall": cov.recall,
            "precision": cov.precision,
            "n_eval": self.n_eval,
        }


def _run_objective(
    objective, assignment: dict, index: int, seed: int, group: int, name: str
) -> TrialRecord:
    try:
        out = objective(assignment, seed)
    except Exception:
        return TrialRecord(
            index=index, assignment=assignment, objective=name, value=FAILED_VALUE,
            seed=seed, group=group,
        )
    return TrialRecord(
        index=index,
        assignment=assignment,
        objective=name,
        value=float(out["value"]),
        auc=out.get("auc"),
        recall=out.get("recall"),
        precision=out.get("precision"),
        n_eval=out.get("n_eval"),
        seed=seed,
        group=group,
    )


# -- random + TPE ----------------------------------------------------------------


def sample_assignment(space: SearchSpace, rng: np.random.Generator, *, full: bool = False) -> dict:
    """Uniform draw; active parameters only unless ``full`` (GA genomes)."""
    out: dict = {}
    for p in space.params:
        if not full and not space.is_active(p, out):
            continue
        if p.kind == "continuous":
            lo, hi = p.bounds
            out[p.name] = float(rng.uniform(lo, hi))
        elif p.kind == "integer":
            lo, hi = p.bounds
            out[p.name] = int(rng.integers(int(lo), int(hi) + 1))
        elif p.kind == "binary":
            out[p.name] = int(rng.integers(0, 2))
        else:
            out[p.name] = p.choices[int(rng.integers(0, len(p.choices)))]
    return out


def random_search(
    objective, space: SearchSpace, n_trials: int, seed: int, *, name: str = "value"
) -> tuple[TrialRecord, list[TrialRecord]]:
    history = []
    for t in range(n_trials):
        assignment = sample_assignment(space, rng_from(seed, t))
        history.append(_run_objective(objective, assignment, t, derive_seed(seed, t, 1), -1, name))
    best = min(history, key=lambda r: (r.value, r.index))
    return best, history


@dataclass(frozen=True)
class TpeConfig:
    n_startup: int = 20
    n_candidates: int = 24
    gamma: float = 0.25  # good-quantile split
    n_good_cap: int = 25  # Optuna-style cap; an uncapped quartile stops refining
    bandwidth_floor_frac: float = 1e-3


class _NumericDensity:
    """Parzen mixture over one dimension: a Gaussian kernel per observed
    value plus one uniform prior component over the bounds.

    Kernel widths are adaptive (the larger gap to the neighbouring sorted
    centers, domain edges as sentinels), clipped below at width/min(100,
    n+1). Dense clusters therefore refine sharply while isolated points
    stay wide; a single global bandwidth either freezes the search or
    never concentrates.
    """

    def __init__(self, values: np.ndarray, bounds: tuple[float, float], floor_frac: float):
        self.lo, self.hi = bounds
        self.width = max(self.hi - self.lo, 1e-12)
        self.centers = np.sort(np.asarray(values, dtype=np.float64))
        n = len(self.centers)
        if n:
            padded = np.concatenate(([self.lo], self.centers, [self.hi]))
            left = self.centers - padded[:-2]
            right = padded[2:] - self.centers
            bw = np.maximum(np.maximum(left, right), 1e-12)
            bw_min = max(self.width / min(100.0, n + 1.0), floor_frac * self.width)
            self.bws = np.clip(bw, bw_min, self.width)
        else:
            self.bws = np.empty(0)

    def log_pdf(self, v: float) -> float:
        uniform = 1.0 / self.width
        n = len(self.centers)
        if n == 0:
            return math.log(uniform)
        z = (v - self.centers) / self.bws
        kernels = float(np.sum(np.exp(-0.5 * z**2) / (self.bws * math.sqrt(2 * math.pi))))
        dens = (uniform + kernels) / (n + 1)
        return math.log(max(dens, 1e-300))

    def sample(self, rng: np.random.Generator) -> float:
        n = len(self.centers)
        pick = int(rng.integers(0, n + 1))
        if pick == n:
            return float(rng.uniform(self.lo, self.hi))
        draw = self.centers[pick] + self.bws[pick] * rng.standard_normal()
        return float(np.clip(draw, self.lo, self.hi))


class _CategoricalDensity:
    """Add-one-smoothed frequency table."""

    def __init__(self, values: list, choices: tuple):
        self.choices = choices
        counts = {c: 1.0 for c in choices}
        for v in values:
            counts[v] += 1.0
        total = sum(counts.values())
        self.probs = {c: counts[c] / total for c in choices}

    def log_pdf(self, v) -> float:
        return math.log(self.probs[v])

    def sample(self, rng: np.random.Generator):
        u = rng.random()
        acc = 0.0
        for c in self.choices:
            acc += self.probs[c]
            if u < acc:
                return c
        return self.choices[-1]


def _fit_densities(space: SearchSpace, group: list[dict], cfg: TpeConfig) -> dict:
    models = {}
    for p in space.params:
        present = [a[p.name] for a in group if p.name in a]
        if p.kind in ("continuous", "integer"):
            vals = np.asarray([float(v) for v in present], dtype=np.float64)
            models[p.name] = _NumericDensity(vals, p.bounds, cfg.bandwidth_floor_frac)
        elif p.kind == "binary":
            models[p.name] = _CategoricalDensity(present, (0, 1))
        else:
            models[p.name] = _CategoricalDensity(present, p.choices)
    return models


def _sample_from(space: SearchSpace, models: dict, rng: np.random.Generator) -> dict:
    out: dict = {}
    for p in space.params:
        if not space.is_active(p, out):
            continue
        v = models[p.name].sample(rng)
        if p.kind == "integer":
            lo, hi = p.bounds
            v = int(np.clip(round(v), int(lo), int(hi)))
        out[p.name] = v
    return out


def _log_ratio(space: SearchSpace, good: dict, rest: dict, assignment: dict) -> float:
    score = 0.0
    for p in space.params:
        if p.name not in assignment:
            continue
        v = assignment[p.name]
        if p.kind == "integer":
            v = float(v)
        score += good[p.name].log_pdf(v) - rest[p.name].log_pdf(v)
    return score


def tpe_optimize(
    objective,
    space: SearchSpace,
    n_trials: int,
    seed: int,
    *,
    cfg: TpeConfig = TpeConfig(),
    journal: TrialJournal | None = None,
    name: str = "value",
    group: int = -1,
    index_offset: int = 0,
) -> tuple[TrialRecord, list[TrialRecord]]:
    """Sequential model-based search; deterministic in ``seed``.

    Trials already present in the journal are reused without calling the
    objective, which makes interrupted runs resumable.
    """
    if n_trials < cfg.n_startup:
        raise OptimizeError(f"n_trials must be >= startup count {cfg.n_startup}")
    history: list[TrialRecord] = []
    for t in range(n_trials):
        index = index_offset + t
        if journal is not None and index in journal.loaded:
            history.append(journal.loaded[index])
            continue
        rng = rng_from(seed, t)
        if t < cfg.n_startup:
            assignment = sample_assignment(space, rng)
        else:
            ranked = sorted(history, key=lambda r: (r.value, r.index))
            n_good = min(max(1, math.ceil(cfg.gamma * len(ranked))), cfg.n_good_cap)
            good_assignments = [r.assignment for r in ranked[:n_good]]
            rest_assignments = [r.assignment for r in ranked[n_good:]]
            good = _fit_densities(space, good_assignments, cfg)
            rest = _fit_densities(space, rest_assignments, cfg)
            candidates = [_sample_from(space, good, rng) for _ in range(cfg.n_candidates)]
            scores = [_log_ratio(space, good, rest, c) for c in candidates]
            assignment = candidates[int(np.argmax(scores))]
        rec = _run_objective(objective, assignment, index, derive_seed(seed, t, 1), group, name)
        history.append(rec)
        if journal is not None:
            journal.append(rec)
    best = min(history, key=lambda r: (r.value, r.index))
    return best, history


# -- genetic algorithm -------------------------------------------------------------


@dataclass(frozen=True)
class GaParams:
    population: int = 16
    generations: int = 100
    elite: int = 4
    tournament_k: int = 3
    p_mutate: float = 0.5
    continuous_noise_frac: float = 0.1
    integer_noise_divisor: float = 6.0

    def __post_init__(self) -> None:
        if self.elite >= self.population:
            raise OptimizeError("elite must be < population")
        if self.tournament_k > self.population:
            raise OptimizeError("tournament_k must be <= population")


def _mutate(space: SearchSpace, genome: dict, ga: GaParams, rng: np.random.Generator) -> dict:
    out = dict(genome)
    for p in space.params:
        if rng.random() >= ga.p_mutate:
            continue
        if p.kind == "continuous":
            lo, hi = p.bounds
            out[p.name] = float(
                np.clip(out[p.name] + rng.normal(0.0, ga.continuous_noise_frac * (hi - lo)), lo, hi)
            )
        elif p.kind == "integer":
            lo, hi = p.bounds
            moved = out[p.name] + rng.normal(0.0, (hi - lo) / ga.integer_noise_divisor)
            out[p.name] = int(np.clip(round(moved), int(lo), int(hi)))
        elif p.kind == "binary":
            out[p.name] = int(rng.integers(0, 2))
        else:
            out[p.name] = p.choices[int(rng.integers(0, len(p.choices)))]
    return out


def ga_optimize(
    objective,
    space: SearchSpace,
    ga: GaParams,
    seed: int,
    *,
    journal: TrialJournal | None = None,
    name: str = "value",
) -> tuple[TrialRecord, list[TrialRecord]]:
    """Evolve genomes over all parameters; inactive genes are latent and
    ignored by the objective. Per-generation streams derive from the seed,
    so resumed runs replay the same evolution."""
    pop = [sample_assignment(space, rng_from(seed, 0, i), full=True) for i in range(ga.population)]
    history: list[TrialRecord] = []
    best: TrialRecord | None = None

    for gen in range(ga.generations):
        values = []
        for slot, genome in enumerate(pop):
            index = gen * ga.population + slot
            if journal is not None and index in journal.loaded:
                rec = journal.loaded[index]
            else:
                rec = _run_objective(
                    objective,
                    genome,
                    index,
                    derive_seed(seed, 1, gen, slot),
                    gen,
                    name,
                )
                if journal is not None:
                    journal.append(rec)
            history.append(rec)
            values.append(rec.value)
            if best is None or (rec.value, rec.index) < (best.value, best.index):
                best = rec

        if gen == ga.generations - 1:
            break

        rng = rng_from(seed, 2, gen)
        order = sorted(range(ga.population), key=lambda i: (values[i], i))
        elites = [dict(pop[i]) for i in order[: ga.elite]]

        n_offspring = ga.population - ga.elite
        selected = []
        for _ in range(n_offspring):
            contenders = rng.integers(0, ga.population, size=ga.tournament_k)
            winner = min(contenders, key=lambda i: (values[int(i)], int(i)))
            selected.append(dict(pop[int(winner)]))

        offspring = []
        for i in range(0, n_offspring, 2):
            a = selected[i]
            b = selected[i + 1] if i + 1 < n_offspring else selected[i]
            child1, child2 = {}, {}
            for p in space.params:
                take_a = rng.random() < 0.5
                child1[p.name] = a[p.name] if take_a else b[p.name]
                take_a2 = rng.random() < 0.5
                child2[p.name] = a[p.name] if take_a2 else b[p.name]
            offspring.append(child1)
            if len(offspring) < n_offspring:
                offspring.append(child2)

        pop = elites + [_mutate(space, child, ga, rng) for child in offspring]

    return best, history


# -- prior-facing drivers ----------------------------------------------------------


def evaluate_config_auc(
    theta_assignment: dict,
    real_features: FeatureMatrix,
    n_eval: int = 200,
    seed: int = 0,
    *,
    col_bounds: tuple[int, int] | None = None,
    gbdt: GbdtParams = GRID_MODE_PARAMS,
    n_boot: int = 200,
    row_sampler: Callable | None = None,
) -> TrialRecord:
    """One grid-style evaluation of a single configuration."""
    bounds = col_bounds or _col_bounds_from(real_features)
    objective = PriorAucObjective(
        real=real_features,
        col_bounds=bounds,
        n_eval=n_eval,
        gbdt=gbdt,
        n_boot=n_boot,
        sample_seed=seed,
        **({"row_sampler": row_sampler} if row_sampler is not None else {}),
    )
    return _run_objective(objective, theta_assignment, 0, derive_seed(seed, 1, 0), -1, "auc")


def _col_bounds_from(real_features: FeatureMatrix) -> tuple[int, int]:
    if real_features.schema.name == "full":
        counts = real_features.values[:, 0].astype(int)
        return int(counts.min()), int(counts.max())
    return (2, 16)


def _grid_task(args) -> TrialRecord:
    objective, assignment, index, trial_seed, name = args
    return _run_objective(objective, assignment, index, trial_seed, -1, name)


@dataclass
class GridSearchResult:
    records: list[TrialRecord]  # ascending (value, index), failures excluded
    failures: list[TrialRecord]
    total_configs: int

    def auc_histogram(self, bins: int = 50) -> list[dict]:
        vals = np.asarray([r.value for r in self.records])
        counts, edges = np.histogram(vals, bins=bins, range=(0.0, 1.0))
        return [
            {"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]), "count": int(c)}
            for i, c in enumerate(counts)
        ]


def grid_search_auc(
    space: SearchSpace,
    g: int,
    real_features: FeatureMatrix,
    seed: int,
    *,
    n_eval: int = 200,
    gbdt: GbdtParams = GRID_MODE_PARAMS,
    n_boot: int = 200,
    row_sampler: Callable | None = None,
    resolutions: dict[str, int] | None = None,
    limit: int | None = None,
    workers: int = 1,
    journal: TrialJournal | None = None,
) -> GridSearchResult:
    """Evaluate every enumerated configuration with per-index seeds.

    Embarrassingly parallel; per-index seeds keep any worker count
    bit-identical. Finished trials found in the journal are not re-run.
    """
    configs = grid_enumerate(space, g, resolutions=resolutions)
    if limit is not None:
        configs = configs[:limit]
    bounds = _col_bounds_from(real_features)
    objective = PriorAucObjective(
        real=real_features,
        col_bounds=bounds,
        n_eval=n_eval,
        gbdt=gbdt,
        n_boot=n_boot,
        sample_seed=seed,
        **({"row_sampler": row_sampler} if row_sampler is not None else {}),
    )

    done = dict(journal.loaded) if journal is not None else {}
    tasks = [
        (objective, cfg, i, derive_seed(seed, 1, i), "auc")
        for i, cfg in enumerate(configs)
        if i not in done
    ]

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fresh = list(pool.map(_grid_task, tasks, chunksize=4))
    else:
        fresh = [_grid_task(t) for t in tasks]

    by_index = dict(done)
    for rec in fresh:
        by_index[rec.index] = rec
    ordered = [by_index[i] for i in range(len(configs))]
    if journal is not None:
        for rec in ordered:
            if rec.index not in journal.loaded:
                journal.append(rec)

    failures = [r for r in ordered if not math.isfinite(r.value)]
    ok = [r for r in ordered if math.isfinite(r.value)]
    ok.sort(key=lambda r: (r.value, r.index))
    return GridSearchResult(records=ok, failures=failures, total_configs=len(configs))


def posthoc_evaluate(
    top: Sequence[dict],
    real_features: FeatureMatrix,
    n: int = 1000,
    repeats: int = 5,
    seed: int = 0,
    *,
    gbdt: GbdtParams = GbdtParams(),
    n_boot: int = 200,
    coverage: CoverageParams = CoverageParams(),
    row_sampler: Callable | None = None,
) -> list[dict]:
    """Deeper re-evaluation of the top configurations: ``repeats`` fresh
    analyses per configuration at sample size ``n``."""
    if real_features.n_rows < n:
        raise OptimizeError(f"need >= {n} real rows, have {real_features.n_rows}")
    bounds = _col_bounds_from(real_features)
    out = []
    for ci, assignment in enumerate(top):
        rows = []
        for rep in range(repeats):
            objective = PriorTripleObjective(
                real=real_features,
                col_bounds=bounds,
                n_eval=n,
                gbdt=gbdt,
                n_boot=n_boot,
                coverage=coverage,
                sample_seed=derive_seed(seed, ci, rep, 0),
                **({"row_sampler": row_sampler} if row_sampler is not None else {}),
            )
            res = objective(assignment, derive_seed(seed, ci, rep, 1))
            rows.append(
                {
                    "config_index": ci,
                    "repeat": rep,
                    "auc": res["auc"],
                    "recall": res["recall"],
                    "precision": res["precision"],
                }
            )
        aucs = np.asarray([r["auc"] for r in rows])
        out.append(
            {
                "config_index": ci,
                "assignment": dict(assignment),
                "analyses": rows,
                "auc_mean": float(aucs.mean()),
                "auc_std": float(aucs.std()),
                "recall_mean": float(np.mean([r["recall"] for r in rows])),
                "precision_mean": float(np.mean([r["precision"] for r in rows])),
            }
        )
    return out


def pareto_front(records: Sequence[TrialRecord]) -> list[TrialRecord]:
    """Trials not dominated in (recall, precision), both maximized."""
    with_metrics = [r for r in records if r.recall is not None and r.precision is not None]
    front = []
    for r in with_metrics:
        dominated = any(
            (o.recall >= r.recall and o.precision >= r.precision)
            and (o.recall > r.recall or o.precision > r.precision)
            for o in with_metrics
        )
        if not dominated:
            front.append(r)
    return front


@dataclass
class MultiRestartResult:
    records: list[TrialRecord]
    best_per_restart: list[TrialRecord]
    best: TrialRecord
    pareto: list[TrialRecord]


def multi_restart_tpe(
    objective,
    space: SearchSpace,
    restarts: int = 50,
    trials_per: int = 20,
    seed: int = 0,
    *,
    cfg: TpeConfig | None = None,
    journal: TrialJournal | None = None,
    name: str = "triple",
) -> MultiRestartResult:
    """Independent short TPE runs with derived seeds (startup shortened to
    fit the per-restart budget)."""
    cfg = cfg or TpeConfig(n_startup=min(10, trials_per))
    records: list[TrialRecord] = []
    best_per_restart = []
    for r in range(restarts):
        best, history = tpe_optimize(
            objective,
            space,
            trials_per,
            derive_seed(seed, r),
            cfg=cfg,
            journal=journal,
            name=name,
            group=r,
            index_offset=r * trials_per,
        )
        records.extend(history)
        best_per_restart.append(best)
    best = min(records, key=lambda rec: (rec.value, rec.index))
    return MultiRestartResult(
        records=records,
        best_per_restart=best_per_restart,
        best=best,
        pareto=pareto_front(records),
    )
