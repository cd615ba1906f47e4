"""Experiment orchestration: training runs, evaluation metrics, ablations, export.

Every run writes into its own directory ``<out>/<task>/<variant>/seed_<s>/``
holding ``runlog.{csv,json}``, ``checkpoint.bin`` and, after evaluation,
``eval.{csv,json}``. Nothing is shared between runs, so seeds and variants
can be farmed out to separate processes and merged afterwards.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .config import VARIANT_ORDER, RunConfig
from .cost import FixedBounds, RunningBounds, quadrature_oracle, rotation_shape_integral
from .envs import ConfigError, Environment, TaskKind, TaskSpec
from .ppo import (
    EpisodeRecord,
    NonFiniteLoss,
    PPOConfig,
    Trainer,
    TrainStats,
    policy_forward,
    read_checkpoint,
    sample_action,
)
from .sim import Action

ALPHA_BINS = 10
SUBSET_SIZE = 4
RECENT_EPISODES = 50
# keeps training and evaluation episode seeds in disjoint ranges
_SEED_STRIDE = 1_000_003
_EVAL_OFFSET = 500_000


# ---------------------------------------------------------------------------
# seeding

def episode_seed_fn(run_seed: int, mode: str) -> Callable[[int], int]:
    """Reset seed of the ``i``-th training episode of run ``run_seed``.

    ``fixed`` replays the run seed's own layout every episode. ``varied``
    draws a fresh spawn jitter per episode while keeping the run's
    configuration bit (``run_seed & 1``).
    """
    bit = int(run_seed) & 1
    if mode == "fixed":
        return lambda i: int(run_seed)
    if mode == "varied":
        return lambda i: bit + 2 * (int(run_seed) * _SEED_STRIDE + int(i))
    raise ConfigError(f"unknown episode seed mode {mode!r}")


def eval_seed(run_seed: int, j: int, mode: str) -> int:
    if mode == "fixed":
        return int(run_seed)
    return (int(run_seed) & 1) + 2 * (int(run_seed) * _SEED_STRIDE + _EVAL_OFFSET + int(j))


# ---------------------------------------------------------------------------
# run log

@dataclass
class RunLog:
    task: str
    variant: str
    seed: int
    stats: list = field(default_factory=list)
    episodes: list = field(default_factory=list)
    aborted: Optional[dict] = None

    def __post_init__(self):
        steps = [s.env_steps for s in self.stats]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("RunLog env-step series must be strictly increasing")

    def final_success_rate(self, window: int = RECENT_EPISODES) -> float:
        recent = self.episodes[-window:]
        return sum(e.success for e in recent) / len(recent) if recent else 0.0

    def success_energy(self) -> list:
        return [e.episode_work for e in self.episodes if e.success]

    def to_dict(self) -> dict:
        return {
            "task": self.task, "variant": self.variant, "seed": self.seed,
            "stats": [s.to_dict() for s in self.stats],
            "episodes": [e.to_dict() for e in self.episodes],
            "aborted": self.aborted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunLog":
        return cls(d["task"], d["variant"], int(d["seed"]),
                   [TrainStats(**s) for s in d["stats"]],
                   [EpisodeRecord(**e) for e in d["episodes"]],
                   d.get("aborted"))


def run_dir(run: RunConfig, seed: int) -> Path:
    return Path(run.out) / run.task.task_kind.value / run.variant / f"seed_{seed}"


# ---------------------------------------------------------------------------
# training

def make_trainer(run: RunConfig, seed: int, kernels=None) -> Trainer:
    env = Environment(run.task, kernels=kernels)
    cfg = replace(run.ppo, rng_seed=int(seed))
    return Trainer(env, cfg, episode_seed_fn(seed, run.episode_seeds),
                   configuration=int(seed) & 1, recent_window=RECENT_EPISODES)


def checkpoint_meta(run: RunConfig, seed: int) -> dict:
    t = run.task
    return {"task": t.task_kind.value, "variant": run.variant, "seed": int(seed),
            "obs_dim": t.obs_dim, "episode_seeds": run.episode_seeds,
            "cost_source": t.reward.cost_source.value, "bound_mode": t.reward.bound_mode.value}


def save_checkpoint(trainer: Trainer, path, meta: dict) -> None:
    from .ppo import write_checkpoint
    header, tensors = trainer.state()
    header["meta"] = meta
    write_checkpoint(path, header, tensors)


def train_seed(run: RunConfig, seed: int, total_env_steps: Optional[int] = None,
               resume_from=None, write: bool = True, kernels=None) -> RunLog:
    """Train one seed; optionally continue from a checkpoint file."""
    trainer = make_trainer(run, seed, kernels)
    if resume_from is not None:
        header, tensors = read_checkpoint(resume_from)
        _check_compatible(header.get("meta", {}), run.task, run.variant)
        trainer.load_state(header, tensors)
    log = RunLog(run.task.task_kind.value, run.variant, int(seed))
    every = max(1, run.log_every)
    n_updates = [len(trainer.stats)]

    def keep(tr, st):
        n_updates[0] += 1

    try:
        trainer.train(total_env_steps if total_env_steps is not None else run.ppo.total_env_steps, keep)
    except NonFiniteLoss as exc:
        detail = {k: (v if not isinstance(v, float) or math.isfinite(v) else repr(v))
                  for k, v in exc.diagnostics.items()}
        log.aborted = {"error": str(exc), "env_steps": trainer.env_steps, **detail}
    log.stats = [s for k, s in enumerate(trainer.stats) if (k + 1) % every == 0 or k == len(trainer.stats) - 1]
    log.episodes = list(trainer.episodes)
    if write:
        d = run_dir(run, seed)
        try:
            d.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create run directory {d}: {exc}") from exc
        export_metrics(log, d / "runlog.csv", "csv")
        export_metrics(log, d / "runlog.json", "json")
        save_checkpoint(trainer, d / "checkpoint.bin", checkpoint_meta(run, seed))
    return log


def train(run: RunConfig, total_env_steps: Optional[int] = None, write: bool = True) -> list:
    """One RunLog (and checkpoint, when ``write``) per seed of ``run``."""
    return [train_seed(run, s, total_env_steps, write=write) for s in run.seeds]


# ---------------------------------------------------------------------------
# trajectory metrics

def alpha_ratio(pushed_segments: Sequence, low_mu: float) -> Optional[float]:
    """Fraction of pushed box path lying on the low-friction band.

    ``pushed_segments`` holds ``(mu, length)`` pairs, one per pushing step,
    with ``mu`` sampled under the box centroid. Returns None when nothing
    was pushed.
    """
    total = math.fsum(dx for _, dx in pushed_segments)
    if total <= 0.0:
        return None
    low = math.fsum(dx for mu, dx in pushed_segments if mu == low_mu)
    return min(1.0, max(0.0, low / total))


def band_lengths(pushed_segments: Sequence) -> dict:
    out = {}
    for mu, dx in pushed_segments:
        out[mu] = out.get(mu, 0.0) + dx
    return out


def chosen_box(exit_steps: dict, exit_margin: Optional[dict] = None) -> Optional[str]:
    """Id of the box that left the circle first (larger overshoot breaks
    same-step ties, then the id); None when no box left."""
    if not exit_steps:
        return None
    margin = exit_margin or {}
    return min(exit_steps, key=lambda k: (exit_steps[k], -margin.get(k, 0.0), k))


def alpha_histogram(alphas: Sequence[float], bins: int = ALPHA_BINS):
    """``(edges, counts)`` over ``bins`` uniform bins on [0, 1]; 1.0 lands in the last bin."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(np.asarray(list(alphas), dtype=float), bins=edges)
    return [float(e) for e in edges], [int(c) for c in counts]


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalEpisode:
    index: int
    seed: int
    configuration: int
    success: bool
    collided: bool
    length: int
    episode_work: float
    alpha: Optional[float] = None
    chosen: Optional[str] = None
    chosen_heavy: Optional[bool] = None


@dataclass
class EvalReport:
    task: str
    variant: str
    n_episodes: int
    deterministic: bool
    episodes: list = field(default_factory=list)
    configuration_seed: Optional[int] = None

    @property
    def successes(self) -> int:
        return sum(e.success for e in self.episodes)

    @property
    def success_rate(self) -> float:
        return self.successes / self.n_episodes if self.n_episodes else 0.0

    @property
    def mean_success_work(self) -> Optional[float]:
        w = [e.episode_work for e in self.episodes if e.success]
        return float(np.mean(w)) if w else None

    @property
    def alphas(self) -> list:
        return [e.alpha for e in self.episodes if e.alpha is not None]

    @property
    def mean_alpha(self) -> Optional[float]:
        a = self.alphas
        return float(np.mean(a)) if a else None

    def histogram(self):
        return alpha_histogram(self.alphas)

    @property
    def heavy_fraction(self) -> Optional[float]:
        picks = [e.chosen_heavy for e in self.episodes if e.success and e.chosen_heavy is not None]
        return sum(picks) / len(picks) if picks else None

    @property
    def chose_heavy(self) -> Optional[bool]:
        """Majority label over successful episodes; None without successes."""
        f = self.heavy_fraction
        return None if f is None else f > 0.5

    def to_dict(self) -> dict:
        return {"task": self.task, "variant": self.variant, "n_episodes": self.n_episodes,
                "deterministic": self.deterministic, "configuration_seed": self.configuration_seed,
                "episodes": [asdict(e) for e in self.episodes]}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["task"], d["variant"], int(d["n_episodes"]), bool(d["deterministic"]),
                   [EvalEpisode(**e) for e in d["episodes"]], d.get("configuration_seed"))


def policy_from_params(params, deterministic: bool, rng: np.random.Generator):
    def act(obs, env):
        logits, _ = policy_forward(params, obs)
        if deterministic:
            return int(np.argmax(logits))
        return sample_action(logits, rng)[0]
    return act


def evaluate_policy(policy, spec: TaskSpec, seeds: Sequence[int], configuration: Optional[int] = None,
                    step_bounds=None, episode_bounds=None, variant: str = "", deterministic: bool = False,
                    configuration_seed: Optional[int] = None, kernels=None) -> EvalReport:
    """Run ``policy(obs, env) -> action`` for one episode per seed with frozen bounds."""
    sb = _frozen(step_bounds)
    eb = _frozen(episode_bounds)
    env = Environment(spec, sb, eb, training=False, kernels=kernels)
    report = EvalReport(spec.task_kind.value, variant, len(seeds), deterministic,
                        configuration_seed=configuration_seed)
    heavy_id = None
    for j, s in enumerate(seeds):
        obs = env.reset(int(s), configuration)
        if heavy_id is None:
            masses = dict(zip(env.trace.box_ids, env.trace.box_masses))
            heavy_id = max(masses, key=lambda k: (masses[k], k))
        done = False
        while not done:
            tr = env.step(policy(obs, env))
            obs, done = tr.observation, tr.done
        t = env.trace
        ep = EvalEpisode(j, int(s), t.configuration, t.success, t.collided, t.length, t.episode_work)
        if spec.task_kind is TaskKind.VARIABLE_FRICTION:
            ep.alpha = alpha_ratio(t.pushed_segments, t.low_mu)
        elif t.success:
            ep.chosen = chosen_box(t.exit_steps, t.exit_margin)
            ep.chosen_heavy = None if ep.chosen is None else ep.chosen == heavy_id
        report.episodes.append(ep)
    return report


def _frozen(bounds):
    if bounds is None or isinstance(bounds, FixedBounds):
        return bounds
    return bounds.copy(frozen=True)


def _check_compatible(meta: dict, spec: TaskSpec, variant: Optional[str] = None) -> None:
    if not meta:
        return
    if meta.get("task") != spec.task_kind.value or meta.get("obs_dim") != spec.obs_dim:
        raise ConfigError(
            f"checkpoint was trained on task {meta.get('task')!r} (obs length {meta.get('obs_dim')}), "
            f"spec is {spec.task_kind.value!r} (obs length {spec.obs_dim})")
    if variant is not None and meta.get("variant") not in (None, variant):
        raise ConfigError(f"checkpoint variant {meta.get('variant')!r} != {variant!r}")


def _bounds_from_state(state: dict):
    if state["kind"] == "fixed":
        return FixedBounds(state["min_seen"], state["max_seen"])
    return RunningBounds(state["min_seen"], state["max_seen"], state["count"], frozen=True)


def evaluate(checkpoint, spec: TaskSpec, n_episodes: int, deterministic_policy: bool = False,
             seed: Optional[int] = None, episode_seeds: Optional[str] = None) -> EvalReport:
    """Evaluate a saved policy on its own configuration.

    Episodes use seeds disjoint from training (``varied``) or the run seed
    itself (``fixed``); the bounds stored in the checkpoint are frozen.
    """
    from .ppo import PolicyParams
    header, tensors = read_checkpoint(checkpoint)
    meta = header.get("meta", {})
    _check_compatible(meta, spec)
    cfg = header["ppo_config"]
    params = PolicyParams(header["obs_dim"], tuple(cfg["hidden_sizes"]))
    for name, shape in params.shapes:
        params[name][...] = tensors[name]
    run_seed = int(meta.get("seed", cfg["rng_seed"]) if seed is None else seed)
    mode = episode_seeds or meta.get("episode_seeds", "varied")
    rng = np.random.default_rng([run_seed, 0xE7A1])
    seeds = [eval_seed(run_seed, j, mode) for j in range(int(n_episodes))]
    return evaluate_policy(
        policy_from_params(params, deterministic_policy, rng), spec, seeds,
        configuration=run_seed & 1,
        step_bounds=_bounds_from_state(header["step_bounds"]),
        episode_bounds=_bounds_from_state(header["episode_bounds"]),
        variant=meta.get("variant", ""), deterministic=deterministic_policy,
        configuration_seed=run_seed,
    )


def heavy_choice_summary(reports: Sequence[EvalReport], subset: int = SUBSET_SIZE) -> dict:
    """Heavy-choice count over all configurations and per consecutive subset.

    A configuration counts as heavy when most of its successful evaluation
    episodes pushed the heavy box out; configurations without successes
    are listed as undecided.
    """
    labels = [r.chose_heavy for r in reports]
    chunks = [labels[i:i + subset] for i in range(0, len(labels), subset)]
    return {
        "n_configurations": len(labels),
        "heavy_count": sum(1 for x in labels if x),
        "undecided": sum(1 for x in labels if x is None),
        "labels": labels,
        "subset_size": subset,
        "subset_counts": [sum(1 for x in c if x) for c in chunks],
        "subset_sizes": [len(c) for c in chunks],
    }


# ---------------------------------------------------------------------------
# ablations

@dataclass
class VariantResult:
    variant: str
    logs: list
    reports: list

    def final_success_rate(self) -> float:
        return float(np.mean([l.final_success_rate() for l in self.logs]))

    def eval_success_rate(self) -> float:
        n = sum(r.n_episodes for r in self.reports)
        return sum(r.successes for r in self.reports) / n if n else 0.0

    def eval_success_work(self) -> Optional[float]:
        w = [e.episode_work for r in self.reports for e in r.episodes if e.success]
        return float(np.mean(w)) if w else None

    def mean_alpha(self) -> Optional[float]:
        a = [x for r in self.reports for x in r.alphas]
        return float(np.mean(a)) if a else None

    def heavy(self) -> dict:
        return heavy_choice_summary(self.reports)


@dataclass
class AblationResult:
    task: str
    env_steps: list
    variants: dict

    def series(self) -> dict:
        """Per-variant success-rate and successful-energy curves, averaged
        over seeds on the shared env-step grid."""
        out = {}
        for name, vr in self.variants.items():
            sr, en = [], []
            for k in range(len(self.env_steps)):
                rows = [l.stats[k] for l in vr.logs if k < len(l.stats)]
                sr.append(float(np.mean([s.success_rate for s in rows])) if rows else None)
                e = [s.mean_success_energy for s in rows if s.mean_success_energy > 0]
                en.append(float(np.mean(e)) if e else None)
            out[name] = {"success_rate": sr, "mean_success_energy": en}
        return out

    def table(self) -> list:
        rows = []
        nocost = self.variants.get("nocost")
        for name, vr in self.variants.items():
            row = {
                "task": self.task,
                "variant": name,
                "train_success_final50": vr.final_success_rate(),
                "eval_success_rate": vr.eval_success_rate(),
                "eval_success_work": vr.eval_success_work(),
            }
            if self.task == TaskKind.VARIABLE_FRICTION.value:
                row["mean_alpha"] = vr.mean_alpha()
            else:
                h = vr.heavy()
                row["heavy_count"] = h["heavy_count"]
                row["heavy_subset_counts"] = " ".join(str(c) for c in h["subset_counts"])
            if nocost is not None and name != "nocost":
                row.update(_versus_nocost(self.task, vr, nocost))
            rows.append(row)
        return rows


def _versus_nocost(task: str, vr: VariantResult, nocost: VariantResult) -> dict:
    """Pass/fail of the preference, parity and energy checks against NoCost."""
    out = {"parity_ok": vr.final_success_rate() >= 0.9 and nocost.final_success_rate() >= 0.9}
    e, e0 = vr.eval_success_work(), nocost.eval_success_work()
    out["energy_drop"] = None if (e is None or not e0) else 1.0 - e / e0
    out["energy_ok"] = out["energy_drop"] is not None and out["energy_drop"] >= 0.15
    if task == TaskKind.VARIABLE_FRICTION.value:
        a, a0 = vr.mean_alpha(), nocost.mean_alpha()
        out["alpha_gain"] = None if a is None or a0 is None else a - a0
        out["preference_ok"] = out["alpha_gain"] is not None and out["alpha_gain"] >= 0.15
    else:
        out["preference_ok"] = vr.heavy()["heavy_count"] <= 2
    return out


def ablation_suite(base: RunConfig, variants: Sequence[str] = VARIANT_ORDER,
                   total_env_steps: Optional[int] = None, eval_episodes: Optional[int] = None,
                   write: bool = True, progress=None) -> AblationResult:
    """Train and evaluate every variant on the same seeds."""
    results = {}
    grid = None
    n_eval = base.eval_episodes if eval_episodes is None else eval_episodes
    for v in variants:
        run = base.for_variant(v)
        logs, reports = [], []
        for s in run.seeds:
            log = train_seed(run, s, total_env_steps, write=write)
            logs.append(log)
            ck = run_dir(run, s) / "checkpoint.bin"
            if write and log.aborted is None:
                rep = evaluate(ck, run.task, n_eval)
                export_metrics(rep, run_dir(run, s) / "eval.csv", "csv")
                export_metrics(rep, run_dir(run, s) / "eval.json", "json")
                reports.append(rep)
            if progress is not None:
                progress(v, s, log, reports[-1] if reports else None)
        results[v] = VariantResult(v, logs, reports)
        steps = [st.env_steps for st in logs[0].stats] if logs else []
        grid = steps if grid is None or len(steps) < len(grid) else grid
    return AblationResult(base.task.task_kind.value, grid or [], results)


# ---------------------------------------------------------------------------
# export / import

_FORMAT_TAG = "# pushcost"


def _table_for(obj):
    """``(kind, meta, columns, rows)`` for anything export_metrics accepts."""
    if isinstance(obj, RunLog):
        scols = [f.name for f in fields(TrainStats)]
        ecols = [f.name for f in fields(EpisodeRecord)]
        cols = ["record"] + scols + [c for c in ecols if c not in scols]
        rows = [{"record": "stats", **s.to_dict()} for s in obj.stats]
        rows += [{"record": "episode", **e.to_dict()} for e in obj.episodes]
        meta = {"task": obj.task, "variant": obj.variant, "seed": obj.seed, "aborted": obj.aborted}
        return "runlog", meta, cols, rows
    if isinstance(obj, EvalReport):
        cols = [f.name for f in fields(EvalEpisode)]
        meta = {k: v for k, v in obj.to_dict().items() if k != "episodes"}
        return "eval", meta, cols, [asdict(e) for e in obj.episodes]
    if isinstance(obj, AlphaHistogram):
        cols = ["bin_lo", "bin_hi", "count"]
        rows = [{"bin_lo": lo, "bin_hi": hi, "count": c}
                for lo, hi, c in zip(obj.edges[:-1], obj.edges[1:], obj.counts)]
        return "histogram", {"n": sum(obj.counts)}, cols, rows
    if isinstance(obj, AblationTable):
        cols = []
        for r in obj.rows:
            cols += [k for k in r if k not in cols]
        return "ablation", {"task": obj.task}, cols, [dict(r) for r in obj.rows]
    raise TypeError(f"cannot export {type(obj).__name__}")


@dataclass
class AlphaHistogram:
    edges: list
    counts: list

    @classmethod
    def of(cls, report_or_alphas) -> "AlphaHistogram":
        a = report_or_alphas.alphas if isinstance(report_or_alphas, EvalReport) else report_or_alphas
        return cls(*alpha_histogram(a))


@dataclass
class AblationTable:
    task: str
    rows: list


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def export_metrics(obj, path, fmt: str = "csv") -> Path:
    """Write a RunLog, EvalReport, AlphaHistogram or AblationTable.

    CSV files start with a ``# pushcost <kind>`` line carrying the metadata
    as JSON, then a header row and one row per record. JSON files are a
    single document. Both formats read back exactly via ``import_metrics``.
    """
    path = Path(path)
    kind, meta, cols, rows = _table_for(obj)
    try:
        if fmt == "json":
            doc = {"kind": kind, "meta": meta, "columns": cols, "rows": rows}
            path.write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n")
        elif fmt == "csv":
            buf = io.StringIO()
            buf.write(f"{_FORMAT_TAG} {kind} {json.dumps(meta, allow_nan=False)}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([_cell(r.get(c)) for c in cols])
            path.write_text(buf.getvalue())
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _parse(value: str, typ):
    if value == "":
        return None
    if typ is bool:
        return value == "true"
    if typ is int:
        return int(value)
    if typ is float:
        return float(value)
    return value


def _field_types(cls) -> dict:
    hints = {"int": int, "float": float, "bool": bool, "str": str,
             "Optional[float]": float, "Optional[str]": str, "Optional[bool]": bool, "Optional[int]": int}
    return {f.name: hints.get(f.type if isinstance(f.type, str) else f.type.__name__, str) for f in fields(cls)}


def _guess(value: str):
    if value == "":
        return None
    if value in ("true", "false"):
        return value == "true"
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def import_metrics(path):
    """Read back a file written by ``export_metrics``."""
    path = Path(path)
    text = path.read_text()
    if text.startswith("{"):
        doc = json.loads(text)
        kind, meta, rows = doc["kind"], doc["meta"], doc["rows"]
    else:
        first, _, rest = text.partition("\n")
        if not first.startswith(_FORMAT_TAG):
            raise ValueError(f"{path}: not a pushcost metrics file")
        kind, _, meta_text = first[len(_FORMAT_TAG) + 1:].partition(" ")
        meta = json.loads(meta_text)
        reader = csv.DictReader(io.StringIO(rest))
        raw = list(reader)
        if kind == "runlog":
            st, et = _field_types(TrainStats), _field_types(EpisodeRecord)
            rows = []
            for r in raw:
                types = st if r["record"] == "stats" else et
                rows.append({"record": r["record"],
                             **{k: _parse(r[k], types[k]) for k in types}})
        elif kind == "eval":
            types = _field_types(EvalEpisode)
            rows = [{k: _parse(r[k], types[k]) for k in types} for r in raw]
        elif kind == "histogram":
            rows = [{"bin_lo": float(r["bin_lo"]), "bin_hi": float(r["bin_hi"]), "count": int(r["count"])}
                    for r in raw]
        else:
            rows = [{k: _guess(v) for k, v in r.items()} for r in raw]
    return _rebuild(kind, meta, rows)


def _rebuild(kind, meta, rows):
    if kind == "runlog":
        sk = {f.name for f in fields(TrainStats)}
        ek = {f.name for f in fields(EpisodeRecord)}
        stats = [TrainStats(**{k: r[k] for k in sk}) for r in rows if r["record"] == "stats"]
        eps = [EpisodeRecord(**{k: r[k] for k in ek}) for r in rows if r["record"] == "episode"]
        return RunLog(meta["task"], meta["variant"], int(meta["seed"]), stats, eps, meta.get("aborted"))
    if kind == "eval":
        return EvalReport.from_dict({**meta, "episodes": rows})
    if kind == "histogram":
        edges = [r["bin_lo"] for r in rows] + ([rows[-1]["bin_hi"]] if rows else [])
        return AlphaHistogram(edges, [r["count"] for r in rows])
    if kind == "ablation":
        return AblationTable(meta["task"], rows)
    raise ValueError(f"unknown metrics kind {kind!r}")


# ---------------------------------------------------------------------------
# oracle sweep

def oracle_sweep(n: int = 200, seed: int = 0, resolution: int = 4096):
    """Closed form vs quadrature over random patches (sides in [0.01, 10] m,
    aspect at most 100). Returns rows of ``(X, Y, closed, quadrature, rel_err)``."""
    rng = np.random.default_rng(seed)
    rows = []
    while len(rows) < n:
        X, Y = rng.uniform(0.01, 10.0, size=2)
        if max(X, Y) / min(X, Y) > 100.0:
            continue
        c = rotation_shape_integral(X, Y)
        q = quadrature_oracle(X, Y, resolution)
        rows.append((float(X), float(Y), c, q, abs(c - q) / q))
    return rows


# ---------------------------------------------------------------------------
# scripted controllers (used by tests and sanity checks)

def push_target_policy(target_id: str, heading_tol: float = 0.08):
    """Turn toward the target box centroid, then drive straight at it."""
    def act(obs, env):
        w = env.current_world
        b = w.box(target_id)
        r = w.robot.pose
        want = math.atan2(b.pose.y - r.y, b.pose.x - r.x)
        err = math.atan2(math.sin(want - r.yaw), math.cos(want - r.yaw))
        if abs(err) <= heading_tol:
            return Action.FORWARD
        # TURN_RIGHT spins counter-clockwise with the wheel convention in sim.py
        return Action.TURN_RIGHT if err > 0 else Action.TURN_LEFT
    return act
