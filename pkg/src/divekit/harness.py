"""Benchmark harness: metrics, data collection, training, single-dive and
branch-and-bound evaluation, ensemble tuning, and the verification suites.

All table outputs are CSV files with a ``#``-prefixed metadata header
(seeds, package version, config hash) and deterministically ordered rows,
so identical seeds reproduce byte-identical files.  The progress clock is
the deterministic LP-iteration tick count from the solver, not wall time.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__, simplex
from .bnb import (
    OPTIMAL_PROVEN,
    SolveConfig,
    branch_and_bound,
    enumerate_optima,
)
from .diving import DEFAULT_DEPTH, dive, make_scorer
from .graphnet import (
    GraphNet,
    TrainExample,
    TrainingConfig,
    default_temperature,
    domain_bits,
    extract_graph,
    load_model,
    save_model,
    target_distribution,
    train_model,
)
from .instances import (
    FAMILIES,
    GeneratorConfig,
    INT_TOL,
    generate,
    read_instance,
    to_standard_form,
    write_instance,
)
from .l2dive import verify_tightening_optimality
from .oracles import enumerate_basic_solutions
from .simplex import check_complementary_slackness, dual_objective, solve_lp

SYMMETRIC_FAMILIES = ("set-cover", "indep-set")
FAILED_GAP = np.inf


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def primal_dual_gap(primal: float, dual: float) -> float:
    """Relative gap between an upper and a lower bound; the sentinel value 1
    covers missing/infinite bounds and bounds of differing sign."""
    if not np.isfinite(primal) or not np.isfinite(dual):
        return 1.0
    prod = primal * dual
    if not (0.0 < prod < np.inf):
        return 1.0
    return (primal - dual) / max(abs(primal), abs(dual))


def primal_dual_integral(points, horizon: float) -> float:
    """Integral of the piecewise-constant gap implied by trace ``points``
    (sorted (t, primal, dual) triples) from 0 to ``horizon``; before the
    first event the gap is 1."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    total = 0.0
    prev_t = 0.0
    gap = 1.0
    for t, p, d in points:
        t = float(t)
        if t >= horizon:
            break
        if t > prev_t:
            total += gap * (t - prev_t)
            prev_t = t
        gap = primal_dual_gap(p, d)
    total += gap * (horizon - prev_t)
    return total


def primal_gap(primal: float, reference: float) -> float:
    """Unnormalized difference to the reference objective."""
    return primal - reference


# ---------------------------------------------------------------------------
# deterministic file output
# ---------------------------------------------------------------------------

def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, meta: dict, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# divekit {__version__}\n")
        for key in sorted(meta):
            fh.write(f"# {key}: {meta[key]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv_rows(path):
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    parsed = list(csv.reader(rows))
    return parsed[0], parsed[1:]


# ---------------------------------------------------------------------------
# instance generation
# ---------------------------------------------------------------------------

def generate_batch(family: str, count: int, seed: int, out_dir,
                   params: dict | None = None) -> dict:
    """Write ``count`` instances with consecutive seeds plus a manifest."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    out_dir = Path(out_dir)
    (out_dir / "instances").mkdir(parents=True, exist_ok=True)
    params = dict(params or {})
    names = []
    for k in range(count):
        cfg = GeneratorConfig(family=family, seed=seed + k, **params)
        inst = generate(cfg)
        fname = f"{inst.name}.json"
        write_instance(inst, out_dir / "instances" / fname)
        names.append(fname)
    manifest = {
        "family": family,
        "seed": seed,
        "count": count,
        "params": params,
        "instances": names,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True)
        fh.write("\n")
    return manifest


def instance_paths(dir_or_manifest) -> list[Path]:
    p = Path(dir_or_manifest)
    if p.is_dir():
        mf = p / "manifest.json"
        if mf.exists():
            manifest = json.loads(mf.read_text())
            return [p / "instances" / name for name in manifest["instances"]]
        return sorted(p.glob("*.json"))
    raise FileNotFoundError(p)


# ---------------------------------------------------------------------------
# data collection
# ---------------------------------------------------------------------------

@dataclass
class CollectConfig:
    node_limit: int = 1200
    tick_limit: float | None = None
    time_limit: float | None = None
    pool_capacity: int = 10
    augment: str = "auto"  # auto | pool | top1 | enumerate
    enum_node_limit: int = 20_000
    seed: int = 0
    jobs: int = 1


def _family_of(name: str) -> str:
    for fam in FAMILIES:
        if name.startswith(fam):
            return fam
    return "unknown"


def _collect_one(task):
    path, cfg = task
    inst = read_instance(path)
    family = _family_of(inst.name)
    lp = to_standard_form(inst)
    root = solve_lp(lp)
    if root.status != simplex.OPTIMAL:
        return {"instance": str(path), "skip": f"root_{root.status}"}
    x = root.x[: inst.n]
    xi = x[inst.integer_index]
    if xi.size == 0 or np.max(np.abs(xi - np.round(xi))) <= INT_TOL:
        return {"instance": str(path), "skip": "solved_at_root"}
    res = branch_and_bound(inst, SolveConfig(
        node_limit=cfg.node_limit, tick_limit=cfg.tick_limit,
        time_limit=cfg.time_limit, pool_capacity=cfg.pool_capacity,
        seed=cfg.seed,
    ))
    if len(res.pool) == 0:
        return {"instance": str(path), "skip": "no_solution"}
    symmetric = family in SYMMETRIC_FAMILIES
    mode = cfg.augment
    if mode == "auto":
        mode = "pool" if symmetric else "top1"
    entries = []
    if mode == "enumerate" and res.status == OPTIMAL_PROVEN:
        enum = enumerate_optima(inst, SolveConfig(
            node_limit=cfg.enum_node_limit, pool_capacity=cfg.pool_capacity,
        ))
        if enum.assignments:
            div = inst.divable_index
            for key in enum.assignments:
                x_full = np.zeros(inst.n)
                x_full[div] = key
                if inst.is_feasible(x_full):
                    entries.append((x_full, float(inst.c @ x_full)))
    if not entries:
        sols = res.pool.solutions()
        entries = sols if mode in ("pool", "enumerate") else sols[:1]
    z_ref = min(z for _, z in entries)
    return {
        "instance": str(path),
        "name": inst.name,
        "family": family,
        "status": res.status,
        "z_ref": z_ref,
        "bound": float(res.bound),
        "nodes": res.nodes,
        "ticks": res.ticks,
        "pool": [{"z": float(z), "x": [float(v) for v in sx]} for sx, z in entries],
    }


def _pmap(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = get_context("fork")
    with ctx.Pool(processes=jobs) as pool:
        return pool.map(fn, tasks, chunksize=1)


def collect_corpus(instances_dir, out_dir, cfg: CollectConfig) -> dict:
    """Solve every instance under the collection budget and store its
    solution pool; instances already integral at the root are dropped."""
    paths = instance_paths(instances_dir)
    out_dir = Path(out_dir)
    (out_dir / "pools").mkdir(parents=True, exist_ok=True)
    results = _pmap(_collect_one, [(p, cfg) for p in paths], cfg.jobs)
    results.sort(key=lambda r: r["instance"])
    entries = []
    skipped = []
    for r in results:
        if "skip" in r:
            skipped.append({"instance": r["instance"], "reason": r["skip"]})
            continue
        pool_name = f"{r['name']}.pool.json"
        with open(out_dir / "pools" / pool_name, "w") as fh:
            json.dump({
                "name": r["name"], "z_ref": r["z_ref"], "status": r["status"],
                "bound": r["bound"], "entries": r["pool"],
            }, fh, sort_keys=True)
            fh.write("\n")
        entries.append({
            "instance": os.path.relpath(r["instance"], out_dir),
            "pool": f"pools/{pool_name}",
            "name": r["name"],
            "family": r["family"],
            "status": r["status"],
            "z_ref": r["z_ref"],
            "nodes": r["nodes"],
            "ticks": r["ticks"],
        })
    manifest = {
        "config": asdict(cfg),
        "config_hash": config_hash(asdict(cfg)),
        "entries": entries,
        "skipped": skipped,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return manifest


def load_corpus(corpus_dir):
    corpus_dir = Path(corpus_dir)
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    out = []
    for e in manifest["entries"]:
        out.append({
            "instance_path": (corpus_dir / e["instance"]).resolve(),
            "pool_path": corpus_dir / e["pool"],
            "name": e["name"],
            "family": e["family"],
            "z_ref": float(e["z_ref"]),
        })
    return out


def load_pool_solutions(pool_path):
    doc = json.loads(Path(pool_path).read_text())
    return [(np.asarray(e["x"], dtype=np.float64), float(e["z"])) for e in doc["entries"]]


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _example_task(entry):
    inst = read_instance(entry["instance_path"])
    lp = to_standard_form(inst)
    root = solve_lp(lp)
    if root.status != simplex.OPTIMAL:
        return None
    graph = extract_graph(inst, root)
    sols = load_pool_solutions(entry["pool_path"])
    zs = [z for _, z in sols]
    spread = max(zs) - min(zs) if zs else 0.0
    bits = int(max((domain_bits(inst.lb[j], inst.ub[j]) for j in inst.divable_index),
                   default=1))
    return entry["name"], inst, graph, sols, spread, bits


def build_examples(corpus_entries, temperature=None, n_bits=None, jobs=1):
    """Graphs plus target distributions for a corpus; the temperature
    defaults to the scale-aware corpus value."""
    raw = _pmap(_example_task, list(corpus_entries), jobs)
    raw = [r for r in raw if r is not None]
    raw.sort(key=lambda r: r[0])
    spreads = [r[4] for r in raw]
    tau = temperature if temperature is not None else default_temperature(spreads)
    bits = n_bits if n_bits is not None else max((r[5] for r in raw), default=1)
    examples = []
    for name, inst, graph, sols, _, _ in raw:
        target = target_distribution(sols, inst, tau, n_bits=bits)
        examples.append(TrainExample(graph=graph, target=target))
    return examples, tau, bits


def train_from_corpus(corpus_dir, model_path, cfg: TrainingConfig | None = None,
                      val_fraction: float = 0.2, hidden: int = 64,
                      jobs: int = 1) -> dict:
    """Train a fresh model on a collected corpus; writes the checkpoint and
    a loss-history CSV next to it."""
    cfg = cfg or TrainingConfig()
    entries = load_corpus(corpus_dir)
    examples, tau, bits = build_examples(entries, temperature=cfg.temperature, jobs=jobs)
    if not examples:
        raise RuntimeError("corpus has no usable entries")
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(examples))
    n_val = int(round(val_fraction * len(examples)))
    val = [examples[i] for i in order[:n_val]]
    tr = [examples[i] for i in order[n_val:]] or examples
    model = GraphNet(hidden=hidden, n_bits=bits, seed=cfg.seed)
    result = train_model(model, tr, val or None, cfg)
    save_model(model, model_path)
    hist_path = Path(model_path).with_suffix(".history.csv")
    meta = {
        "command": "train",
        "seed": cfg.seed,
        "temperature": tau,
        "n_bits": bits,
        "examples": len(examples),
        "config_hash": config_hash({"cfg": asdict(cfg), "val_fraction": val_fraction,
                                    "hidden": hidden}),
    }
    write_csv(hist_path, meta, ("epoch", "train_loss", "val_loss"), result.history)
    return {
        "model": str(model_path),
        "history": str(hist_path),
        "best_epoch": result.best_epoch,
        "best_val": result.best_val,
        "temperature": tau,
        "n_bits": bits,
        "n_examples": len(examples),
        "loss_first": result.history[0][1],
        "loss_best": result.best_val,
    }


# ---------------------------------------------------------------------------
# single-dive evaluation
# ---------------------------------------------------------------------------

@dataclass
class DiveEvalConfig:
    divers: tuple = ("fractional", "coefficient", "linesearch", "vectorlength",
                     "pseudocost", "lower", "upper", "random")
    d_max: int = DEFAULT_DEPTH
    lp_iter_limit: int | None = None
    seed: int = 0
    jobs: int = 1
    model_path: str | None = None


def _eval_dive_one(task):
    entry, cfg = task
    inst = read_instance(entry["instance_path"])
    lp = to_standard_form(inst)
    root = solve_lp(lp)
    rows = []
    if root.status != simplex.OPTIMAL:
        return rows
    model = load_model(cfg.model_path) if (
        cfg.model_path and "l2dive" in cfg.divers
    ) else None
    for name in cfg.divers:
        scorer = make_scorer(name, seed=cfg.seed, model=model)
        res = dive(inst, scorer, d_max=cfg.d_max, lp_iter_limit=cfg.lp_iter_limit,
                   lp=lp, root_sol=root)
        failed = len(res.solutions) == 0
        gap = FAILED_GAP if failed else primal_gap(res.best_z, entry["z_ref"])
        rows.append((entry["name"], name, cfg.seed, gap, failed,
                     res.depth_reached, res.termination, res.lp_iterations,
                     np.inf if failed else res.best_z, entry["z_ref"]))
    return rows


DIVE_COLUMNS = ("instance", "diver", "seed", "primal_gap", "failed", "depth",
                "termination", "lp_iterations", "best_objective", "reference")


def eval_dives(corpus_dir, cfg: DiveEvalConfig, out_dir) -> dict:
    """One dive per instance and diver under a shared budget; reports the
    primal gap against the corpus reference objective."""
    if len(set(cfg.divers)) != len(cfg.divers):
        raise ValueError("duplicate diver names in one comparison table")
    entries = load_corpus(corpus_dir)
    tasks = [(e, cfg) for e in entries]
    all_rows = [r for rows in _pmap(_eval_dive_one, tasks, cfg.jobs) for r in rows]
    all_rows.sort(key=lambda r: (r[0], r[1]))
    meta = {
        "command": "eval-dive",
        "seed": cfg.seed,
        "d_max": cfg.d_max,
        "divers": ",".join(cfg.divers),
        # paths are volatile across reruns and stay out of the hash
        "config_hash": config_hash({"divers": list(cfg.divers), "d_max": cfg.d_max,
                                    "lp_iter_limit": cfg.lp_iter_limit, "seed": cfg.seed}),
    }
    out_dir = Path(out_dir)
    write_csv(out_dir / "dives_per_instance.csv", meta, DIVE_COLUMNS, all_rows)

    summary = []
    for name in sorted(set(cfg.divers)):
        rows = [r for r in all_rows if r[1] == name]
        gaps = np.array([r[3] for r in rows if not r[4]], dtype=np.float64)
        failed = sum(1 for r in rows if r[4])
        mean = float(gaps.mean()) if gaps.size else np.inf
        stderr = float(gaps.std(ddof=1) / np.sqrt(gaps.size)) if gaps.size > 1 else 0.0
        depth = float(np.mean([r[5] for r in rows])) if rows else 0.0
        summary.append((name, len(rows), len(rows) - failed, failed, mean, stderr, depth))
    write_csv(out_dir / "dives_summary.csv", meta,
              ("diver", "instances", "solved", "failed", "mean_primal_gap",
               "stderr", "mean_depth"), summary)
    return {
        "per_instance": str(out_dir / "dives_per_instance.csv"),
        "summary": str(out_dir / "dives_summary.csv"),
        "rows": all_rows,
        "summary_rows": summary,
    }


# ---------------------------------------------------------------------------
# branch-and-bound evaluation
# ---------------------------------------------------------------------------

@dataclass
class BnbRunSpec:
    name: str
    members: tuple = ()  # (diver_name, period, offset); period None = root only
    d_max: int = DEFAULT_DEPTH

    def describe(self):
        return {"name": self.name, "members": list(map(list, self.members)),
                "d_max": self.d_max}


@dataclass
class BnbEvalConfig:
    specs: tuple
    tick_limit: float = 200_000.0
    node_limit: int = 100_000
    time_limit: float | None = None  # wall-clock safety rail, non-reproducible
    pool_capacity: int = 10
    seeds: tuple = (0, 1, 2)
    jobs: int = 1
    model_path: str | None = None
    save_traces: bool = False


def _ensemble_hook(members, model, d_max, seed):
    """Diver schedule: every member dives at the root; a member with period
    p and offset o additionally dives when its call counter hits o (mod p)."""
    counter = {"n": -1}

    def hook(inst, lp, sol, lo, hi):
        counter["n"] += 1
        found = []
        for name, period, offset in members:
            at_root = counter["n"] == 0
            scheduled = period is not None and counter["n"] % max(period, 1) == (offset or 0)
            if not (at_root or scheduled):
                continue
            scorer = make_scorer(name, seed=seed, model=model)
            res = dive(inst, scorer, d_max=d_max, lp=lp, root_sol=sol,
                       lower=lo, upper=hi)
            found.extend(res.solutions)
        return found

    return hook


def _eval_bnb_one(task):
    entry, spec, seed, cfg, trace_dir = task
    inst = read_instance(entry["instance_path"])
    model = load_model(cfg.model_path) if (
        cfg.model_path and any(m[0] == "l2dive" for m in spec.members)
    ) else None
    diver = None
    period = None
    if spec.members:
        diver = _ensemble_hook(spec.members, model, spec.d_max, seed)
        periods = [m[1] for m in spec.members if m[1] is not None]
        period = 1 if periods else None  # hook handles per-member schedules
    res = branch_and_bound(inst, SolveConfig(
        node_limit=cfg.node_limit, tick_limit=cfg.tick_limit,
        time_limit=cfg.time_limit, pool_capacity=cfg.pool_capacity,
        diver=diver, diver_period=period, seed=seed,
    ))
    if trace_dir is not None:
        safe = spec.name.replace(":", "_").replace("/", "_")
        res.trace.to_csv(Path(trace_dir) / f"{entry['name']}_{safe}_s{seed}.csv")
    integral = primal_dual_integral(res.trace.points, cfg.tick_limit)
    zt, zd = res.trace.final()
    return (entry["name"], spec.name, seed, integral, primal_dual_gap(zt, zd),
            res.objective, res.bound, res.status, res.nodes, res.ticks, res.dives)


BNB_COLUMNS = ("instance", "config", "seed", "pd_integral", "pd_gap_final",
               "objective", "bound", "status", "nodes", "ticks", "dives")


def eval_bnb(corpus_dir, cfg: BnbEvalConfig, out_dir) -> dict:
    entries = load_corpus(corpus_dir)
    trace_dir = None
    if cfg.save_traces:
        trace_dir = Path(out_dir) / "traces"
        trace_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(e, spec, seed, cfg, trace_dir)
             for e in entries for spec in cfg.specs for seed in cfg.seeds]
    rows = _pmap(_eval_bnb_one, tasks, cfg.jobs)
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    meta = {
        "command": "eval-bnb",
        "seeds": ",".join(str(s) for s in cfg.seeds),
        "tick_limit": cfg.tick_limit,
        "configs": json.dumps([s.describe() for s in cfg.specs], sort_keys=True),
        "config_hash": config_hash([s.describe() for s in cfg.specs]),
        "win_rule": "best mean pd_integral per instance; ties award a win to every tied config",
    }
    out_dir = Path(out_dir)
    write_csv(out_dir / "bnb_per_run.csv", meta, BNB_COLUMNS, rows)

    by_cfg = {s.name: {} for s in cfg.specs}
    for r in rows:
        by_cfg[r[1]].setdefault(r[0], []).append(r[3])
    wins = {s.name: 0 for s in cfg.specs}
    for inst_name in sorted({r[0] for r in rows}):
        means = {name: float(np.mean(vals[inst_name]))
                 for name, vals in by_cfg.items() if inst_name in vals}
        best = min(means.values())
        for name, m in means.items():
            if m <= best + 1e-12:
                wins[name] += 1
    summary = []
    for s in cfg.specs:
        per_seed = {seed: [r[3] for r in rows if r[1] == s.name and r[2] == seed]
                    for seed in cfg.seeds}
        seed_means = np.array([np.mean(v) for v in per_seed.values() if v])
        mean = float(seed_means.mean()) if seed_means.size else np.inf
        stderr = float(seed_means.std(ddof=1) / np.sqrt(seed_means.size)) \
            if seed_means.size > 1 else 0.0
        summary.append((s.name, mean, stderr, wins[s.name]))
    write_csv(out_dir / "bnb_summary.csv", meta,
              ("config", "mean_pd_integral", "stderr_over_seeds", "wins"), summary)
    return {
        "per_run": str(out_dir / "bnb_per_run.csv"),
        "summary": str(out_dir / "bnb_summary.csv"),
        "rows": rows,
        "summary_rows": summary,
    }


# ---------------------------------------------------------------------------
# ensemble tuning (random search over diver schedules)
# ---------------------------------------------------------------------------

@dataclass
class TuneConfig:
    divers: tuple = ("fractional", "coefficient", "linesearch", "vectorlength",
                     "pseudocost", "lower", "upper", "random")
    samples: int = 8
    seed: int = 0
    objective: str = "integral"  # or "ticks" (work to best solution)
    base_period: int = 20
    d_max: int = DEFAULT_DEPTH

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("sample count must be >= 1")


def sample_ensemble(rng, cfg: TuneConfig):
    """Per diver: frequency off / doubled / default / halved with equal
    probability, and offset 0 or half a period with equal probability."""
    members = []
    for name in cfg.divers:
        choice = rng.integers(0, 4)
        if choice == 0:
            continue  # off
        period = {1: max(cfg.base_period // 2, 1), 2: cfg.base_period,
                  3: cfg.base_period * 2}[int(choice)]
        offset = int(rng.integers(0, 2)) * (period // 2)
        members.append((name, period, offset))
    return tuple(members)


def tune_ensemble(corpus_dir, tune_cfg: TuneConfig, eval_cfg: BnbEvalConfig,
                  out_path) -> dict:
    """Uniform random search over diver schedules, evaluated on the full
    validation corpus; returns the sampled configuration only if it beats
    the default ensemble."""
    rng = np.random.default_rng(tune_cfg.seed)
    default_members = tuple((name, tune_cfg.base_period, 0) for name in tune_cfg.divers)
    specs = [BnbRunSpec(name="default", members=default_members, d_max=tune_cfg.d_max)]
    for k in range(tune_cfg.samples):
        specs.append(BnbRunSpec(name=f"sample_{k}", members=sample_ensemble(rng, tune_cfg),
                                d_max=tune_cfg.d_max))
    cfg = BnbEvalConfig(
        specs=tuple(specs), tick_limit=eval_cfg.tick_limit,
        node_limit=eval_cfg.node_limit, time_limit=eval_cfg.time_limit,
        pool_capacity=eval_cfg.pool_capacity,
        seeds=eval_cfg.seeds, jobs=eval_cfg.jobs, model_path=eval_cfg.model_path,
    )
    out_dir = Path(out_path).parent
    result = eval_bnb(corpus_dir, cfg, out_dir / "tune_runs")
    if tune_cfg.objective == "ticks":
        # work to completion, censored at the tick limit for unproven runs
        scores = {}
        for s in specs:
            vals = [r[9] if r[7] == OPTIMAL_PROVEN else cfg.tick_limit
                    for r in result["rows"] if r[1] == s.name]
            scores[s.name] = float(np.mean(vals)) if vals else np.inf
    else:
        scores = {name: mean for name, mean, _, _ in result["summary_rows"]}
    best_name = min(sorted(scores), key=lambda n: scores[n])
    if scores[best_name] >= scores["default"]:
        best_name = "default"
    best_spec = next(s for s in specs if s.name == best_name)
    n_entries = len(load_corpus(corpus_dir))
    report = {
        "best": best_spec.describe(),
        "best_name": best_name,
        "objective": tune_cfg.objective,
        "scores": {k: scores[k] for k in sorted(scores)},
        "solver_calls": len(specs) * n_entries * len(cfg.seeds),
        "samples": tune_cfg.samples,
        "seed": tune_cfg.seed,
    }
    with open(out_path, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return report


# ---------------------------------------------------------------------------
# verification suites (the `verify` command)
# ---------------------------------------------------------------------------

def random_bounded_lp(rng, max_n=10, max_m=6):
    """Random LP with finite bounds, sized so that basic-solution
    enumeration of its equality form stays cheap; roughly half the draws
    are all-equality instances and a fifth are shifted into infeasibility."""
    m = int(rng.integers(1, max_m + 1))
    if rng.random() < 0.5:
        n = int(rng.integers(m + 1, max_n + 1))
        senses = [2] * m  # all equality: no slack columns
    else:
        n = int(rng.integers(m + 1, max(m + 2, 12 - m + 1)))
        senses = [int(rng.integers(0, 3)) for _ in range(m)]
    A = rng.normal(size=(m, n)).round(3)
    x0 = rng.uniform(0.0, 2.0, size=n).round(3)
    slack_room = np.array([0.3 if s == 0 else (-0.3 if s == 1 else 0.0) for s in senses])
    b = (A @ x0 + slack_room).round(3)
    if rng.random() < 0.2:
        b = (b + rng.uniform(5.0, 10.0, size=m)).round(3)  # often infeasible
    c = rng.normal(size=n).round(3)
    lb = np.zeros(n)
    ub = np.full(n, round(float(rng.uniform(2.0, 4.0)), 3))
    return A, senses, b, c, lb, ub


def lp_oracle_suite(count=200, seed=0) -> dict:
    """Simplex vs exhaustive basic-solution enumeration, plus the duality
    invariants, on random bounded LPs."""
    from .instances import make_instance

    rng = np.random.default_rng(seed)
    failures = []
    max_gap = 0.0
    max_cs = 0.0
    max_dual_resid = 0.0
    n_opt = 0
    for trial in range(count):
        A, senses, b, c, lb, ub = random_bounded_lp(rng)
        m, n = A.shape
        inst = make_instance(
            f"lp{trial}", c=c,
            rows=[(i, j, A[i, j]) for i in range(m) for j in range(n) if A[i, j] != 0.0],
            senses=senses,
            b=b, lb=lb, ub=ub, integer=[],
        )
        lp = to_standard_form(inst)
        # oracle needs finite slack bounds; any value above the largest
        # attainable |slack| keeps the feasible region unchanged
        slack_hi = (np.abs(lp.dense()).sum(axis=1).max() * float(np.max(np.abs(ub)))
                    + float(np.max(np.abs(b), initial=0.0)) + 10.0)
        o_ub = np.where(np.isfinite(lp.ub), lp.ub, slack_hi)
        status, z_ref, _ = enumerate_basic_solutions(lp.dense(), lp.b, lp.c, lp.lb, o_ub)
        sol = solve_lp(lp)
        if status == "infeasible":
            if sol.status != simplex.INFEASIBLE:
                failures.append((trial, "expected infeasible", sol.status))
            continue
        n_opt += 1
        if sol.status != simplex.OPTIMAL:
            failures.append((trial, "expected optimal", sol.status))
            continue
        if abs(sol.objective - z_ref) > 1e-6 * (1 + abs(z_ref)):
            failures.append((trial, "objective mismatch", sol.objective, z_ref))
            continue
        gap = abs(sol.objective - dual_objective(sol.duals, lp)) / (1 + abs(sol.objective))
        cs = check_complementary_slackness(sol.x, sol.duals, lp, tol=1e-8)
        resid = float(np.max(np.abs(
            lp.dense().T @ sol.duals.y_b + sol.duals.y_lb + sol.duals.y_ub - lp.c
        )))
        max_gap = max(max_gap, gap)
        max_cs = max(max_cs, cs["max_violation"])
        max_dual_resid = max(max_dual_resid, resid)
        if gap > 1e-8 or not cs["holds"] or resid > 1e-8:
            failures.append((trial, "duality", gap, cs["max_violation"], resid))
    return {
        "count": count,
        "optimal": n_opt,
        "failures": failures,
        "max_scaled_gap": max_gap,
        "max_cs_violation": max_cs,
        "max_dual_residual": max_dual_resid,
        "ok": not failures,
    }


def small_binary_instance(rng):
    fam = ["set-cover", "indep-set", "comb-auction"][int(rng.integers(0, 3))]
    seed = int(rng.integers(0, 2 ** 31))
    if fam == "set-cover":
        cfg = GeneratorConfig(fam, seed=seed, rows=6, cols=10, density=0.3)
    elif fam == "indep-set":
        cfg = GeneratorConfig(fam, seed=seed, nodes=10, affinity=2)
    else:
        cfg = GeneratorConfig(fam, seed=seed, items=7, bids=11)
    return generate(cfg)


def enumerate_feasible_binary(inst, cap=4096):
    """All feasible 0/1 assignments of a pure-binary instance (vectorized)."""
    n = inst.n
    P = 1 << n
    if P > cap * 16:
        raise ValueError("instance too large to enumerate")
    bits = ((np.arange(P)[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)
    A = inst.A.toarray()
    act = bits @ A.T
    ok = np.ones(P, dtype=bool)
    scale = 1.0 + np.abs(inst.b)
    for sense, test in ((0, lambda a, r, s: a <= r + 1e-7 * s),
                        (1, lambda a, r, s: a >= r - 1e-7 * s),
                        (2, lambda a, r, s: np.abs(a - r) <= 1e-7 * s)):
        mask = inst.senses == sense
        if mask.any():
            ok &= np.all(test(act[:, mask], inst.b[mask], scale[mask]), axis=1)
    ok &= np.all(bits >= inst.lb[None, :] - 1e-9, axis=1)
    ok &= np.all(bits <= inst.ub[None, :] + 1e-9, axis=1)
    return bits[ok]


def tighten_set_suite(count=100, seed=0) -> dict:
    """Tightening the slackness-violation set of an enumerated feasible
    point must make it LP-optimal, on every sampled pair."""
    rng = np.random.default_rng(seed)
    checked = 0
    failures = []
    while checked < count:
        inst = small_binary_instance(rng)
        feas = enumerate_feasible_binary(inst)
        if feas.shape[0] == 0:
            continue
        take = min(10, count - checked, feas.shape[0])
        picks = rng.choice(feas.shape[0], size=take, replace=False)
        for k in picks:
            rep = verify_tightening_optimality(inst, feas[k])
            checked += 1
            if not rep["holds"]:
                failures.append((inst.name, feas[k].tolist(), rep))
    return {"count": checked, "failures": failures, "ok": not failures}


def run_verification(seed=0, lp_count=200, tighten_count=100, verbose=True) -> bool:
    lp_rep = lp_oracle_suite(count=lp_count, seed=seed)
    tighten_rep = tighten_set_suite(count=tighten_count, seed=seed)
    if verbose:
        print(f"lp-oracle: {'PASS' if lp_rep['ok'] else 'FAIL'} "
              f"({lp_rep['count']} LPs, max scaled gap {lp_rep['max_scaled_gap']:.2e}, "
              f"max slackness violation {lp_rep['max_cs_violation']:.2e})")
        print(f"tighten-set optimality: {'PASS' if tighten_rep['ok'] else 'FAIL'} "
              f"({tighten_rep['count']} pairs)")
        for f in (lp_rep["failures"] + tighten_rep["failures"])[:10]:
            print("  failure:", f)
    return lp_rep["ok"] and tighten_rep["ok"]
