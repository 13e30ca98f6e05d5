"""Experiment harness behind the ``fwmips`` command line.

An experiment spec is a JSON object::

    {"scenario": "fw_quadratic" | "herding" | "planted_maxip",
     "n": 200, "d": 50, "k": 64, "epsilon": 1e-3, "c": 0.9, "tau": 0.5,
     "oracles": ["exact", "lshjl", "aipe"], "seeds": [0, 1],
     "output_dir": "runs/demo", "max_iters": null}

``generate`` writes instances under ``<out>/instances/seed_<s>/``, ``run``
writes traces under ``<out>/runs/<oracle>/seed_<s>/`` plus
``<out>/report.json``, and ``report`` turns one or more run directories into
``report.md``, ``summary.csv`` and per-run convergence curves.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FwmipsError
from .geometry import PointSet
from .herding import FeatureMap, HerdingInstance, median_bandwidth
from .instances import planted_maxip_instance, quadratic_instance
from .lsh_jl import RobustMaxipParams
from .oracles import AipeSpec, ExactOracle, ExactSpec, LshJlSpec, make_oracle
from .pointio import read_fwps, write_fwps
from .solver import FwConfig, fw_accelerated, fw_exact, quadratic_objective

log = logging.getLogger(__name__)

SCENARIOS = ("fw_quadratic", "herding", "planted_maxip")
ORACLES = ("exact", "lshjl", "aipe")


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str = "fw_quadratic"
    n: int = 200
    d: int = 50
    k: int = 64
    epsilon: float = 1e-3
    c: float = 0.9
    tau: float = 0.5
    oracles: tuple = ("exact", "lshjl", "aipe")
    seeds: tuple = (0,)
    output_dir: str = "fwmips_out"
    max_iters: int | None = None
    aipe_epsilon: float = 0.2
    aipe_delta: float = 0.05
    lshjl_epsilon: float = 0.5
    lshjl_delta: float = 0.05

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.n < 1 or self.d < 1 or self.k < 1:
            raise ConfigError("n, d and k must be >= 1")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.c <= 1:
            raise ConfigError(f"c must lie in (0, 1], got {self.c}")
        if not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        bad = [o for o in self.oracles if o not in ORACLES]
        if bad or not self.oracles:
            raise ConfigError(f"oracles must be a nonempty subset of {ORACLES}, got {list(self.oracles)}")

    @classmethod
    def from_dict(cls, raw) -> "ExperimentSpec":
        raw = dict(raw)
        if "oracle" in raw and "oracles" not in raw:
            o = raw.pop("oracle")
            raw["oracles"] = [o] if isinstance(o, str) else o
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown spec fields: {sorted(unknown)}")
        for key in ("oracles", "seeds"):
            if key in raw:
                raw[key] = tuple(raw[key])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

    def oracle_spec(self, name):
        if name == "exact":
            return ExactSpec()
        if name == "lshjl":
            tau = self.tau
            return LshJlSpec(RobustMaxipParams(epsilon=self.lshjl_epsilon, delta=self.lshjl_delta,
                                               c=min(self.c, 0.999), tau=tau))
        return AipeSpec(self.aipe_epsilon, self.aipe_delta)

    def fw_config(self, oracle_name, seed) -> FwConfig:
        c = 1.0 if oracle_name == "exact" else self.c
        return FwConfig(epsilon=self.epsilon, c=c, max_iters=self.max_iters,
                        oracle=self.oracle_spec(oracle_name), seed=int(seed))


@dataclass
class SeedReport:
    oracle: str
    seed: int
    ok: bool
    error: str = ""
    reason: str = ""
    preprocess_time: float = 0.0
    mean_iter_time: float = 0.0
    iterations: int = 0
    final_gap: float = math.nan
    hit_rate: float = math.nan
    madds: int = 0
    madds_per_query: float = math.nan
    exact_madds_per_iter: int = 0
    gap_slope: float = math.nan


def _seed_dir(out, seed):
    return Path(out) / "instances" / f"seed_{seed}"


def cmd_generate(spec: ExperimentSpec, out=None) -> list:
    """Write one instance per seed; returns the manifest paths."""
    out = Path(out or spec.output_dir)
    paths = []
    for seed in spec.seeds:
        d = _seed_dir(out, seed)
        d.mkdir(parents=True, exist_ok=True)
        manifest = {"scenario": spec.scenario, "n": spec.n, "d": spec.d, "seed": int(seed)}
        if spec.scenario == "fw_quadratic":
            inst = quadratic_instance(spec.n, spec.d, seed)
            write_fwps(d / "points.fwps", inst.points)
            write_fwps(d / "mu.fwps", inst.mu[None, :])
            manifest.update(points="points.fwps", mu="mu.fwps", f_star=0.0)
        elif spec.scenario == "herding":
            x = np.asarray(_herding_data(spec.n, spec.d, seed))
            write_fwps(d / "data.fwps", x)
            fm = FeatureMap("random_fourier", spec.d, spec.k, median_bandwidth(x, seed=seed), int(seed))
            (d / "herding.json").write_text(json.dumps(
                {"data": "data.fwps", "feature_map": {k: v for k, v in fm.to_dict().items() if k != "d"},
                 "k": spec.k, "seed": int(seed)}, indent=2))
            manifest.update(instance="herding.json", P="uniform", f_star=0.0)
        else:
            pts, q, j = planted_maxip_instance(spec.n, spec.d, seed)
            write_fwps(d / "points.fwps", pts)
            write_fwps(d / "query.fwps", q[None, :])
            manifest.update(points="points.fwps", query="query.fwps", planted=j,
                            planted_ip=float(pts.points[j] @ q))
        path = d / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        paths.append(path)
    return paths


def _herding_data(n, d, seed):
    from ._rng import make_rng
    return make_rng(seed, 0x4E7D).standard_normal((n, d))


def _load_problem(spec, out, seed):
    d = _seed_dir(out, seed)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(f"missing instance manifest {mpath}; run `fwmips generate` first")
    manifest = json.loads(mpath.read_text())
    if manifest["scenario"] == "fw_quadratic":
        pts = read_fwps(d / manifest["points"])
        mu = read_fwps(d / manifest["mu"]).points[0]
        return pts, quadratic_objective(mu, 0.0), "centroid"
    if manifest["scenario"] == "herding":
        inst = HerdingInstance.from_json(d / manifest["instance"])
        return inst.mapped, quadratic_objective(inst.mu, 0.0), "vertex"
    raise ConfigError(f"scenario {manifest['scenario']!r} has no solver run; use it for index studies")


class _FallbackExact:
    """Debug wrapper: on an oracle failure, answer with the exact scan."""

    def __init__(self, spec):
        self.inner = make_oracle(spec)
        self.exact = ExactOracle()
        self.counters = self.inner.counters
        self.name = f"{spec.name}+fallback"

    def prepare(self, psi, seed=0, T=1000):
        self.inner.prepare(psi, seed, T)
        self.exact.prepare(psi, seed, T)

    def search(self, phi, threshold, rng):
        res = self.inner.search(phi, threshold, rng)
        if res is None:
            res = self.exact.search(phi, threshold, rng)
            self.counters.last_madds += self.exact.counters.last_madds
            self.counters.madds += self.exact.counters.last_madds
        return res


def _gap_slope(trace):
    g = trace.column("gap_surrogate")
    g = g[np.isfinite(g)]
    t = np.arange(1, g.size + 1)
    keep = (t >= 10) & (g > 1e-14)
    if keep.sum() < 5:
        return math.nan
    return float(np.polyfit(np.log(t[keep]), np.log(g[keep]), 1)[0])


def _run_one(spec, out, oracle_name, seed, fallback_exact):
    rep = SeedReport(oracle_name, int(seed), ok=False)
    run_dir = Path(out) / "runs" / oracle_name / f"seed_{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    try:
        pts, obj, init = _load_problem(spec, out, seed)
        cfg = spec.fw_config(oracle_name, seed)
        cfg = FwConfig(**{**cfg.__dict__, "init": init})
        if oracle_name == "exact":
            hp, trace = fw_exact(obj, pts, cfg)
        else:
            oracle = _FallbackExact(cfg.oracle) if fallback_exact else None
            hp, trace = fw_accelerated(obj, pts, cfg, oracle=oracle)
        trace.write_csv(run_dir / "trace.csv")
        trace.write_json(run_dir / "summary.json")
        steps = max(trace.iterations, 1)
        cnt = trace.counters
        rep.ok = True
        rep.reason = trace.reason
        rep.preprocess_time = trace.preprocess_time
        rep.mean_iter_time = trace.wall_time / steps
        rep.iterations = trace.iterations
        rep.final_gap = obj.value(hp.value) - (obj.f_star or 0.0)
        rep.hit_rate = cnt["hits"] / cnt["queries"] if cnt.get("queries") else math.nan
        rep.madds = int(cnt.get("madds", 0))
        rep.madds_per_query = rep.madds / cnt["queries"] if cnt.get("queries") else math.nan
        rep.exact_madds_per_iter = pts.n * (pts.d + 3)
        rep.gap_slope = _gap_slope(trace) if oracle_name == "exact" else math.nan
    except (FwmipsError, OSError, ValueError) as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
        log.warning("seed %s oracle %s failed: %s", seed, oracle_name, rep.error)
    return rep


def _threads():
    try:
        return max(1, int(os.environ.get("FWMIPS_THREADS", "1")))
    except ValueError:
        raise ConfigError("FWMIPS_THREADS must be an integer")


def cmd_run(spec: ExperimentSpec, out=None, fallback_exact=False) -> dict:
    """Run every (oracle, seed) pair; returns and writes the aggregate report."""
    out = Path(out or spec.output_dir)
    jobs = [(o, s) for o in spec.oracles for s in spec.seeds]
    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=min(_threads(), len(jobs))) as pool:
        reports = list(pool.map(lambda job: _run_one(spec, out, job[0], job[1], fallback_exact), jobs))
    agg = {"spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
           "fallback_exact": bool(fallback_exact), "wall_time": time.perf_counter() - start,
           "runs": [asdict(r) for r in reports]}
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(agg, indent=2, default=_json_default))
    return agg


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def run_exit_code(agg) -> int:
    return 0 if any(r["ok"] for r in agg["runs"]) else 1


REPORT_COLUMNS = ("oracle", "seeds", "ok", "preprocess_s", "iter_ms", "iterations", "final_gap",
                  "hit_rate", "madds_per_query", "exact_madds_per_iter", "gap_slope")


def cmd_report(run_dirs, out=None) -> Path:
    """Aggregate ``report.json`` files into ``report.md``, ``summary.csv`` and curves."""
    run_dirs = [Path(p) for p in run_dirs]
    missing = [str(p / "report.json") for p in run_dirs if not (p / "report.json").exists()]
    if missing:
        raise FileNotFoundError("missing run reports: " + ", ".join(missing))
    out = Path(out) if out else run_dirs[0]
    out.mkdir(parents=True, exist_ok=True)
    by_oracle = {}
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    for rd in run_dirs:
        agg = json.loads((rd / "report.json").read_text())
        for r in agg["runs"]:
            by_oracle.setdefault(r["oracle"], []).append(r)
            trace = rd / "runs" / r["oracle"] / f"seed_{r['seed']}" / "trace.csv"
            if r["ok"] and trace.exists():
                _write_curve(trace, curves / f"{rd.name}_{r['oracle']}_seed{r['seed']}.csv")
    rows = []
    for name in sorted(by_oracle, key=lambda o: ORACLES.index(o) if o in ORACLES else 99):
        rs = by_oracle[name]
        good = [r for r in rs if r["ok"]]

        def mean(key):
            vals = [r[key] for r in good if r[key] is not None and np.isfinite(r[key])]
            return float(np.mean(vals)) if vals else math.nan

        rows.append({"oracle": name, "seeds": len(rs), "ok": len(good),
                     "preprocess_s": mean("preprocess_time"), "iter_ms": 1e3 * mean("mean_iter_time"),
                     "iterations": mean("iterations"), "final_gap": mean("final_gap"),
                     "hit_rate": mean("hit_rate"), "madds_per_query": mean("madds_per_query"),
                     "exact_madds_per_iter": mean("exact_madds_per_iter"), "gap_slope": mean("gap_slope")})
    with open(out / "summary.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        wr.writeheader()
        wr.writerows(rows)
    lines = ["| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
    for row in rows:
        lines.append("| " + " | ".join(_fmt(row[c]) for c in REPORT_COLUMNS) + " |")
    path = out / "report.md"
    path.write_text("# fwmips run report\n\n" + "\n".join(lines) + "\n")
    return path


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, int):
        return str(v)
    if v is None or not np.isfinite(v):
        return "-"
    return f"{v:.4g}"


def _write_curve(trace_csv, dest):
    with open(trace_csv) as fh, open(dest, "w", newline="") as out:
        rd = csv.DictReader(fh)
        wr = csv.writer(out)
        wr.writerow(["t", "objective", "gap_surrogate"])
        for row in rd:
            if row["outcome"] != "fail":
                wr.writerow([row["t"], row["objective"], row["gap_surrogate"]])


def cmd_calibrate(spec_raw: dict | None = None, out=None) -> Path:
    """Run the pilot sweeps and write ``calibration.json`` into ``out``."""
    from .calibration import run_calibration

    out = Path(out or (spec_raw or {}).get("output_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return run_calibration(out / "calibration.json", **{k: v for k, v in (spec_raw or {}).items()
                                                         if k in ("seed", "quick")})
