"""The gen / train / energy / bench / ablate subcommands.

Every command takes a resolved :class:`ExperimentConfig` and writes under
``config.out_dir``:

    corpus/{train,test}/<seed>/    instance files + smoothed.bin
    models/<loss>.ckpt             checkpoints, with <loss>_history.csv
    energy.csv, energy.svg         captured-energy gaps per rank
    bench.csv, bench_summary.csv   solver runs and their aggregates
    ablate.csv                     scaling study
"""
from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import ConfigError, MeshError, SubspaceAmgError
from ..fem import instance_streams, load_instance, make_instance, save_instance
from ..linalg import captured_energy, svd_oracle
from ..learn.checkpoint import (corpus_digest, load_checkpoint, save_checkpoint,
                                write_history)
from ..learn.mlp import SMALL_HIDDEN, MlpModel
from ..learn.train import TrainConfig, predict_basis, train
from ..manifest import write_manifest
from ..smoothing import generate_smoothed_vectors, load_smoothed, save_smoothed
from ..solver import (REPORT_FIELDS, SolveReport, build_preconditioner, pcg,
                      sa_prolongator)
from .config import ExperimentConfig
from .stats import HEADER_NOTE, summarize
from .svg import write_svg

log = logging.getLogger(__name__)

THREADS_ENV = "SUBSPACE_AMG_THREADS"
LEARNED = ("nlss", "subspace")


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from None


def map_instances(fn, items) -> list:
    """Apply ``fn`` per instance, possibly on a thread pool; results keep input order."""
    items = list(items)
    workers = worker_count()
    if workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _run_manifest(config: ExperimentConfig, command: str, extra: dict | None = None) -> None:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = {"command": command, "version": __version__}
    items.update({k: v for k, v in config.to_dict().items()})
    items.update(extra or {})
    write_manifest(out / f"{command}_manifest.txt", items)


# --------------------------------------------------------------------------- gen

def corpus_dir(config: ExperimentConfig, split: str) -> Path:
    return Path(config.out_dir) / "corpus" / split


def _smoothed(inst, config: ExperimentConfig):
    stream = instance_streams(inst.seed)[2]
    return generate_smoothed_vectors(inst.A, config.K, config.s1, config.omega, seed=stream,
                                     boundary_mask=inst.mesh.boundary_mask)


def _gen_one(args):
    config, split, seed = args
    try:
        inst = make_instance(config.family, config.N, seed, config.jitter)
    except MeshError as exc:
        raise MeshError(f"mesh generation failed for seed {seed}: {exc}") from exc
    d = save_instance(corpus_dir(config, split) / f"{seed:08d}", inst,
                      extra={"split": split, "K": config.K, "s1": config.s1})
    save_smoothed(d, _smoothed(inst, config))
    return d


def cmd_gen(config: ExperimentConfig) -> list[Path]:
    jobs = [(config, "train", s) for s in config.train_seeds()]
    jobs += [(config, "test", s) for s in config.test_seeds()]
    dirs = map_instances(_gen_one, jobs)
    write_manifest(Path(config.out_dir) / "corpus" / "manifest.txt", {
        "family": config.family, "N": config.N, "K": config.K, "s1": config.s1,
        "omega": config.omega, "jitter": config.jitter, "version": __version__,
        "train_seeds": config.train_seeds(), "test_seeds": config.test_seeds()})
    _run_manifest(config, "gen", {"instances": len(dirs)})
    return dirs


def instance_dirs(config: ExperimentConfig, split: str) -> list[Path]:
    root = corpus_dir(config, split)
    if not root.is_dir():
        raise ConfigError(f"no {split} corpus under {root}; run gen first")
    return sorted(p for p in root.iterdir() if p.is_dir())


def load_split(config: ExperimentConfig, split: str, limit: int | None = None) -> list[np.ndarray]:
    dirs = instance_dirs(config, split)[:limit]
    return [load_smoothed(d).S for d in dirs]


# ------------------------------------------------------------------------- train

def model_path(config: ExperimentConfig, loss: str) -> Path:
    return Path(config.out_dir) / "models" / f"{loss}.ckpt"


def train_config(config: ExperimentConfig, loss: str, rank: int | None = None,
                 epochs: int | None = None, hidden=None) -> TrainConfig:
    return TrainConfig(rank=config.K if rank is None else rank,
                       epochs=config.epochs if epochs is None else epochs,
                       learning_rate=config.learning_rate, batch_size=config.batch_size,
                       seed=config.train_seed, loss=loss,
                       hidden=config.hidden_layers() if hidden is None else hidden)


def fit_model(data, tcfg: TrainConfig, log_every: int = 10):
    n, K = data[0].shape
    model = MlpModel.for_problem(n, K, tcfg.rank, tcfg.hidden, seed=tcfg.seed)

    def report(epoch, loss):
        if epoch % log_every == 0 or epoch == tcfg.epochs - 1:
            log.info("%s epoch %d loss %.6f", tcfg.loss.value, epoch, loss)

    return train(model, data, tcfg, callback=report)


def cmd_train(config: ExperimentConfig) -> dict[str, Path]:
    losses = [m for m in config.methods if m in LEARNED]
    if not losses:
        raise ConfigError("no learned method (nlss, subspace) in methods")
    data = load_split(config, "train")
    if not data:
        raise ConfigError("training corpus is empty")
    digest = corpus_digest(data)
    out = {}
    for loss in losses:
        tcfg = train_config(config, loss)
        t0 = time.perf_counter()
        result = fit_model(data, tcfg)
        path = model_path(config, loss)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path, result.model, result.optimizer, config=tcfg.to_dict(),
                        manifest={"corpus_digest": digest, "train_size": len(data),
                                  "family": config.family, "N": config.N, "K": config.K,
                                  "train_seconds": time.perf_counter() - t0,
                                  "version": __version__})
        write_history(path.with_name(f"{loss}_history.csv"), result.history)
        out[loss] = path
    _run_manifest(config, "train", {"corpus_digest": digest})
    return out


def load_models(config: ExperimentConfig, methods) -> dict[str, MlpModel]:
    models = {}
    for m in methods:
        if m in LEARNED:
            path = model_path(config, m)
            if not path.exists():
                raise ConfigError(f"missing checkpoint {path}; run train first")
            models[m] = load_checkpoint(path)[0]
    return models


# ------------------------------------------------------------------------ energy

@dataclass
class EnergyCurve:
    method: str
    ranks: list
    median: list
    q1: list
    q3: list
    median_energy: list


ENERGY_FIELDS = ("method", "rank", "median_gap", "q1_gap", "q3_gap", "median_energy")


def energy_gaps(S_list, models: dict, ranks) -> dict[str, np.ndarray]:
    """``gaps[method][i, j]`` = SVD energy - method energy on instance i at ranks[j]."""
    def one(S):
        sv = svd_oracle(S).singular_values ** 2
        best = np.array([sv[:r].sum() / sv.sum() for r in ranks])
        row = {"svd": (np.zeros(len(ranks)), best)}
        for name, model in models.items():
            e = np.array([captured_energy(predict_basis(model, S, r), S) for r in ranks])
            row[name] = (best - e, e)
        return row

    rows = map_instances(one, S_list)
    return {m: (np.array([r[m][0] for r in rows]), np.array([r[m][1] for r in rows]))
            for m in rows[0]} if rows else {}


def energy_curves(gaps, ranks) -> list[EnergyCurve]:
    curves = []
    for method, (gap, energy) in gaps.items():
        stats = [summarize(gap[:, j]) for j in range(len(ranks))]
        curves.append(EnergyCurve(method, list(ranks), [s.median for s in stats],
                                  [s.q1 for s in stats], [s.q3 for s in stats],
                                  [summarize(energy[:, j]).median for j in range(len(ranks))]))
    return curves


def write_energy_csv(path, curves) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(HEADER_NOTE + "\n")
        w = csv.writer(fh)
        w.writerow(ENERGY_FIELDS)
        for c in curves:
            for j, r in enumerate(c.ranks):
                w.writerow([c.method, r, repr(c.median[j]), repr(c.q1[j]), repr(c.q3[j]),
                            repr(c.median_energy[j])])


def read_energy_csv(path) -> list[EnergyCurve]:
    curves: dict[str, EnergyCurve] = {}
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in rows:
            c = curves.setdefault(row["method"], EnergyCurve(row["method"], [], [], [], [], []))
            c.ranks.append(int(row["rank"]))
            c.median.append(float(row["median_gap"]))
            c.q1.append(float(row["q1_gap"]))
            c.q3.append(float(row["q3_gap"]))
            c.median_energy.append(float(row["median_energy"]))
    return list(curves.values())


def cmd_energy(config: ExperimentConfig) -> list[EnergyCurve]:
    methods = [m for m in config.methods if m in LEARNED]
    models = load_models(config, methods)
    ranks = sorted(config.ranks)
    S_list = load_split(config, "test")
    if not S_list:
        raise ConfigError("test corpus is empty")
    curves = energy_curves(energy_gaps(S_list, models, ranks), ranks)
    out = Path(config.out_dir)
    write_energy_csv(out / "energy.csv", curves)
    write_svg(out / "energy.svg", ranks,
              {c.method: (c.median, c.q1, c.q3) for c in curves},
              title=f"Captured-energy gap to SVD ({config.family}, N={config.N}, K={config.K})",
              xlabel="rank", ylabel="SVD energy - method energy")
    _run_manifest(config, "energy", {"test_instances": len(S_list)})
    return curves


# ------------------------------------------------------------------------- bench

def solve_with_basis(inst, config: ExperimentConfig, method: str, rank: int | None,
                     model: MlpModel | None = None) -> SolveReport:
    """Build the coarse basis for ``method``, the preconditioner, and run PCG."""
    t0 = time.perf_counter()
    if method == "cg":
        _, rep = pcg(inst.A, inst.rhs, None, config.delta)
        rep.method = "cg"
        return rep.finalize()
    if method == "sa":
        U = sa_prolongator(inst.A, config.theta, config.omega).P
    else:
        S = _smoothed(inst, config).S
        if method == "svd":
            U = svd_oracle(S).left_vectors[:, :rank]
        else:
            U = predict_basis(model, S, rank)
    inference_ms = 1e3 * (time.perf_counter() - t0)
    M = build_preconditioner(inst.A, U, config.omega, config.nu1, config.nu2)
    _, rep = pcg(inst.A, inst.rhs, M, config.delta)
    rep.method, rep.n_c = method, M.n_c
    return rep.finalize(inference_ms, M.setup_ms,
                        total_ms=1e3 * (time.perf_counter() - t0))


def _bench_jobs(config):
    methods = ["cg"] + [m for m in config.methods if m != "sa"]
    jobs = []
    for m in methods:
        ranks = [None] if m == "cg" else config.bench_ranks
        jobs += [(m, r) for r in ranks]
    if "sa" in config.methods:
        jobs.append(("sa", None))
    return jobs


def cmd_bench(config: ExperimentConfig) -> list[SolveReport]:
    models = load_models(config, config.methods)
    dirs = instance_dirs(config, "test")[:config.bench_instances]
    jobs = _bench_jobs(config)

    def one(d):
        inst = load_instance(d)
        reports = []
        for method, rank in jobs:
            try:
                rep = solve_with_basis(inst, config, method, rank, models.get(method))
            except SubspaceAmgError as exc:
                log.warning("instance %s, %s: %s", inst.seed, method, exc)
                rep = SolveReport(0, [], False, method=method, n_c=rank or 0,
                                  extra={"error": str(exc)})
            rep.family, rep.N, rep.K, rep.seed = config.family, config.N, config.K, inst.seed
            reports.append(rep)
        return reports

    reports = [r for rows in map_instances(one, dirs) for r in rows]
    out = Path(config.out_dir)
    write_reports(out / "bench.csv", reports)
    write_bench_summary(out / "bench_summary.csv", reports)
    _run_manifest(config, "bench", {"instances": len(dirs)})
    return reports


def write_reports(path, reports, append: bool = False) -> None:
    path = Path(path)
    fresh = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if fresh:
            w.writerow(REPORT_FIELDS)
        for rep in reports:
            w.writerow([repr(v) if isinstance(v, float) else v for v in rep.csv_row()])


def read_reports(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


BENCH_PHASES = ("iterations", "inference_ms", "setup_ms", "solve_ms", "total_ms")


def bench_summary(reports) -> list[dict]:
    """Median / quartiles per (method, rank); SA's emergent n_c is summarised too."""
    groups: dict[tuple, list] = {}
    for rep in reports:
        key = (rep.method, "emergent" if rep.method == "sa" else rep.n_c)
        groups.setdefault(key, []).append(rep)
    rows = []
    for (method, label), reps in groups.items():
        row = {"method": method, "n_c": label,
               "median_n_c": summarize([r.n_c for r in reps]).median,
               "converged": sum(r.converged for r in reps), "instances": len(reps)}
        for phase in BENCH_PHASES:
            s = summarize([getattr(r, phase) for r in reps])
            row.update({f"{phase}_median": s.median, f"{phase}_q1": s.q1,
                        f"{phase}_q3": s.q3})
        rows.append(row)
    return rows


def write_bench_summary(path, reports) -> list[dict]:
    rows = bench_summary(reports)
    with open(path, "w", newline="") as fh:
        fh.write(HEADER_NOTE + "\n")
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return rows


# ------------------------------------------------------------------------ ablate

ABLATE_PHASES = ("generate_ms", "smooth_ms", "inference_ms", "setup_ms", "solve_ms", "total_ms",
                 "iterations")


def _ablate_instance(config, N, seed, method, rank, model):
    t0 = time.perf_counter()
    inst = make_instance(config.family, N, seed, config.jitter)
    t1 = time.perf_counter()
    stream = instance_streams(seed)[2]
    S = generate_smoothed_vectors(inst.A, N, config.s1, config.omega, seed=stream,
                                  boundary_mask=inst.mesh.boundary_mask).S
    t2 = time.perf_counter()
    U = svd_oracle(S).left_vectors[:, :rank] if method == "svd" else predict_basis(model, S, rank)
    t3 = time.perf_counter()
    M = build_preconditioner(inst.A, U, config.omega, config.nu1, config.nu2)
    _, rep = pcg(inst.A, inst.rhs, M, config.delta)
    t4 = time.perf_counter()
    return {"generate_ms": 1e3 * (t1 - t0), "smooth_ms": 1e3 * (t2 - t1),
            "inference_ms": 1e3 * (t3 - t2), "setup_ms": M.setup_ms,
            "solve_ms": rep.solve_ms, "total_ms": 1e3 * (t4 - t0),
            "iterations": rep.iterations, "converged": rep.converged}


def cmd_ablate(config: ExperimentConfig) -> list[dict]:
    """Scaling sweep with K = N and r = K/2; timings include generating A."""
    if config.ablate_instances < 2:
        raise ConfigError("ablate_instances must be at least 2 for a standard deviation")
    methods = [m for m in config.methods if m in ("svd", "nlss")]
    if not methods:
        raise ConfigError("ablation compares svd and/or nlss")
    rows = []
    for N in config.ablate_N:
        K, r = N, max(1, N // 2)
        model = None
        if "nlss" in methods:
            data = []
            for seed in range(config.seed, config.seed + config.ablate_train_size):
                inst = make_instance(config.family, N, seed, config.jitter)
                stream = instance_streams(seed)[2]
                data.append(generate_smoothed_vectors(inst.A, K, config.s1, config.omega,
                                                      seed=stream,
                                                      boundary_mask=inst.mesh.boundary_mask).S)
            tcfg = TrainConfig(rank=K, epochs=config.ablate_epochs,
                               learning_rate=config.learning_rate,
                               batch_size=config.batch_size, seed=config.train_seed,
                               loss="nlss", hidden=SMALL_HIDDEN)
            model = fit_model(data, tcfg).model
        seeds = [config.seed + config.test_seed_offset + i for i in range(config.ablate_instances)]
        for method in methods:
            runs = map_instances(lambda s: _ablate_instance(config, N, s, method, r, model), seeds)
            row = {"N": N, "K": K, "r": r, "method": method, "instances": len(runs),
                   "converged": sum(x["converged"] for x in runs)}
            for phase in ABLATE_PHASES:
                s = summarize([x[phase] for x in runs])
                row[f"{phase}_mean"], row[f"{phase}_std"] = s.mean, s.std
            rows.append(row)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablate.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _run_manifest(config, "ablate")
    return rows
