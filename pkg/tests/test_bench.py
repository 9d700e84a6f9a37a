import hashlib
from pathlib import Path

import pytest

from subspace_amg.bench import commands
from subspace_amg.bench.cli import main
from subspace_amg.bench.config import ExperimentConfig, load_config, save_config
from subspace_amg.bench.stats import quantile, summarize
from subspace_amg.bench.svg import line_band_svg
from subspace_amg.errors import ConfigError


def small_config(tmp_path, **kw):
    base = dict(N=5, K=6, ranks=[2, 4, 6], train_size=6, test_size=4, epochs=3,
                batch_size=3, bench_ranks=[3], bench_instances=2, out_dir=str(tmp_path / "run"))
    base.update(kw)
    return ExperimentConfig(**base)


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# -- config ----------------------------------------------------------------

def test_config_file_and_overrides(tmp_path):
    (tmp_path / "c.ini").write_text("[experiment]\nfamily = anisotropic\nN = 7\nranks = 2,4\n")
    cfg = load_config(tmp_path / "c.ini", ["K=8", "methods=svd,sa", "bench_ranks=4"])
    assert (cfg.family, cfg.N, cfg.K, cfg.ranks, cfg.methods) == (
        "anisotropic", 7, 8, [2, 4], ["svd", "sa"])
    save_config(tmp_path / "d.ini", cfg)
    assert load_config(tmp_path / "d.ini") == cfg


@pytest.mark.parametrize("bad", [{"family": "diffusion,anisotropic"}, {"ranks": [40]},
                                 {"methods": ["gnn"]}, {"test_seed_offset": 3},
                                 {"jitter": 0.6}])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_config_unknown_key():
    with pytest.raises(ConfigError):
        load_config(None, ["colour=blue"])


def test_disjoint_seeds():
    cfg = ExperimentConfig(train_size=50, test_size=20)
    assert not set(cfg.train_seeds()) & set(cfg.test_seeds())


# -- stats / svg -----------------------------------------------------------

def test_lower_quantiles():
    v = [5.0, 1.0, 4.0, 2.0]
    assert quantile(v, 0.5) == 2.0
    s = summarize(v)
    assert (s.q1, s.median, s.q3) == (1.0, 2.0, 4.0)
    assert s.mean == 3.0 and s.count == 4


def test_svg_renders():
    svg = line_band_svg([1, 2, 3], {"a": ([0, 1, 2], [0, 0, 1], [1, 2, 3])}, title="t<")
    assert svg.startswith("<svg") and "t&lt;" in svg and "polyline" in svg


# -- commands --------------------------------------------------------------

def test_gen_counts_and_determinism(tmp_path):
    cfg = small_config(tmp_path, train_size=5, test_size=2)
    dirs = commands.cmd_gen(cfg)
    assert len(dirs) == 7
    root = Path(cfg.out_dir) / "corpus"
    first = tree_digest(root)
    commands.cmd_gen(cfg)
    assert tree_digest(root) == first
    man = (root / "manifest.txt").read_text()
    assert "train_seeds = 0,1,2,3,4" in man


def test_full_pipeline(tmp_path):
    cfg = small_config(tmp_path)
    commands.cmd_gen(cfg)
    ckpts = commands.cmd_train(cfg)
    assert set(ckpts) == {"nlss", "subspace"}
    curves = commands.cmd_energy(cfg)
    by = {c.method: c for c in curves}
    assert by["svd"].median == [0.0, 0.0, 0.0]
    back = commands.read_energy_csv(Path(cfg.out_dir) / "energy.csv")
    assert [(c.method, c.median, c.q1, c.q3) for c in back] == \
        [(c.method, c.median, c.q1, c.q3) for c in curves]
    assert (Path(cfg.out_dir) / "energy.svg").exists()
    reports = commands.cmd_bench(cfg)
    assert {r.method for r in reports} == {"cg", "nlss", "subspace", "svd", "sa"}
    assert all(r.converged for r in reports)
    rows = commands.read_reports(Path(cfg.out_dir) / "bench.csv")
    assert len(rows) == len(reports)
    assert [float(r["total_ms"]) for r in rows] == [r.total_ms for r in reports]
    summary = commands.bench_summary(reports)
    assert any(row["n_c"] == "emergent" for row in summary)


def test_energy_missing_checkpoint(tmp_path):
    cfg = small_config(tmp_path, train_size=2, test_size=1)
    commands.cmd_gen(cfg)
    with pytest.raises(ConfigError):
        commands.cmd_energy(cfg)


def test_checkpoint_reload_reproduces_energy(tmp_path):
    cfg = small_config(tmp_path, methods=["nlss"])
    commands.cmd_gen(cfg)
    commands.cmd_train(cfg)
    a = commands.cmd_energy(cfg)
    b = commands.cmd_energy(cfg)
    assert [c.median for c in a] == [c.median for c in b]


def test_bench_records_failures(tmp_path, monkeypatch):
    cfg = small_config(tmp_path, methods=["svd"], train_size=1, test_size=1, bench_instances=1)
    commands.cmd_gen(cfg)

    def broken(A, U, *a, **k):
        from subspace_amg.errors import NotSPDError
        raise NotSPDError("forced")

    monkeypatch.setattr(commands, "build_preconditioner", broken)
    reports = commands.cmd_bench(cfg)
    svd = [r for r in reports if r.method == "svd"]
    assert svd and not svd[0].converged


def test_ablate_structure(tmp_path):
    cfg = small_config(tmp_path, methods=["svd", "nlss"], ablate_N=[4, 6],
                       ablate_instances=3, ablate_train_size=3, ablate_epochs=1)
    rows = commands.cmd_ablate(cfg)
    assert [(r["N"], r["method"]) for r in rows] == [(4, "svd"), (4, "nlss"),
                                                     (6, "svd"), (6, "nlss")]
    for r in rows:
        assert r["K"] == r["N"] and r["r"] == r["N"] // 2
        assert r["total_ms_mean"] >= r["generate_ms_mean"] > 0


def test_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv(commands.THREADS_ENV, "2")
    assert commands.map_instances(lambda x: x * x, range(5)) == [0, 1, 4, 9, 16]
    monkeypatch.setenv(commands.THREADS_ENV, "lots")
    with pytest.raises(ConfigError):
        commands.worker_count()


# -- CLI -------------------------------------------------------------------

def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "cli")
    assert main(["gen", "--out-dir", out, "--N", "4", "--K", "4", "-s", "ranks=2",
                 "-s", "bench_ranks=2", "--train-size", "2", "--test-size", "1"]) == 0
    assert main(["gen", "--family", "diffusion,anisotropic", "--out-dir", out]) == 1
    assert main(["energy", "--out-dir", str(tmp_path / "nowhere"), "--K", "4",
                 "-s", "ranks=2", "-s", "bench_ranks=2"]) == 1
    assert main(["verify"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_runtime_failure(tmp_path, monkeypatch):
    def boom(config):
        raise RuntimeError("disk on fire")

    monkeypatch.setitem(__import__("subspace_amg.bench.cli", fromlist=["COMMANDS"]).COMMANDS,
                        "gen", boom)
    assert main(["gen", "--out-dir", str(tmp_path)]) == 2
