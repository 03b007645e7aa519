import csv
import json
import math
import sys

import pytest

from oracles import exhaustive_accurate, real_error_mp, surrogate_err
from paretune.cli import load_config, main
from paretune.param_space import build_search_space
from paretune.synth_sim import true_optimum


def write_config(tmp_path, config_dir, name="small_interface.json", **overrides):
    cfg = json.loads((config_dir / name).read_text())
    for dotted, value in overrides.items():
        node = cfg
        *parents, leaf = dotted.split("__")
        for p in parents:
            node = node.setdefault(p, {})
        if value is None:
            node.pop(leaf, None)
        else:
            node[leaf] = value
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_tune_writes_outputs(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir)
    out = tmp_path / "out"
    code, stdout, _ = run(["tune", cfg, "--out", out], capsys)
    assert code == 0
    assert "chosen" in stdout
    report = json.loads((out / "report.json").read_text())
    (res,) = report["results"]
    for key in ("variant", "chosen", "predicted_seconds", "alpha_interval", "frontier", "samples_used", "wall_time_s", "baseline"):
        assert key in res
    chosen = res["chosen"]
    assert res["frontier"][0]["rank"] == 1
    assert {k: res["frontier"][0][k] for k in ("alpha", "cutoff", "order", "grid")} == chosen
    assert res["alpha_interval"][0] <= chosen["alpha"] <= res["alpha_interval"][1]
    samples = read_csv(out / "samples.csv")
    assert len(samples) == res["samples_used"]
    frontier = read_csv(out / "frontier.csv")
    assert list(frontier[0]) == ["rank", "predicted_seconds", "alpha", "cutoff", "order", "nx", "ny", "nz", "extrapolated"]
    assert len(frontier) == res["frontier_size"] == len(res["frontier"])
    assert b"\r" not in (out / "frontier.csv").read_bytes()
    assert res["baseline"]["accurate"] is True and res["baseline"]["speedup"] > 1


def test_tune_rank1_equals_true_optimum_noise_free(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir, synthetic__noise_frac=0.0)
    out = tmp_path / "o"
    assert run(["tune", cfg, "--out", out], capsys)[0] == 0
    chosen = json.loads((out / "report.json").read_text())["results"][0]["chosen"]
    c = load_config(cfg)
    opt = true_optimum(build_search_space(c.system, c.ranges), c.accuracy, c.synthetic)
    assert (chosen["alpha"], chosen["cutoff"], chosen["order"], tuple(chosen["grid"])) == (
        opt.alpha, opt.cutoff, opt.order, opt.grid.shape)


def test_tune_deterministic_across_runs_and_jobs(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir)
    blobs = []
    for i, jobs in enumerate((1, 1, 4)):
        out = tmp_path / f"run{i}"
        assert run(["tune", cfg, "--out", out, "--jobs", jobs], capsys)[0] == 0
        blobs.append(((out / "report.json").read_bytes(), (out / "samples.csv").read_bytes()))
    assert blobs[0] == blobs[1] == blobs[2]


def test_report_floats_have_six_digits(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir)
    run(["tune", cfg, "--out", tmp_path / "o"], capsys)

    def walk(x):
        if isinstance(x, float):
            assert float(f"{x:.6g}") == x
        elif isinstance(x, dict):
            for v in x.values():
                walk(v)
        elif isinstance(x, list):
            for v in x:
                walk(v)

    text = (tmp_path / "o" / "report.json").read_text()
    walk(json.loads(text))
    keys = list(json.loads(text)["results"][0])
    assert keys == sorted(keys)


def test_zero_threshold_exit_3(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir, accuracy={"mode": "combined", "threshold": 0})
    out = tmp_path / "o"
    code, _, err = run(["tune", cfg, "--out", out], capsys)
    assert code == 3
    assert "EmptyAccurateSubspace" in err and "partition" in err
    assert not out.exists() or not any(out.iterdir())


def test_missing_config_exit_2(tmp_path, capsys):
    code, _, err = run(["tune", tmp_path / "nope.json"], capsys)
    assert code == 2 and "not found" in err


@pytest.mark.parametrize(
    "override",
    [
        {"schema": 2},
        {"accuracy": {"mode": "fancy"}},
        {"sampler": {"kind": "magic"}},
        {"variants": ["xx"]},
        {"system__n_particles": 0},
        {"synthetic__noise_frac": 0.5},
        {"ranges__cutoff_step": -1},
        {"adaptive__bogus": 1},
    ],
)
def test_bad_config_exit_2(tmp_path, config_dir, capsys, override):
    cfg = write_config(tmp_path, config_dir, **override)
    code, _, err = run(["tune", cfg, "--out", tmp_path / "o"], capsys)
    assert code == 2
    assert "config" in err


def test_malformed_json_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    assert run(["partition", p], capsys)[0] == 2


def test_external_sampler_failure_exit_4_no_outputs(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir, sampler={"kind": "external", "template": "exit 7"})
    out = tmp_path / "o"
    code, _, err = run(["tune", cfg, "--out", out], capsys)
    assert code == 4
    assert "SpawnError" in err and "sampling" in err
    assert not (out / "report.json").exists()


def test_external_sampler_end_to_end(tmp_path, config_dir, capsys):
    # a stand-in executable that prints a noise-free synthetic time
    script = tmp_path / "fake_md.py"
    script.write_text(
        "import sys\n"
        "rc, p, nx, ny, nz, phase = float(sys.argv[1]), int(sys.argv[2]), *map(int, sys.argv[3:6]), sys.argv[6]\n"
        "recip = {2: 0.116, 3: 0.391, 4: 0.927, 5: 1.81, 6: 3.128}[p] + 8.33e-5 * nx * ny * nz\n"
        "recip += (0.5 if nz >= 8 else 0.0) + 0.05 * rc\n"
        "t = 0.44 + 0.0565 * rc ** 3 if phase == 'real' else recip\n"
        "print(f'Loop time of {t:.10f} on 8 procs')\n"
    )
    template = f"{sys.executable} {script} {{cutoff}} {{order}} {{nx}} {{ny}} {{nz}} {{phase}}"
    cfg = write_config(tmp_path, config_dir,
                       sampler={"kind": "external", "template": template, "parser_regex": r"Loop time of ([0-9.]+)"},
                       synthetic__noise_frac=0.0)
    out = tmp_path / "o"
    code, stdout, err = run(["tune", cfg, "--out", out, "--jobs", 4], capsys)
    assert code == 0, err
    ext = json.loads((out / "report.json").read_text())["results"][0]
    out2 = tmp_path / "o2"
    synth_cfg = write_config(tmp_path, config_dir, synthetic__noise_frac=0.0)
    assert run(["tune", synth_cfg, "--out", out2], capsys)[0] == 0
    syn = json.loads((out2 / "report.json").read_text())["results"][0]
    assert ext["chosen"] == syn["chosen"]
    assert ext["samples_used"] == syn["samples_used"]


def test_partition_infinite_thresholds(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir, accuracy={"mode": "split", "real_threshold": "inf", "recip_threshold": "inf"},
                       ranges__cutoff_step=0.5)
    out = tmp_path / "o"
    code, stdout, _ = run(["partition", cfg, "--out", out], capsys)
    assert code == 0
    c = load_config(cfg)
    space = build_search_space(c.system, c.ranges)
    rows = read_csv(out / "subspace.csv")
    assert len(rows) == space.n_perf_points
    assert all(float(r["alpha_lo"]) == 0.01 and float(r["alpha_hi"]) == 1.0 for r in rows)
    assert list(rows[0]) == ["cutoff", "nx", "ny", "nz", "order", "alpha_lo", "alpha_hi", "on_frontier"]
    assert f"accurate {space.n_perf_points}" in stdout


@pytest.mark.parametrize("accuracy", [
    {"mode": "split", "real_threshold": 1e-3, "recip_threshold": 1e-3},
    {"mode": "combined", "threshold": 5e-4},
])
def test_partition_counts_match_exhaustive_scan(tmp_path, config_dir, capsys, accuracy):
    ranges = {"alpha_min": 0.05, "alpha_max": 1.0, "alpha_step": 0.05, "cutoff_step": 0.25}
    cfg = write_config(tmp_path, config_dir, accuracy=accuracy, ranges=ranges)
    out = tmp_path / "o"
    assert run(["partition", cfg, "--out", out], capsys)[0] == 0
    c = load_config(cfg)
    s = c.system
    space = build_search_space(s, c.ranges)
    if accuracy["mode"] == "split":
        accept = lambda r, k: r <= 1e-3 and k <= 1e-3
    else:
        accept = lambda r, k: math.hypot(r, k) <= 5e-4
    oracle = exhaustive_accurate(
        space.alphas, space.cutoffs, [g.shape for g in space.grids], space.orders,
        lambda a, rc: float(real_error_mp(a, rc, s.dispersion_coeff, s.n_particles, s.volume)),
        lambda a, g, p: surrogate_err(0.01, a, s.dims, g, p),
        accept,
    )
    rows = read_csv(out / "subspace.csv")
    got = {(float(r["cutoff"]), (int(r["nx"]), int(r["ny"]), int(r["nz"])), int(r["order"])) for r in rows}
    assert got == set(oracle)
    assert any(r["on_frontier"] == "true" for r in rows)


def test_predict_from_noise_free_samples(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir, synthetic__noise_frac=0.0)
    run(["tune", cfg, "--out", tmp_path / "t"], capsys)
    samples = tmp_path / "t" / "samples.csv"
    outs = []
    for i in range(2):
        out = tmp_path / f"p{i}"
        assert run(["predict", cfg, samples, "--out", out], capsys)[0] == 0
        outs.append((out / "report.json").read_bytes())
    assert outs[0] == outs[1]
    chosen = json.loads(outs[0])["results"][0]["chosen"]
    c = load_config(cfg)
    opt = true_optimum(build_search_space(c.system, c.ranges), c.accuracy, c.synthetic)
    assert (chosen["cutoff"], chosen["order"], tuple(chosen["grid"])) == (opt.cutoff, opt.order, opt.grid.shape)


def test_predict_empty_samples_exit_2(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir)
    samples = tmp_path / "s.csv"
    samples.write_text("alpha,cutoff,order,nx,ny,nz,phase,seconds\n")
    code, _, err = run(["predict", cfg, samples, "--out", tmp_path / "o"], capsys)
    assert code == 2 and "MissingCoverage" in err


def test_predict_missing_order_exit_2(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir)
    run(["tune", cfg, "--out", tmp_path / "t"], capsys)
    rows = (tmp_path / "t" / "samples.csv").read_text().splitlines()
    kept = [r for r in rows if not r.split(",")[2] == "3" or r.startswith("alpha")]
    samples = tmp_path / "s.csv"
    samples.write_text("\n".join(kept) + "\n")
    code, _, err = run(["predict", cfg, samples, "--out", tmp_path / "o"], capsys)
    assert code == 2 and "MissingCoverage" in err


def test_two_variants_get_separate_files(tmp_path, config_dir, capsys):
    cfg = write_config(tmp_path, config_dir, variants=["ad", "ik"], reciprocal_error={"model": "surrogate", "ck": {"ad": 0.02, "ik": 0.01}})
    out = tmp_path / "o"
    assert run(["tune", cfg, "--out", out], capsys)[0] == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["frontier_ad.csv", "frontier_ik.csv", "report.json", "samples_ad.csv", "samples_ik.csv"]
    res = json.loads((out / "report.json").read_text())["results"]
    assert [r["variant"] for r in res] == ["ad", "ik"]


def test_tabulated_model_config(tmp_path, config_dir, capsys):
    c = load_config(write_config(tmp_path, config_dir, ranges={"alpha_min": 0.1, "alpha_max": 0.5, "alpha_step": 0.1}))
    space = build_search_space(c.system, c.ranges)
    table = tmp_path / "recip.csv"
    with open(table, "w") as fh:
        fh.write("nx,ny,nz,order,alpha,recip_err\n")
        for g in space.grids:
            for p in space.orders:
                for a in space.alphas:
                    fh.write(f"{g.nx},{g.ny},{g.nz},{p},{a},{surrogate_err(0.01, a, c.system.dims, g.shape, p)!r}\n")
    cfg_tab = write_config(tmp_path, config_dir, ranges={"alpha_min": 0.1, "alpha_max": 0.5, "alpha_step": 0.1},
                           reciprocal_error={"model": "tabulated", "path": str(table)})
    assert run(["partition", cfg_tab, "--out", tmp_path / "a"], capsys)[0] == 0
    cfg_sur = write_config(tmp_path, config_dir, ranges={"alpha_min": 0.1, "alpha_max": 0.5, "alpha_step": 0.1})
    assert run(["partition", cfg_sur, "--out", tmp_path / "b"], capsys)[0] == 0
    assert (tmp_path / "a" / "subspace.csv").read_bytes() == (tmp_path / "b" / "subspace.csv").read_bytes()


def test_module_entry_point(tmp_path, config_dir):
    import subprocess

    cfg = write_config(tmp_path, config_dir)
    proc = subprocess.run([sys.executable, "-m", "paretune", "partition", str(cfg), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
