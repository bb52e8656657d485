import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from exp4policy.bench import WelfareReport
from exp4policy.cli import ConfigError, main, parse_config, summarize

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_harding_command(capsys):
    assert main(["harding", "--t", "177", "--j", "2"]) == 0
    assert capsys.readouterr().out.strip() == "31154"
    assert main(["harding", "--t", "1", "--j", "2"]) == 3


def test_difficulty_command(capsys):
    assert main(["difficulty", "--sigma-grid", "0", "0.5", "--n-mc", "100000"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "sigma,difficulty,se"
    assert lines[1].startswith("0.0,0.0,")


def test_difficulty_experiment_writes_six_rows(tmp_path):
    out = tmp_path / "diff"
    cfg = CONFIGS / "difficulty.yaml"
    assert main(["run", str(cfg), "--set", "n_mc=100000", "--output", str(out)]) == 0
    rows = _rows(out / "difficulty.csv")
    assert [float(r["sigma"]) for r in rows] == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
    assert float(rows[0]["difficulty"]) == 0.0
    assert all(float(r["se"]) >= 0 for r in rows)
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"config", "version", "wall_time_s"} <= set(manifest)


def test_enumerate_experiment_writes_fourteen_cells(tmp_path):
    out = tmp_path / "enum"
    assert main(["run", str(CONFIGS / "enumerate_four_points.yaml"), "--output", str(out)]) == 0
    rows = _rows(out / "catalog.csv")
    assert len(rows) == 14
    flip = str.maketrans("+-", "-+")
    labels = {r["label"] for r in rows}
    assert {lab.translate(flip) for lab in labels} == labels


def test_enumerate_command(tmp_path, capsys):
    pts = tmp_path / "pts.csv"
    pts.write_text("x1,x2\n0.12,0.81\n0.47,0.33\n0.78,0.64\n0.31,0.12\n")
    assert main(["enumerate", str(pts), "--dim", "2", "--output", str(tmp_path / "cat.csv")]) == 0
    assert len(_rows(tmp_path / "cat.csv")) == 14
    assert main(["enumerate", str(pts), "--dim", "3"]) == 3


def _small_vc(tmp_path, reps, out):
    return _write_config(tmp_path, {
        "experiment": "Benchmarks",
        "environment": {"kind": "lognormal", "sigma": 0.1, "covariates": "fixed", "covariate_seed": 7},
        "T": 200,
        "seeds": {"base": 11, "replications": reps},
        "estimators": ["VcExp4p", "TauEwm", "TreatNone"],
        "catalog_cache": str(tmp_path / "cache"),
        "output": str(out),
    }, name=f"small{reps}.yaml")


def test_replication_outputs_do_not_depend_on_count(tmp_path):
    one, two = tmp_path / "one", tmp_path / "two"
    assert main(["run", str(_small_vc(tmp_path, 1, one))]) == 0
    assert main(["run", str(_small_vc(tmp_path, 2, two))]) == 0
    for est in ("VcExp4p", "TauEwm", "TreatNone"):
        name = f"reports/rep0000_{est}.json"
        assert (one / name).read_bytes() == (two / name).read_bytes()
    a = (one / "aggregate.csv").read_text().splitlines()
    b = (two / "aggregate.csv").read_text().splitlines()
    assert b[: len(a)] == a and len(b) == 2 * len(a) - 1


def test_existing_output_needs_force(tmp_path, capsys):
    out = tmp_path / "d"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    cfg = CONFIGS / "difficulty.yaml"
    assert main(["run", str(cfg), "--set", "n_mc=100000", "--output", str(out)]) == 2
    assert "--force" in capsys.readouterr().err
    assert (out / "keep.txt").exists()
    assert main(["run", str(cfg), "--set", "n_mc=100000", "--output", str(out), "--force"]) == 0
    assert not (out / "keep.txt").exists() and (out / "difficulty.csv").exists()


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("experiment: VcExp4p\nT: 100\nbogus: 1\n", "cfg.yaml:3: field 'bogus'"),
        ("experiment: VcExp4p\nT: abc\n", "cfg.yaml:2: field 'T'"),
        ("experiment: VcExp4p\nT: 100\nseeds:\n  replications: 0\n", "cfg.yaml:4: field 'seeds.replications'"),
        ("experiment: VcExp4p\nT: 100\ntuning:\n  eta: -1\n", "cfg.yaml:4: field 'tuning.eta'"),
        ("experiment: Magic\n", "cfg.yaml:1: field 'experiment'"),
        ("experiment: VcExp4p\nT: [1, 2\n", "cfg.yaml:3"),
        ("experiment: VcExp4p\n", "missing field 'T'"),
        ("experiment: FExp4p\nT: 100\nexperts:\n  - uniform\n  - les: [1, 2]\n", "cfg.yaml:5: field 'experts.1'"),
    ],
)
def test_config_errors_exit_two_with_location(tmp_path, capsys, text, fragment):
    path = tmp_path / "cfg.yaml"
    path.write_text(text)
    assert main(["run", str(path), "--output", str(tmp_path / "out")]) == 2
    assert fragment in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_set_overrides_fields():
    cfg = parse_config("experiment: VcExp4p\nT: 100\n", overrides=["T=250", "tuning.eta=1.5"])
    assert cfg.raw["T"] == 250 and cfg.raw["tuning"] == {"eta": 1.5}
    with pytest.raises(ConfigError):
        parse_config("experiment: VcExp4p\n", overrides=["T"])


def test_invalid_table_leaves_no_output(tmp_path, capsys):
    table = tmp_path / "t.csv"
    rows = "\n".join(f"{x:.3f},{0.5 + x:.3f},{0.2:.3f}" for x in np.linspace(0, 1, 300))
    table.write_text("x1,y1,y2\n" + rows + "\n")
    cfg = _write_config(tmp_path, {
        "experiment": "VcExp4p",
        "environment": {"kind": "csv", "path": "t.csv"},
        "T": 300,
        "M": 1.0,  # outcomes reach 1.5
    })
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output", str(out)]) in (2, 3)
    assert not out.exists()
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".out-")]
    assert "row" in capsys.readouterr().err


def _report(tmp_path, i, welfare, T=10, K=2, est="VcExp4p"):
    rep = WelfareReport(est, i, T, K, float(welfare))
    path = tmp_path / f"rep{i:04d}_{est}.json"
    path.write_text(rep.to_json())
    return str(path)


def test_summarize_examples(tmp_path, capsys):
    paths = [_report(tmp_path, i, w) for i, w in enumerate([1, 2, 3, 4])]
    (row,) = summarize(paths)
    assert row["q50"] == 2.5 and row["mean"] == 2.5 and row["q0"] == 1 and row["q100"] == 4
    (single,) = summarize(paths[:1])
    assert {single[f"q{q}"] for q in (0, 10, 25, 50, 75, 90, 100)} == {1.0}
    assert main(["summarize", str(tmp_path / "*.json")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("estimator,n,q0") and out[1].startswith("VcExp4p,4,1.0")


def test_summarize_rejects_mixed_horizons(tmp_path, capsys):
    _report(tmp_path, 0, 1.0, T=10)
    _report(tmp_path, 1, 1.0, T=20)
    assert main(["summarize", str(tmp_path / "*.json")]) == 3
    assert "T=20" in capsys.readouterr().err
    assert main(["summarize", str(tmp_path / "nothing*.json")]) == 3


def test_summarize_matches_sampling_quantiles(tmp_path):
    n = 1000
    vals = np.random.default_rng(4).random(n)
    paths = [_report(tmp_path, i, v) for i, v in enumerate(vals)]
    (row,) = summarize(paths)
    for q in (10, 25, 50, 75, 90):
        p = q / 100
        assert abs(row[f"q{q}"] - p) <= 3 * np.sqrt(p * (1 - p) / n)  # uniform density is 1
    assert abs(row["mean"] - 0.5) <= 3 * np.sqrt(1 / 12 / n)


config_values = st.fixed_dictionaries(
    {
        "experiment": st.sampled_from(["FExp4p", "VcExp4p", "Benchmarks", "Difficulty", "Nope"]),
        "T": st.one_of(st.integers(-5, 90), st.text(max_size=3)),
        "delta": st.one_of(st.floats(-1, 2, allow_nan=False), st.just("x")),
        "seeds": st.fixed_dictionaries({"base": st.integers(0, 5), "replications": st.integers(-1, 2)}),
        "tuning": st.fixed_dictionaries({"eta": st.floats(-1, 3, allow_nan=False)}),
        "environment": st.fixed_dictionaries({"sigma": st.floats(-0.5, 0.5, allow_nan=False)}),
        "experts": st.lists(st.one_of(st.just("uniform"), st.fixed_dictionaries({"arm": st.integers(0, 3)})), max_size=3),
        "sigma_grid": st.lists(st.floats(0, 1), max_size=2),
        "n_mc": st.sampled_from([10, 100000]),
    }
)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(config_values)
def test_config_fuzz_fails_cleanly(tmp_path, data):
    path = _write_config(tmp_path, data, name="fuzz.yaml")
    out = tmp_path / "fuzz_out"
    code = main(["run", str(path), "--output", str(out), "--force"])
    assert code in (0, 2, 3)
    if code != 0:
        assert not out.exists() or (out / "manifest.json").exists()  # only a previous success may remain
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".fuzz_out-")]


def test_atomic_output_discards_partial_writes(tmp_path):
    from exp4policy.cli import atomic_output

    def writer(tmp):
        (tmp / "aggregate.csv").write_text("half")
        raise RuntimeError("interrupted")

    with pytest.raises(RuntimeError):
        atomic_output(tmp_path / "res", False, writer)
    assert list(tmp_path.iterdir()) == []
