import csv
import shutil
from pathlib import Path

import pytest
from pipeline import build_references, digest_tree, full_pipeline, run, write_predictions

from tsdbench.challenges import ChallengeType, read_manifest
from tsdbench.cli import main
from tsdbench.datasets import make_reference_sequence
from tsdbench.imaging import load_sequence, save_sequence
from tsdbench.metrics import aggregate_by_type, read_metrics_csv, write_metrics_csv
from tsdbench.spectral import read_stats_csv


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def pipeline_root(tmp_path_factory):
    """Complete run over 2 references (10 frames, 32x32, ppm)."""
    return full_pipeline(tmp_path_factory.mktemp("cli"), seed=7)


@pytest.fixture
def refs3(tmp_path):
    gts = build_references(tmp_path, n_refs=3, n_frames=2, size=16)
    return tmp_path, gts


# -- synth -----------------------------------------------------------------


def test_synth_three_refs_full_grid(refs3):
    root, _ = refs3
    assert main(["synth", "--input", str(root / "refs"), "--out", str(root / "s"), "--format", "ppm"]) == 0
    rows = read_manifest(root / "s" / "manifest.csv")
    assert len(rows) == 3 * 12 * 5
    assert {(r.ref_id, r.challenge_name, r.level) for r in rows} == {
        (f"ref{i:03d}", t.slug, lv) for i in range(3) for t in ChallengeType for lv in range(1, 6)
    }
    for r in rows[:5]:
        seq = load_sequence(root / "s" / r.path)
        assert seq.frames.shape == (2, 16, 16, 3)
    assert (root / "s" / "config.txt").is_file()


def test_synth_subset_of_types_and_levels(refs3):
    root, _ = refs3
    code = main(["synth", "--input", str(root / "refs"), "--out", str(root / "s"),
                 "--types", "noise,3", "--levels", "1,5", "--format", "ppm"])
    assert code == 0
    rows = read_manifest(root / "s" / "manifest.csv")
    assert {r.challenge_name for r in rows} == {"noise", ChallengeType(3).slug}
    assert {r.level for r in rows} == {1, 5}
    assert len(rows) == 3 * 2 * 2


def test_synth_compose_one_sequence_per_ref(refs3):
    root, _ = refs3
    code = main(["synth", "--input", str(root / "refs"), "--out", str(root / "c"),
                 "--compose", "rain:5,exposure:1", "--format", "ppm"])
    assert code == 0
    rows = read_manifest(root / "c" / "manifest.csv")
    assert len(rows) == 3
    assert all(r.is_composite for r in rows)
    assert [s.kind for s in rows[0].specs()] == [ChallengeType.RAIN, ChallengeType.EXPOSURE]


def test_synth_rejects_level_zero(refs3, capsys):
    root, _ = refs3
    assert main(["synth", "--input", str(root / "refs"), "--out", str(root / "s"), "--levels", "0"]) == 2
    assert "level 0" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["synth", "--levels", "1-6"],
        ["synth", "--types", "fog"],
        ["synth", "--format", "jpg"],
        ["synth", "--bogus"],
        ["frobnicate"],
        [],
    ],
)
def test_usage_errors_exit_2(refs3, argv):
    root, _ = refs3
    if argv and argv[0] == "synth":
        argv = argv + ["--input", str(root / "refs"), "--out", str(root / "s")]
    assert main(argv) == 2


def test_missing_input_exits_3(tmp_path):
    assert main(["synth", "--input", str(tmp_path / "nope"), "--out", str(tmp_path / "s")]) == 3


def test_missing_required_option_is_usage_error(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "s")]) == 2


def test_unknown_config_key_exits_2(refs3):
    root, _ = refs3
    (root / "run.cfg").write_text("colour=blue\n")
    assert main(["synth", "--config", str(root / "run.cfg"), "--input", str(root / "refs"),
                 "--out", str(root / "s")]) == 2


def test_flags_override_config_file(refs3):
    root, _ = refs3
    (root / "run.cfg").write_text(
        f"# synthesis run\ninput={root / 'refs'}\nseed=11\ntypes=noise\nlevels=1-5\nformat=ppm\n"
    )
    code = main(["synth", "--config", str(root / "run.cfg"), "--levels", "2", "--out", str(root / "s")])
    assert code == 0
    rows = read_manifest(root / "s" / "manifest.csv")
    assert {(r.challenge_name, r.level) for r in rows} == {("noise", 2)}
    echoed = (root / "s" / "config.txt").read_text().splitlines()
    assert "seed=11" in echoed and "levels=2" in echoed and "types=noise" in echoed


def test_synth_refuses_to_overwrite(refs3):
    root, _ = refs3
    argv = ["synth", "--input", str(root / "refs"), "--out", str(root / "s"), "--types", "noise",
            "--levels", "1", "--format", "ppm"]
    assert main(argv) == 0
    assert main(argv) == 3


# -- split -----------------------------------------------------------------


def test_split_command(tmp_path, capsys):
    for i in range(49):
        (tmp_path / "refs" / f"v{i:02d}").mkdir(parents=True)
    assert main(["split", "--input", str(tmp_path / "refs"), "--out", str(tmp_path / "o"), "--seed", "1"]) == 0
    rows = read_rows(tmp_path / "o" / "split.csv")
    assert sum(r["split"] == "train" for r in rows) == 34
    assert sum(r["split"] == "test" for r in rows) == 15
    out = capsys.readouterr().out
    assert "34 train / 15 test" in out and "170 train / 75 test" in out


# -- evaluate --------------------------------------------------------------


def test_perfect_detector_has_no_degradation(refs3):
    root, gts = refs3
    run("synth", "--input", root / "refs", "--out", root / "s", "--types", "noise,rain",
        "--levels", "1-5", "--format", "ppm")
    write_predictions(root, gts, root / "s" / "manifest.csv",
                      detector=lambda gt, level: [g for g in gt])
    run("evaluate", "--manifest", root / "s" / "manifest.csv", "--gt", root / "gt",
        "--pred", root / "pred", "--out", root / "e")
    records = read_metrics_csv(root / "e" / "metrics.csv")
    assert len(records) == 1 + 2 * 5
    assert all(r.precision == 1.0 and r.recall == 1.0 for r in records)
    drops = [v for row in read_rows(root / "e" / "degradation.csv") for k, v in row.items() if k.endswith("_drop")]
    assert all(v == "" or float(v) == 0.0 for v in drops) and any(v != "" for v in drops)
    assert all(float(r["avg_degradation_pct"]) == 0.0 for r in read_rows(root / "e" / "types.csv"))


def _evaluate_setup(root, gts):
    run("synth", "--input", root / "refs", "--out", root / "s", "--types", "noise",
        "--levels", "1-2", "--format", "ppm")
    write_predictions(root, gts, root / "s" / "manifest.csv")
    return ["evaluate", "--manifest", str(root / "s" / "manifest.csv"), "--gt", str(root / "gt"),
            "--pred", str(root / "pred"), "--out", str(root / "e")]


def test_missing_prediction_exits_4_and_leaves_cell_empty(refs3, capsys):
    root, gts = refs3
    argv = _evaluate_setup(root, gts)
    victim = root / "pred" / f"{Path(read_manifest(root / 's' / 'manifest.csv')[0].path).name}.txt"
    victim.unlink()
    assert main(argv) == 4
    assert "missing prediction file" in capsys.readouterr().err
    rows = read_rows(root / "e" / "metrics.csv")
    empty = [r for r in rows if r["precision"] == ""]
    assert [(r["challenge"], r["level"]) for r in empty] == [("noise", "1")]


def test_malformed_prediction_reports_line(refs3, capsys):
    root, gts = refs3
    argv = _evaluate_setup(root, gts)
    victim = root / "pred" / "ref001.txt"
    victim.write_text("# cure-eval v1\n0 6 1 2 3 4\n0 99 1 2 3 4\n")
    assert main(argv) == 4
    assert f"{victim}:3" in capsys.readouterr().err
    rows = read_rows(root / "e" / "metrics.csv")
    assert rows[0]["challenge"] == "none" and rows[0]["precision"] == ""


def test_bad_betas_and_iou_are_usage_errors(refs3):
    root, gts = refs3
    argv = _evaluate_setup(root, gts)
    assert main(argv + ["--betas", "1"]) == 2
    assert main(argv + ["--iou", "0"]) == 2


def test_class_agnostic_flag(refs3):
    root, gts = refs3
    argv = _evaluate_setup(root, gts)
    # relabel every prediction: class-aware matching loses them all
    for p in (root / "pred").iterdir():
        lines = p.read_text().splitlines()
        out = [ln if ln.startswith("#") else " ".join([ln.split()[0], "1", *ln.split()[2:]]) for ln in lines]
        p.write_text("\n".join(out) + "\n")
    assert main(argv) == 0
    assert read_metrics_csv(root / "e" / "metrics.csv")[0].recall == 0.0
    assert main(argv[:-1] + [str(root / "e2"), "--class-agnostic"]) == 0
    assert read_metrics_csv(root / "e2" / "metrics.csv")[0].recall == 1.0


def test_multiple_algorithms_are_averaged(refs3):
    root, gts = refs3
    argv = _evaluate_setup(root, gts)
    write_predictions(root, gts, root / "s" / "manifest.csv", out="perfect",
                      detector=lambda gt, level: list(gt))
    argv[argv.index("--pred") + 1] = f"scripted={root / 'pred'},perfect={root / 'perfect'}"
    assert main(argv) == 0
    a = read_metrics_csv(root / "e" / "metrics_scripted.csv")
    b = read_metrics_csv(root / "e" / "metrics_perfect.csv")
    avg = read_metrics_csv(root / "e" / "metrics.csv")
    for ra, rb, rm in zip(a, b, avg):
        assert rm.precision == pytest.approx((ra.precision + rb.precision) / 2)
        assert rm.counts.tp == ra.counts.tp + rb.counts.tp
    cols = read_rows(root / "e" / "degradation.csv")[0].keys()
    assert any("scripted" in c for c in cols) and any("perfect" in c for c in cols)


def test_subset_filters_by_split(refs3):
    root, gts = refs3
    argv = _evaluate_setup(root, gts)
    (root / "split.csv").write_text("id,split\nref000,train\nref001,test\nref002,test\n")
    assert main(argv + ["--split", str(root / "split.csv"), "--subset", "train"]) == 0
    rec = read_metrics_csv(root / "e" / "metrics.csv")[0]
    assert rec.counts.tp + rec.counts.fn == len(gts["ref000"])


# -- spectrum / correlate / report -----------------------------------------


def test_pipeline_outputs_exist(pipeline_root):
    spec = pipeline_root / "spectrum"
    assert len(list(spec.glob("*_avg.ppm"))) == 12
    assert len(read_stats_csv(spec / "stats.csv")) == 60
    meta = dict((r["key"], r["value"]) for r in read_rows(spec / "spectrum_meta.csv"))
    assert meta["log"] == "natural" and meta["zero_padded"] == "false"
    for d in ("synth", "eval", "spectrum", "correlate", "report"):
        assert (pipeline_root / d / "config.txt").is_file()


def test_report_cells_and_degradation(pipeline_root):
    cells = read_rows(pipeline_root / "report" / "report_cells.csv")
    assert len(cells) == 60
    assert all(c["mean_log_magnitude"] != "" for c in cells)
    records = read_metrics_csv(pipeline_root / "eval" / "metrics.csv")
    expected = aggregate_by_type({"algorithm": records})
    types = {r["challenge"]: float(r["avg_degradation_pct"]) for r in read_rows(pipeline_root / "eval" / "types.csv")}
    assert set(types) == set(expected)
    for c, v in expected.items():
        assert types[c] == pytest.approx(v, abs=1e-9)
    text = (pipeline_root / "report" / "report.txt").read_text()
    assert "Spearman" in text and "noise" in text


def test_correlation_outputs(pipeline_root):
    summary = read_rows(pipeline_root / "correlate" / "correlation_summary.csv")
    assert list(summary[0]) == ["estimated_metric", "precision", "recall", "f05", "f2"]
    rows = read_rows(pipeline_root / "correlate" / "correlation.csv")
    assert {r["metric"] for r in rows} == {"precision", "recall", "f05", "f2"}


def test_metrics_csv_roundtrip(pipeline_root, tmp_path):
    path = pipeline_root / "eval" / "metrics.csv"
    assert len(read_rows(path)) == 61
    records = read_metrics_csv(path)
    write_metrics_csv(records, tmp_path / "m.csv")
    assert read_metrics_csv(tmp_path / "m.csv") == records
    assert (tmp_path / "m.csv").read_bytes() == path.read_bytes()


def test_incomplete_grid_exits_6(pipeline_root, tmp_path, capsys):
    stats = (pipeline_root / "spectrum" / "stats.csv").read_text().splitlines()
    kept = [ln for ln in stats if not ln.startswith("haze,3,")]
    assert len(kept) == len(stats) - 1
    (tmp_path / "stats.csv").write_text("\n".join(kept) + "\n")
    code = main(["correlate", "--spectra", str(tmp_path / "stats.csv"),
                 "--metrics", str(pipeline_root / "eval" / "metrics.csv"), "--out", str(tmp_path / "c")])
    assert code == 6
    assert "haze@3" in capsys.readouterr().err


def test_shape_mismatch_exits_5(tmp_path):
    root = tmp_path
    build_references(root, n_refs=1, n_frames=2, size=16)
    run("synth", "--input", root / "refs", "--out", root / "s", "--types", "noise", "--levels", "1",
        "--format", "ppm")
    seq, _ = make_reference_sequence(2, 24, seed=0)
    save_sequence(seq, root / "other" / "ref000", "ppm")
    code = main(["spectrum", "--manifest", str(root / "s" / "manifest.csv"), "--refs", str(root / "other"),
                 "--out", str(root / "sp"), "--format", "ppm"])
    assert code == 5


def test_report_missing_upstream_exits_7(pipeline_root, tmp_path, capsys):
    shutil.copytree(pipeline_root / "eval", tmp_path / "eval")
    (tmp_path / "eval" / "levels.csv").unlink()
    code = main(["report", "--eval", str(tmp_path / "eval"), "--spectrum", str(pipeline_root / "spectrum"),
                 "--out", str(tmp_path / "r")])
    assert code == 7
    assert "levels.csv" in capsys.readouterr().err


def test_report_empty_metrics_exits_7(pipeline_root, tmp_path):
    shutil.copytree(pipeline_root / "eval", tmp_path / "eval")
    header = (tmp_path / "eval" / "metrics.csv").read_text().splitlines()[0]
    (tmp_path / "eval" / "metrics.csv").write_text(header + "\n")
    code = main(["report", "--eval", str(tmp_path / "eval"), "--spectrum", str(pipeline_root / "spectrum"),
                 "--out", str(tmp_path / "r")])
    assert code == 7


def test_report_without_correlation(pipeline_root, tmp_path):
    code = main(["report", "--eval", str(pipeline_root / "eval"), "--spectrum", str(pipeline_root / "spectrum"),
                 "--out", str(tmp_path / "r")])
    assert code == 0
    assert "Spearman" not in (tmp_path / "r" / "report.txt").read_text()


def test_rerun_is_byte_identical(pipeline_root, tmp_path):
    run("spectrum", "--manifest", pipeline_root / "synth" / "manifest.csv", "--refs", pipeline_root / "refs",
        "--out", tmp_path / "spectrum", "--format", "ppm")
    a = digest_tree(pipeline_root / "spectrum")
    b = digest_tree(tmp_path / "spectrum")
    a.pop("config.txt"), b.pop("config.txt")
    assert a == b
