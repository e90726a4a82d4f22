import json

import numpy as np
import pytest

from camrefine.cli import main


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_corpus")
    assert run_cli("synth", "--out-dir", out, "--seed-range", "0:6") == 0
    return out


def test_synth_writes_manifest(cli_corpus):
    assert (cli_corpus / "manifest.jsonl").exists()
    lines = (cli_corpus / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 6


def test_run_and_artifacts(cli_corpus, tmp_path):
    out = tmp_path / "run"
    code = run_cli("run", "--manifest", cli_corpus / "manifest.jsonl", "--out-dir", out)
    assert code == 0
    assert (out / "summary.csv").exists()
    assert (out / "metrics.json").exists()
    assert (out / "metrics_summary.png").exists()
    doc = json.loads((out / "metrics.json").read_text())
    assert len(doc["samples"]) == 6


def test_attribute_refine_eval(cli_corpus, tmp_path):
    a = tmp_path / "a"
    assert run_cli("attribute", "--manifest", cli_corpus / "manifest.jsonl", "--out-dir", a) == 0
    assert (a / "cam_synth0000.npy").exists()
    assert (a / "feasibility.json").exists()
    r = tmp_path / "r"
    assert run_cli("refine", "--manifest", cli_corpus / "manifest.jsonl", "--out-dir", r) == 0
    assert (r / "cam_refined_synth0000.npy").exists()
    e = tmp_path / "e"
    assert run_cli("eval", "--manifest", cli_corpus / "manifest.jsonl", "--out-dir", e) == 0
    assert (e / "summary.csv").exists()


def test_modules_flag_disables_refinement(cli_corpus, tmp_path):
    out = tmp_path / "none"
    code = run_cli(
        "run", "--manifest", cli_corpus / "manifest.jsonl", "--out-dir", out, "--modules", "none"
    )
    assert code == 0
    raw = np.load(out / "cam_raw_synth0000.npy")
    refined = np.load(out / "cam_refined_synth0000.npy")
    assert np.array_equal(raw, refined)


def test_sweep_cli(cli_corpus, tmp_path):
    out = tmp_path / "sweep"
    code = run_cli(
        "sweep",
        "--manifest", cli_corpus / "manifest.jsonl",
        "--out-dir", out,
        "--param", "dacg.delta_sigma",
        "--values", "0.18,0.22,0.26",
    )
    assert code == 0
    text = (out / "sweep.csv").read_text().splitlines()
    assert len(text) == 4  # header + one row per value


def test_check_steps_cli(cli_corpus, tmp_path):
    out = tmp_path / "steps"
    assert run_cli("check-steps", "--manifest", cli_corpus / "manifest.jsonl", "--out-dir", out) == 0
    doc = json.loads((out / "feasibility.json").read_text())
    assert doc["pooled"]["valid_ratio"] == 1.0


def test_variants_cli(tmp_path):
    corpus = tmp_path / "vc"
    assert run_cli("synth", "--out-dir", corpus, "--seed-range", "0:4", "--variants") == 0
    out = tmp_path / "v"
    assert run_cli("variants", "--manifest", corpus / "manifest.jsonl", "--out-dir", out) == 0
    assert (out / "variants.csv").exists()
    assert (out / "variants_monotone.json").exists()


def test_variants_cli_without_labels_errors(cli_corpus, tmp_path):
    code = run_cli(
        "variants", "--manifest", cli_corpus / "manifest.jsonl", "--out-dir", tmp_path / "v"
    )
    assert code == 1


def test_render_cli(cli_corpus, tmp_path):
    out = tmp_path / "render"
    assert run_cli("render", "--manifest", cli_corpus / "manifest.jsonl", "--out-dir", out) == 0
    pngs = list(out.glob("heatmap_*.png"))
    assert len(pngs) == 6


def test_time_cli(cli_corpus, tmp_path):
    out = tmp_path / "time"
    assert run_cli("time", "--manifest", cli_corpus / "manifest.jsonl", "--out-dir", out) == 0
    text = (out / "timing.csv").read_text()
    for stage in ("attribution", "akd", "dacg", "cba", "sicd", "metrics"):
        assert stage in text
    assert (out / "timing.png").exists()


def test_exit_code_2_on_config_error(cli_corpus, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[dacg]\nnot_a_key = 3\n")
    code = run_cli(
        "run",
        "--manifest", cli_corpus / "manifest.jsonl",
        "--out-dir", tmp_path / "o",
        "--config", bad,
    )
    assert code == 2


def test_exit_code_2_on_missing_manifest(tmp_path):
    code = run_cli("run", "--manifest", tmp_path / "nope.jsonl", "--out-dir", tmp_path / "o")
    assert code == 2


def test_exit_code_1_on_sample_error(cli_corpus, tmp_path):
    manifest = tmp_path / "broken.jsonl"
    rec = {
        "sample_id": "gone",
        "features_path": "missing.npy",
        "gradients_path": "missing.npy",
        "meta_path": "missing.json",
    }
    manifest.write_text(json.dumps(rec) + "\n")
    code = run_cli("run", "--manifest", manifest, "--out-dir", tmp_path / "o")
    assert code == 1


def test_config_file_applies(cli_corpus, tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[pipeline]\nmodules = [\"akd\"]\n\n[akd]\nk_base = 5\n")
    out = tmp_path / "out"
    code = run_cli(
        "run", "--manifest", cli_corpus / "manifest.jsonl", "--out-dir", out, "--config", cfg
    )
    assert code == 0
