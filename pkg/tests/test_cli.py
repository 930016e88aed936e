"""Tests for CLI entry point."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from vp_codec_bench.cli import main
from vp_codec_bench.errors import EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, UsageError
from vp_codec_bench.media import clip_spec, read_y4m_file, write_y4m_file

MARKER = ["--marker-size", "20", "--inset", "2"]


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def bars(runner: CliRunner, tmp_path: Path) -> Path:
    path = tmp_path / "bars.y4m"
    result = runner.invoke(main, [
        "synth", "--kind", "moving_bar", "--output", str(path),
        "--width", "64", "--height", "64", "--frames", "5", "--seed", "1",
    ])
    assert result.exit_code == EXIT_OK, result.output
    return path


@pytest.fixture
def marked(runner: CliRunner, bars: Path, tmp_path: Path) -> Path:
    path = tmp_path / "marked.y4m"
    result = runner.invoke(main, [
        "mark", "--input", str(bars), "--output", str(path), "--clip-id", "5", *MARKER,
    ])
    assert result.exit_code == EXIT_OK, result.output
    assert "Marked 5 frames" in result.output
    return path


def _write_manifest(tmp_path: Path, **overrides) -> Path:
    doc = {
        "clips": [{"name": "bars", "clip_id": 3,
                   "synthetic": {"kind": "moving_bar", "width": 64, "height": 64, "frames": 4}}],
        "codecs": [{"name": "toy"}],
        "ladder": {"explicit": [0, 4]},
        "marker": {"size": 20, "inset": 2},
    }
    doc.update(overrides)
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def test_help_lists_commands(runner: CliRunner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == EXIT_OK
    for command in ("run", "report", "synth", "mark", "encode-ladder",
                    "simulate", "align", "score", "noise-floor"):
        assert command in result.output


def test_unknown_option_is_a_usage_error(runner: CliRunner):
    result = runner.invoke(main, ["score", "--bogus"])
    assert result.exit_code == EXIT_USAGE


def test_score_against_itself(runner: CliRunner, bars: Path):
    result = runner.invoke(main, ["score", "--ref", str(bars), "--dist", str(bars)])
    assert result.exit_code == EXIT_OK
    assert result.output.strip() == "99.0"


def test_score_per_frame_json(runner: CliRunner, bars: Path, marked: Path):
    result = runner.invoke(main, [
        "score", "--ref", str(bars), "--dist", str(marked), "--per-frame",
        "--mask", "exclude_markers", *MARKER,
    ])
    assert result.exit_code == EXIT_OK
    data = json.loads(result.output)
    assert data["metric"] == "psnr"
    assert len(data["per_frame"]) == 5
    assert data["pooled"] == 99.0


def test_score_unknown_metric_needs_runner(runner: CliRunner, bars: Path):
    result = runner.invoke(main, ["score", "--metric", "vmaf", "--ref", str(bars), "--dist", str(bars)])
    assert result.exit_code == EXIT_USAGE


def test_score_with_runner(runner: CliRunner, bars: Path, stub_vmaf_command: str):
    result = runner.invoke(main, [
        "score", "--metric", "vmaf", "--runner", stub_vmaf_command,
        "--ref", str(bars), "--dist", str(bars),
    ])
    assert result.exit_code == EXIT_OK
    assert float(result.output) == 100.0


def test_align_prints_the_map(runner: CliRunner, marked: Path):
    result = runner.invoke(main, ["align", "--captured", str(marked), "--clip-id", "5", *MARKER])
    assert result.exit_code == EXIT_OK
    data = json.loads(result.output)
    assert data["clip_id"] == 5
    assert [source for _, source, _ in data["entries"]] == [0, 1, 2, 3, 4]
    assert data["genlock_loss"] is False
    assert data["policy"] == "first_of_dup"
    assert data["paired"] == 5
    assert data["coverage"] == 1.0


def test_align_errors_map_to_exit_codes(runner: CliRunner, bars: Path, marked: Path):
    result = runner.invoke(main, ["align", "--captured", str(marked), "--clip-id", "6", *MARKER])
    assert result.exit_code == EXIT_FAILURE
    assert "Error:" in result.output
    result = runner.invoke(main, ["align", "--captured", str(bars), "--clip-id", "5", *MARKER])
    assert result.exit_code == EXIT_FAILURE


def test_align_applies_the_pairing_policy(runner: CliRunner, marked: Path, tmp_path: Path):
    spec, frames = read_y4m_file(marked)
    doubled = tmp_path / "doubled.y4m"
    captured = frames[:3] + frames[2:]
    write_y4m_file(doubled, clip_spec(captured, spec.frame_rate), captured)
    base = ["align", "--captured", str(doubled), "--clip-id", "5", *MARKER]

    result = runner.invoke(main, [*base, "--policy", "first_of_dup"])
    assert result.exit_code == EXIT_OK
    data = json.loads(result.output)
    assert data["genlock_loss"] is True
    assert data["paired"] == 5
    assert data["coverage"] == 1.0

    result = runner.invoke(main, [*base, "--policy", "strict"])
    assert result.exit_code == EXIT_FAILURE
    assert "genlock lost" in result.output


def test_simulate_then_score(runner: CliRunner, bars: Path, tmp_path: Path):
    captured = tmp_path / "captured.y4m"
    result = runner.invoke(main, [
        "simulate", "--input", str(bars), "--output", str(captured),
        "--noise-sigma", "2", "--seed", "4",
    ])
    assert result.exit_code == EXIT_OK
    result = runner.invoke(main, ["score", "--ref", str(bars), "--dist", str(captured)])
    assert result.exit_code == EXIT_OK
    assert 30.0 < float(result.output) < 99.0


def test_simulate_rejects_two_noise_settings(runner: CliRunner, bars: Path, tmp_path: Path):
    result = runner.invoke(main, [
        "simulate", "--input", str(bars), "--output", str(tmp_path / "x.y4m"),
        "--noise-sigma", "2", "--floor-psnr", "37",
    ])
    assert result.exit_code == EXIT_USAGE


def test_noise_floor(runner: CliRunner, bars: Path):
    result = runner.invoke(main, [
        "noise-floor", "--reference", str(bars), "--capture", str(bars), "--capture", str(bars),
    ])
    assert result.exit_code == EXIT_OK
    data = json.loads(result.output)
    assert data["scores"] == [99.0, 99.0]
    assert data["range"] == 0.0


def test_encode_ladder_with_explicit_params(runner: CliRunner, bars: Path, tmp_path: Path):
    result = runner.invoke(main, [
        "encode-ladder", "--input", str(bars), "--rate-params", "0,8", "--out", str(tmp_path / "enc"),
    ])
    assert result.exit_code == EXIT_OK
    data = json.loads(result.output)
    assert data["codec"] == "toy"
    assert data["gop"] == "all_intra"
    assert data["ladder"] == [0, 8]
    lossless, lossy = data["points"]
    assert lossless["psnr"] == 99.0
    assert lossy["psnr"] < 99.0
    assert lossy["encoded_bytes"] < lossless["encoded_bytes"]


def test_encode_ladder_argument_checks(runner: CliRunner, bars: Path, tmp_path: Path):
    out = str(tmp_path / "enc")
    both = runner.invoke(main, [
        "encode-ladder", "--input", str(bars), "--rate-params", "0", "--floor", "40", "--out", out,
    ])
    assert both.exit_code == EXIT_USAGE
    unknown = runner.invoke(main, [
        "encode-ladder", "--input", str(bars), "--codec", "hevc", "--rate-params", "20", "--out", out,
    ])
    assert unknown.exit_code == EXIT_USAGE
    out_of_range = runner.invoke(main, [
        "encode-ladder", "--input", str(bars), "--rate-params", "99", "--out", out,
    ])
    assert out_of_range.exit_code == EXIT_FAILURE


def test_run_then_report(runner: CliRunner, tmp_path: Path):
    manifest = _write_manifest(tmp_path)
    result = runner.invoke(main, ["run", "--manifest", str(manifest)])
    assert result.exit_code == EXIT_OK, result.output
    assert "Results:" in result.output
    assert "2 completed" in result.output

    result = runner.invoke(main, ["report", "--manifest", str(manifest)])
    assert result.exit_code == EXIT_OK, result.output
    report_dir = tmp_path / "out" / "report"
    assert (report_dir / "summary.md").exists()
    assert (report_dir / "savings_direct.csv").read_text().startswith("codec,clip,gop")


def test_run_with_a_failing_codec_is_partial(runner: CliRunner, tmp_path: Path):
    broken = {"name": "broken", "encode": "sh -c 'exit 1'", "decode": "true"}
    manifest = _write_manifest(
        tmp_path, codecs=[{"name": "toy"}, broken],
        ladder={"explicit": {"toy": [0], "broken": [1]}},
    )
    result = runner.invoke(main, ["run", "--manifest", str(manifest)])
    assert result.exit_code == EXIT_PARTIAL


def test_run_with_a_bad_manifest(runner: CliRunner, tmp_path: Path):
    result = runner.invoke(main, ["run", "--manifest", str(tmp_path / "absent.yaml")])
    assert result.exit_code == EXIT_USAGE
    bad = _write_manifest(tmp_path, codecs=[])
    result = runner.invoke(main, ["run", "--manifest", str(bad)])
    assert result.exit_code == EXIT_USAGE


def test_report_argument_checks(runner: CliRunner, tmp_path: Path):
    assert runner.invoke(main, ["report"]).exit_code == EXIT_USAGE
    missing = runner.invoke(main, ["report", "--store", str(tmp_path / "results.jsonl")])
    assert missing.exit_code == EXIT_USAGE


def test_verbose_flag_reaches_the_run_config(runner: CliRunner, tmp_path: Path, monkeypatch):
    seen = {}

    def fake_run(manifest, config):
        seen["config"] = config
        raise UsageError("stop here")

    monkeypatch.setattr("vp_codec_bench.cli.run_experiment", fake_run)
    manifest = _write_manifest(tmp_path)
    result = runner.invoke(main, ["--verbose", "run", "--manifest", str(manifest), "--workers", "3"])
    assert result.exit_code == EXIT_USAGE
    assert seen["config"].verbose is True
    assert seen["config"].workers == 3
