"""End-to-end pipeline tests on small synthetic clips with the toy codec."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import pytest

from vp_codec_bench.config import Config
from vp_codec_bench.errors import EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL, UsageError
from vp_codec_bench.log import get_logger
from vp_codec_bench.manifest import parse_manifest
from vp_codec_bench.models import GopMode
from vp_codec_bench.pipeline import (
    _pool_initializer,
    artifact_dir,
    derive_seed,
    run_experiment,
    store_path_for,
)
from vp_codec_bench.store import ExperimentStore, strip_volatile

CLIP = {"name": "bars", "clip_id": 7, "synthetic": {"kind": "moving_bar", "width": 64, "height": 64, "frames": 6, "seed": 2}}


def _manifest(tmp_path: Path, **overrides):
    doc = {
        "clips": [CLIP],
        "codecs": [{"name": "toy"}],
        "gop_modes": ["all_intra"],
        "ladder": {"explicit": [0, 4, 8]},
        "channel": ["direct", "ident", "noisy"],
        "channel_profiles": {"ident": {}, "noisy": {"noise_sigma": 2.0}},
        "marker": {"size": 20, "inset": 2},
        "output_dir": "out",
        "seed": 5,
    }
    doc.update(overrides)
    return parse_manifest(doc, tmp_path)


def _quality(store: ExperimentStore, mode: str) -> dict:
    out = {}
    for r in store.records("quality"):
        d = r["data"]
        if d["mode"] == mode:
            out[d["rate_param"]] = d["record"]["pooled"]
    return out


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(5, 7, "noisy") == derive_seed(5, 7, "noisy")
    assert derive_seed(5, 7, "noisy") != derive_seed(5, 7, "ident")


def test_artifact_dir_layout(tmp_path: Path):
    path = artifact_dir(tmp_path, "bars", "toy", GopMode.frames(5), 12)
    assert path == tmp_path / "artifacts" / "bars" / "toy" / "frames-5" / "rp12"


def test_full_run(tmp_path: Path):
    manifest = _manifest(tmp_path)
    summary = run_experiment(manifest)
    assert summary.exit_code == EXIT_OK
    assert (summary.tuples_total, summary.tuples_completed) == (3, 3)

    store = ExperimentStore(store_path_for(tmp_path / "out"))
    assert len(store.records("ladder_point")) == 3
    assert len(store.records("quality")) == 9
    assert len(store.records("curve")) == 3
    assert {r["key"] for r in store.records("alignment")} >= {"ident|bars|ref", "noisy|bars|ref"}

    direct, ident, noisy = (_quality(store, m) for m in ("direct", "ident", "noisy"))
    assert direct[0] == 99.0
    assert ident == direct
    assert all(noisy[rp] < direct[rp] for rp in direct)

    point = store.records("ladder_point")[0]["data"]
    assert not Path(point["encoded_path"]).is_absolute()
    assert (tmp_path / "out" / point["encoded_path"]).exists()
    assert "encode_fps" not in point
    assert "encode_fps" in store.records("ladder_point")[0]["volatile"]


def test_rerun_is_a_no_op(tmp_path: Path):
    manifest = _manifest(tmp_path, channel=["direct", "noisy"])
    run_experiment(manifest)
    path = store_path_for(tmp_path / "out")
    before = path.read_text()

    summary = run_experiment(manifest)
    assert summary.tuples_skipped == 3
    assert summary.tuples_completed == 0
    assert path.read_text() == before


def test_resume_recomputes_only_missing_records(tmp_path: Path):
    manifest = _manifest(tmp_path, channel=["direct"])
    run_experiment(manifest)
    path = store_path_for(tmp_path / "out")
    lines = path.read_text().splitlines()
    victim = next(
        i for i, line in enumerate(lines)
        if json.loads(line)["kind"] == "quality" and json.loads(line)["data"]["rate_param"] == 4
    )
    removed = json.loads(lines[victim])
    path.write_text("\n".join(lines[:victim] + lines[victim + 1:]) + "\n")

    summary = run_experiment(manifest)
    assert summary.tuples_skipped == 2
    assert summary.tuples_completed == 1
    restored = ExperimentStore(path).get("quality", removed["key"], removed["manifest_hash"])
    assert restored["data"] == removed["data"]


def test_parallel_run_matches_serial(tmp_path: Path):
    manifest = _manifest(tmp_path, channel=["direct", "noisy"])
    run_experiment(manifest, Config(workers=1, output_dir=str(tmp_path / "serial")))
    run_experiment(manifest, Config(workers=2, output_dir=str(tmp_path / "parallel")))

    def canonical(out: str) -> list[dict]:
        store = ExperimentStore(store_path_for(tmp_path / out))
        return [strip_volatile(r) for r in store.records()]

    assert canonical("serial") == canonical("parallel")


def test_mode_restriction(tmp_path: Path):
    manifest = _manifest(tmp_path)
    run_experiment(manifest, Config(modes=("direct",)))
    store = ExperimentStore(store_path_for(tmp_path / "out"))
    assert {r["data"]["mode"] for r in store.records("quality")} == {"direct"}


def test_failing_codec_gives_partial_exit(tmp_path: Path):
    broken = {"name": "broken", "encode": "sh -c 'echo nope >&2; exit 1'", "decode": "true"}
    manifest = _manifest(tmp_path, channel=["direct"], codecs=[{"name": "toy"}, broken],
                         ladder={"explicit": {"toy": [0, 4], "broken": [1]}})
    summary = run_experiment(manifest)
    assert summary.exit_code == EXIT_PARTIAL
    (failure,) = summary.failures
    assert failure["stage"] == "encode"
    assert failure["codec"] == "broken"
    assert "nope" in failure["diagnostics"]
    store = ExperimentStore(store_path_for(tmp_path / "out"))
    assert len(store.records("failure")) == 1


def test_everything_failing_gives_failure_exit(tmp_path: Path):
    broken = {"name": "broken", "encode": "sh -c 'exit 1'", "decode": "true"}
    manifest = _manifest(tmp_path, channel=["direct"], codecs=[broken], ladder={"explicit": [1, 2]})
    assert run_experiment(manifest).exit_code == EXIT_FAILURE


def test_cropping_camera_mode(tmp_path: Path):
    clip = {"name": "wide", "clip_id": 9, "synthetic": {"kind": "gradient", "width": 128, "height": 128, "frames": 4}}
    manifest = _manifest(
        tmp_path, clips=[clip], ladder={"explicit": [0, 4]}, channel=["direct", "crop"],
        channel_profiles={"crop": {"roi": [32, 32, 64, 64]}},
    )
    summary = run_experiment(manifest)
    assert summary.exit_code == EXIT_OK
    store = ExperimentStore(store_path_for(tmp_path / "out"))
    crop = _quality(store, "crop")
    assert crop[0] == 99.0
    record = next(r for r in store.records("quality") if r["data"]["mode"] == "crop")
    assert record["data"]["record"]["distorted"]["spec"]["width"] == 64


def test_external_runner_in_the_loop(tmp_path: Path, stub_vmaf_command):
    manifest = _manifest(
        tmp_path, channel=["direct", "noisy"],
        metrics={"psnr": True, "runners": [{"name": "vmaf", "command": stub_vmaf_command}]},
    )
    summary = run_experiment(manifest)
    assert summary.exit_code == EXIT_OK
    store = ExperimentStore(store_path_for(tmp_path / "out"))
    vmaf = [r["data"]["record"] for r in store.records("quality") if r["data"]["record"]["metric"] == "vmaf"]
    assert len(vmaf) == 6
    assert all(0.0 <= rec["pooled"] <= 100.0 for rec in vmaf)
    assert all(rec["region_mask"]["kind"] == "exclude_markers" for rec in vmaf)


def test_jnd_ladder_is_stored_and_reused(tmp_path: Path):
    manifest = _manifest(
        tmp_path, channel=["direct"],
        ladder={"jnd": {"step": 3, "floor": 45, "points": 3, "metric": "psnr"}},
    )
    run_experiment(manifest)
    store = ExperimentStore(store_path_for(tmp_path / "out"))
    (ladder,) = store.records("ladder")
    params = ladder["data"]["rate_params"]
    assert params == sorted(set(params))
    assert params[0] == 0

    summary = run_experiment(manifest)
    assert summary.tuples_skipped == len(params)
    assert len(ExperimentStore(store_path_for(tmp_path / "out")).records("ladder")) == 1


def test_timing_stage_writes_speed_records(tmp_path: Path):
    manifest = _manifest(tmp_path, channel=["direct"], timing={"repetitions": 1})
    run_experiment(manifest)
    store = ExperimentStore(store_path_for(tmp_path / "out"))
    (speed,) = store.records("speed")
    assert speed["data"]["rate_param"] == 4
    assert speed["volatile"]["encode_fps"] > 0


def test_bad_worker_count(tmp_path: Path):
    with pytest.raises(UsageError):
        run_experiment(_manifest(tmp_path), Config(workers=0))


def test_pool_workers_follow_the_verbose_setting():
    logger = get_logger()
    try:
        _pool_initializer(verbose=True)
        assert logger.level == logging.DEBUG
    finally:
        logger.setLevel(logging.INFO)
        for handler in logger.handlers:
            handler.setLevel(logging.INFO)
