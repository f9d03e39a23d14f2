import json
import struct

import pytest

from flowpriors.cli import dispatch
from flowpriors.cli.report import JSON_MARKER, render_report
from flowpriors.fields.clip import FORMAT_VERSION
from flowpriors.fields.container import MAGIC
from flowpriors.metrics import DepthReport, EvaluationReport, FlowReport, PoseReport
from flowpriors.priors.types import CONSTRAINT_NAMES


def _json(report: str):
    return json.loads(report.split(JSON_MARKER, 1)[1])


@pytest.fixture(scope="module")
def clip_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("clips") / "walk.hfsf"
    result = dispatch(["gen", "--preset", "walk", "--frames", "4", "--size", "40x40", "--seed", "3", "--out", str(path)])
    assert result.exit_code == 0, result.report
    return path


def test_gen_is_byte_identical(clip_path, tmp_path):
    again = tmp_path / "again.hfsf"
    result = dispatch(["gen", "--preset", "walk", "--frames", "4", "--size", "40x40", "--seed", "3", "--out", str(again)])
    assert result.exit_code == 0
    assert again.read_bytes() == clip_path.read_bytes()
    assert "4 frames, 40x40" in result.report


def test_gen_dumps_flow_images(tmp_path):
    result = dispatch(
        ["gen", "--preset", "idle", "--frames", "2", "--size", "32x32", "--out", str(tmp_path / "c.hfsf"), "--dump-ppm", str(tmp_path / "ppm")]
    )
    assert result.exit_code == 0
    assert sorted(p.name for p in (tmp_path / "ppm").iterdir()) == ["flow_0000.ppm", "flow_0001.ppm"]


def test_eval_against_itself(clip_path):
    result = dispatch(["eval", "--pred", str(clip_path), "--gt", str(clip_path)])
    assert result.exit_code == 0
    assert result.report.splitlines()[0].split() == ["metric", "pred"]
    assert _json(result.report)["pred"]["flow"]["epe"] == 0.0


def test_info(clip_path):
    result = dispatch(["info", "--clip", str(clip_path)])
    assert result.exit_code == 0
    assert "frames: 4" in result.report
    assert "grid: 40x40" in result.report
    assert "violations: 0" in result.report


def test_score_reports_weighted_parts(clip_path):
    result = dispatch(["score", "--clip", str(clip_path), "--disable", "silh", "--disable", "eff"])
    assert result.exit_code == 0
    payload = _json(result.report)
    assert payload["weights"]["silh"] == 0.0
    assert payload["total"] == pytest.approx(sum(payload["weights"][k] * v for k, v in payload["parts"].items()))
    assert [len(row) for row in payload["intrinsics_gradient"]] == [4] * 4


def test_optimize_writes_log(clip_path, tmp_path):
    log = tmp_path / "trajectory.csv"
    result = dispatch(["optimize", "--clip", str(clip_path), "--steps", "2", "--log", str(log)])
    assert result.exit_code == 0
    assert log.read_text(encoding="utf-8") == result.report


def test_gradcheck_single_constraint():
    result = dispatch(["gradcheck", "--constraint", "cam", "--seeds", "2"])
    assert result.exit_code == 0
    assert "pass" in result.report
    assert set(_json(result.report)["cam"]) == {"0", "1"}


def test_help():
    result = dispatch(["--help"])
    assert result.exit_code == 0
    assert "usage: flowpriors" in result.report


@pytest.mark.parametrize(
    "argv",
    [
        ["dance"],
        ["gen", "--preset", "walk", "--size", "12by12", "--out", "x.hfsf"],
        ["score", "--clip", "x.hfsf", "--disable", "gravity"],
        [],
    ],
)
def test_usage_errors(argv):
    result = dispatch(argv)
    assert result.exit_code == 1
    assert result.report.startswith("error:")


def test_missing_clip_is_io_error(tmp_path):
    result = dispatch(["info", "--clip", str(tmp_path / "absent.hfsf")])
    assert result.exit_code == 2


def test_too_few_frames_is_validation_error(tmp_path):
    result = dispatch(["gen", "--preset", "walk", "--frames", "1", "--out", str(tmp_path / "c.hfsf")])
    assert result.exit_code == 1


def test_optimize_with_every_prior_disabled_is_rejected(clip_path):
    disabled = [arg for name in CONSTRAINT_NAMES for arg in ("--disable", name)]
    result = dispatch(["optimize", "--clip", str(clip_path), "--steps", "2", *disabled])
    assert result.exit_code == 1
    assert "nothing to optimize" in result.report


def test_score_with_contacts_on_mask(clip_path):
    result = dispatch(["score", "--clip", str(clip_path), "--contacts-on-mask"])
    assert result.exit_code == 0
    assert _json(result.report)["parts"]["com"] >= 0.0


def test_undecodable_meta_is_io_error(tmp_path):
    path = tmp_path / "bad_meta.hfsf"
    meta = struct.pack("<4sIBB", b"META", 0xFFFFFFFF, 2, 1) + struct.pack("<I", 2) + b"\xff\xfe"
    path.write_bytes(MAGIC + struct.pack("<II", FORMAT_VERSION, 1) + meta)
    result = dispatch(["info", "--clip", str(path)])
    assert result.exit_code == 2
    assert "META" in result.report


def _report(epe):
    return EvaluationReport(
        FlowReport(epe=epe, one_minus_cos=0.01234, acc_strict=0.5, acc_relaxed=0.75, count=10),
        PoseReport(mpjpe=0.05, pa_mpjpe=0.031),
        DepthReport(mae=0.1, silog=12.3456, count=10),
    )


def test_render_report_units():
    text = render_report({"full": _report(0.0242), "w/o skel": _report(0.03)})
    lines = text.splitlines()
    epe = next(line for line in lines if line.startswith("EPE"))
    assert epe.split()[-2:] == ["24.2", "30.0"]
    assert "50.0" in next(line for line in lines if line.startswith("Acc.S"))
    assert "12.35" in next(line for line in lines if line.startswith("SiLog"))
    assert render_report({"full": _report(0.0242)}) == render_report({"full": _report(0.0242)})
