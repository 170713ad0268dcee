import csv
import shutil
from pathlib import Path

import numpy as np
import pytest

from cdprvs.cli import (
    EXIT_CONFIG,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    GROUP_HEADER,
    WORKSPACE_HEADER,
    RunSummary,
    compare,
    group_table,
    main,
)
from cdprvs.sim import ExperimentConfig

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GOLDEN = Path(__file__).parent / "golden"


def _rows(path):
    with open(path) as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("#")]


def _golden(name):
    return (GOLDEN / name).read_text().strip().split(",")


def test_golden_headers():
    assert RunSummary.header() == _golden("run_summary_header.csv")
    assert GROUP_HEADER == _golden("groups_header.csv")
    assert WORKSPACE_HEADER == _golden("workspace_header.csv")


def test_run_classic_writes_log(tmp_path, capsys):
    code = main(["run", "--config", str(CONFIGS / "classic_none.yaml"), "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    log = tmp_path / "classic_none_classic_none_s0.csv"
    assert log.read_text().splitlines()[0] + "\n" == (GOLDEN / "simlog_header.csv").read_text()
    summary = _rows(tmp_path / "classic_none_classic_none_s0_summary.csv")
    assert summary[0] == RunSummary.header()
    assert summary[1][4] == "True"


def test_run_tracking_v1_pairs_with_classic(tmp_path, capsys):
    code = main(["run", "--config", str(CONFIGS / "tracking_v1.yaml"), "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    ratio = float(out.split("image ")[1].split()[0])
    assert ratio >= 3.0
    rows = _rows(tmp_path / "tracking_v1_tracking_v1_s0_summary.csv")
    assert [r[1] for r in rows[1:]] == ["classic", "tracking"]


def test_run_output_is_byte_identical(tmp_path):
    args = ["run", "--config", str(CONFIGS / "classic_v2.yaml"), "--seed", "3"]
    main(args + ["--out-dir", str(tmp_path / "a")])
    main(args + ["--out-dir", str(tmp_path / "b")])
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_negative_dt_exits_with_config_error(tmp_path, capsys):
    shutil.copy(CONFIGS / "acrobot.yaml", tmp_path)
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("name: bad\nrobot: acrobot.yaml\ndt: -0.05\n")
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "dt" in err and "line 3" in err


def test_missing_config_exits_with_config_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.yaml")]) == EXIT_CONFIG


def test_bad_reps(tmp_path):
    code = main(["compare", "--config", str(CONFIGS / "classic_none.yaml"), "--reps", "0",
                 "--out-dir", str(tmp_path)])
    assert code == EXIT_CONFIG


def test_not_converged_exit_code(tmp_path):
    shutil.copy(CONFIGS / "acrobot.yaml", tmp_path)
    text = (CONFIGS / "classic_none.yaml").read_text().replace("max_duration: 60.0",
                                                              "max_duration: 0.5")
    cfg = tmp_path / "short.yaml"
    cfg.write_text(text)
    assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == EXIT_NOT_CONVERGED


@pytest.fixture(scope="module")
def compared():
    return [s for s, _ in compare(ExperimentConfig(), reps=1, seed=0)]


def test_compare_groups(compared):
    table = {r[0]: r for r in group_table(compared)}
    assert list(table) == ["A", "B", "C", "D", "E", "F"]
    img = {k: float(v[GROUP_HEADER.index("image_max_avg")]) for k, v in table.items()}
    space = {k: float(v[GROUP_HEADER.index("space_max_avg")]) for k, v in table.items()}
    # unperturbed groups stay within a few pixels of each other
    assert abs(img["A"] - img["B"]) < 5.0
    assert space["F"] <= space["E"]
    assert img["D"] < img["C"]
    assert all(s.converged for s in compared)


def test_compare_is_deterministic(compared):
    again = [s for s, _ in compare(ExperimentConfig(), reps=1, seed=0)]
    assert [s.row() for s in again] == [s.row() for s in compared]


def test_workspace_small_grid(tmp_path, capsys):
    shutil.copy(CONFIGS / "acrobot.yaml", tmp_path)
    cfg = tmp_path / "ws.yaml"
    cfg.write_text(
        "name: ws\nrobot: acrobot.yaml\n"
        "desired_object_pose: {translation: [0, 0, 0.5], rotation_deg: [-180, 0, -180]}\n"
        "workspace:\n"
        "  grid: {x: [-0.2, 0.2], y: [-0.2, 0.2], z: [0.6, 1.3], shape: [2, 2, 2]}\n"
        "  bounds: {mp_pose_trans: 0.01, mp_pose_rot_deg: 1.0}\n"
        "  n_samples: 8\n  n_boundary: 4\n")
    assert main(["workspace", "--config", str(cfg), "--out-dir", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "ws_workspace.csv").read_text()
    rows = _rows(tmp_path / "ws_workspace.csv")
    assert rows[0] == WORKSPACE_HEADER
    assert len(rows) == 9
    assert text.splitlines()[-1].startswith("# csw is approximate")
    for r in rows[1:]:
        sfw, csw, fc = int(r[4]), int(r[5]), int(r[6])
        assert fc == (sfw and csw)
        if float(r[2]) > 1.2:
            assert sfw == 0
    assert "cells=8" in capsys.readouterr().out
