import csv
import json
import subprocess
import sys

import pytest

from drivesense.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main


@pytest.fixture(scope="module")
def cli_scenario(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "scn"
    assert main(["gen-scenario", "--frames", "30", "--seed", "3", "--out-dir", str(out)]) == EXIT_OK
    return out


def test_gen_scenario_layout(cli_scenario):
    for name in ("frames/index.csv", "frames/000000.csv", "dynamics.csv", "stress.csv", "truth_tracks.csv",
                 "pipeline.toml"):
        assert (cli_scenario / name).exists()
    with open(cli_scenario / "frames/index.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 30


def test_pipeline_and_plot(cli_scenario, tmp_path, capsys):
    toml = cli_scenario / "pipeline.toml"
    text = toml.read_text().replace("window_s = 10.0", "window_s = 2.0").replace("stride_s = 5.0", "stride_s = 1.0")
    cfg = tmp_path / "p.toml"
    cfg.write_text(text.replace('"frames/', f'"{cli_scenario}/frames/')
                   .replace('"dynamics.csv"', f'"{cli_scenario}/dynamics.csv"')
                   .replace('"stress.csv"', f'"{cli_scenario}/stress.csv"')
                   .replace('"truth_tracks.csv"', f'"{cli_scenario}/truth_tracks.csv"'))
    run = tmp_path / "run"
    assert main(["pipeline", "--config", str(cfg), "--out-dir", str(run)]) == EXIT_OK
    report = json.loads((run / "report.json").read_text())
    assert report["status"] == "ok" and len(report["processed"]) == 30
    assert main(["plot", str(run / "report.json"), "--out-dir", str(tmp_path / "plots")]) == EXIT_OK
    assert (tmp_path / "plots" / "param_T.svg").exists()
    assert "processed 30/30 frames" in capsys.readouterr().out


def test_exit_code_config_errors(tmp_path, cli_scenario, capsys):
    assert main(["pipeline"]) == EXIT_CONFIG
    assert main(["pipeline", "--config", str(tmp_path / "nope.toml")]) == EXIT_CONFIG
    bad = tmp_path / "bad.toml"
    bad.write_text('[input]\nframes = "x"\ndynamics = "y"\n[output]\ndir = "o"\n[unknown]\nk = 1\n')
    assert main(["pipeline", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["bev", str(tmp_path / "missing.csv")]) == EXIT_CONFIG
    (tmp_path / "garbage.csv").write_text("x,y,z,intensity\n1,2,three,4\n")
    assert main(["bev", str(tmp_path / "garbage.csv")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_exit_code_stage_error(cli_scenario, tmp_path):
    code = main(["pipeline", "--config", str(cli_scenario / "pipeline.toml"), "--out-dir", str(tmp_path),
                 "--detector", "remote=http://127.0.0.1:9"])
    assert code == EXIT_STAGE
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["error"]["stage"] == "detection"


def test_single_stage_commands(cli_scenario, tmp_path):
    frame = cli_scenario / "frames" / "000005.csv"
    truth = cli_scenario / "truth_tracks.csv"
    assert main(["bev", str(frame), "--out-dir", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "000005.png").exists() and (tmp_path / "000005.json").exists()
    assert main(["detect", str(frame), "--truth", str(truth), "--out-dir", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "000005.detections.json").read_text())
    assert len(doc["detections"]) >= 1
    lines = [json.dumps({**doc, "timestamp_us": doc["timestamp_us"] + 100_000 * k}) for k in range(4)]
    (tmp_path / "dets.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["track", str(tmp_path / "dets.jsonl"), "--out-dir", str(tmp_path)]) == EXIT_OK
    tracked = [json.loads(x) for x in (tmp_path / "tracks.jsonl").read_text().splitlines()]
    assert len(tracked) == 4 and tracked[-1]["boxes"]
    assert main(["scene", str(tmp_path / "tracks.jsonl"), "--dynamics", str(cli_scenario / "dynamics.csv"),
                 "--out-dir", str(tmp_path)]) == EXIT_OK
    assert len((tmp_path / "scene.jsonl").read_text().splitlines()) == 12


def test_idm_fit_and_correlate(tmp_path):
    import numpy as np

    from drivesense.characterization.idm import IdmParams, idm_accel

    p = IdmParams(2.0, 30.0, 1.5, 1.0, 2.0)
    rng = np.random.default_rng(0)
    rows = ["timestamp_us,v,s,dv,a_obs"]
    for k in range(300):
        v, s, dv = rng.uniform(5, 25), rng.uniform(10, 60), rng.uniform(-3, 3)
        rows.append(f"{k * 100_000},{v},{s},{dv},{idm_accel(p, v, s, dv)}")
    (tmp_path / "s.csv").write_text("\n".join(rows) + "\n")
    assert main(["idm-fit", str(tmp_path / "s.csv"), "--window-s", "10", "--stride-s", "5",
                 "--out-dir", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "params.csv") as fh:
        fitted = list(csv.DictReader(fh))
    assert len(fitted) == 5
    assert all(abs(float(r["T"]) - 1.5) < 0.075 for r in fitted)
    (tmp_path / "sig.csv").write_text("timestamp_us,value\n" + "".join(f"{k * 500_000},{k}\n" for k in range(60)))
    assert main(["correlate", str(tmp_path / "params.csv"), str(tmp_path / "sig.csv"),
                 "--out-dir", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "correlation.csv").read_text()
    assert text.startswith("param,r\n") and len(text.splitlines()) == 6


def test_module_entry_point_version():
    out = subprocess.run([sys.executable, "-m", "drivesense.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "drivesense" in out.stdout
