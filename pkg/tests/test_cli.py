import json
import os
import subprocess
import sys

import numpy as np
import pytest

from wallprobe.cli import build_parser, main
from wallprobe.evaluation import read_pgm, read_profile_csv
from wallprobe.gan import ModelBundle, TrainLog


@pytest.fixture(scope="module")
def trained(tiny_dataset, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("cli") / "annf.wpm")
    code = main(["train", "--dataset", tiny_dataset.root, "--model", "gan-annf", "--epochs", "2", "--batch", "4",
                 "--out", out])
    assert code == 0
    return out


def test_parser_has_every_subcommand():
    p = build_parser()
    for cmd in ("gen-dataset", "train", "invert", "classical", "eval", "sweep", "import-vna"):
        with pytest.raises(SystemExit) as exc:
            p.parse_args([cmd, "--help"])
        assert exc.value.code == 0


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--dataset", "x"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["classical", "--method", "music", "--input", "a", "--out", "b"])
    assert exc.value.code == 2


def test_gen_dataset(tmp_path, capsys):
    out = str(tmp_path / "ds")
    assert main(["gen-dataset", "--out", out, "--types", "homo", "--limit", "2"]) == 0
    with open(os.path.join(out, "manifest.csv")) as fh:
        lines = fh.read().splitlines()
    assert lines[0].startswith("id,type") and len(lines) == 3
    assert main(["gen-dataset", "--out", str(tmp_path / "e"), "--types", "brick"]) == 2
    assert main(["gen-dataset", "--out", str(tmp_path / "f"), "--standoff", "-0.1", "--limit", "1"]) == 2


def test_train_writes_bundle_and_log(trained):
    b = ModelBundle.load(trained)
    assert b.variant.tag == "ANNf"
    log = TrainLog.from_csv(trained + ".log.csv")
    assert len(log) == 2


def test_invert_from_case_and_text(trained, tiny_dataset, tmp_path):
    case = tiny_dataset.ids()[0]
    path = os.path.join(tiny_dataset.root, case.split("-")[0], case + ".wpb")
    out = str(tmp_path / "p")
    assert main(["invert", "--model", trained, "--input", path, "--out", out]) == 0
    prof = read_profile_csv(out + ".csv")
    assert prof.shape == (32, 32) and read_pgm(out + ".pgm").shape == (32, 32)
    txt = tmp_path / "v.txt"
    txt.write_text(" ".join(repr(float(v)) for v in tiny_dataset.case(case).freq_input))
    assert main(["invert", "--model", trained, "--input", str(txt), "--out", str(tmp_path / "q")]) == 0
    assert read_profile_csv(str(tmp_path / "q.csv")) == prof
    txt.write_text("1 2 x\n")
    assert main(["invert", "--model", trained, "--input", str(txt), "--out", out]) == 4
    txt.write_text("1 2 3\n")
    assert main(["invert", "--model", trained, "--input", str(txt), "--out", out]) == 2
    assert main(["invert", "--model", str(tmp_path / "none.wpm"), "--input", path, "--out", out]) == 4


def test_classical(tiny_dataset, tmp_path, capsys):
    case = tiny_dataset.ids()[0]
    path = os.path.join(tiny_dataset.root, case.split("-")[0], case + ".wpb")
    out = str(tmp_path / "c")
    assert main(["classical", "--method", "bp", "--input", path, "--out", out]) == 0
    assert read_profile_csv(out + ".csv").values.min() >= 1.0
    assert main(["classical", "--method", "bam", "--input", path, "--lambda", "-1", "--out", out]) == 2
    txt = tmp_path / "v.txt"
    txt.write_text("1 2 3")
    assert main(["classical", "--method", "bp", "--input", str(txt), "--out", out]) == 4


def test_eval(tiny_dataset, trained, tmp_path, capsys):
    models = tmp_path / "models"
    models.mkdir()
    os.link(trained, models / "gan-annf.wpm")
    rep = str(tmp_path / "r.csv")
    assert main(["eval", "--dataset", tiny_dataset.root, "--methods", "bp,gan-annf", "--models", str(models),
                 "--report", rep]) == 0
    assert "gan-annf" in capsys.readouterr().out
    with open(rep) as fh:
        assert fh.readline().strip() == "method,case,type,nmse"
    assert main(["eval", "--dataset", tiny_dataset.root, "--methods", "gan-cnnt", "--models", str(models),
                 "--report", rep]) == 2
    assert main(["eval", "--dataset", str(tmp_path / "nowhere"), "--methods", "bp", "--report", rep]) == 4


def test_sweep(tiny_dataset, tmp_path):
    conf = tmp_path / "s.json"
    conf.write_text(json.dumps({"dataset": tiny_dataset.root, "counts": [2, 10], "variant": "ANNf", "epochs": 1,
                                "batch": 4}))
    rep = str(tmp_path / "sw.csv")
    assert main(["sweep", "--kind", "receivers", "--config", str(conf), "--report", rep]) == 0
    with open(rep) as fh:
        assert fh.read().splitlines()[0] == "count,method,nmse"
    conf.write_text(json.dumps({"dataset": tiny_dataset.root, "values": [0.0]}))
    assert main(["sweep", "--kind", "standoff", "--config", str(conf), "--report", rep]) == 2
    conf.write_text("{bad json")
    assert main(["sweep", "--kind", "lossy", "--config", str(conf), "--report", rep]) == 4
    conf.write_text(json.dumps({"walls": ["airgap,eps_r=4,th=0.3,n_gaps=2"]}))
    assert main(["sweep", "--kind", "lossy", "--config", str(conf), "--report", rep]) == 2
    conf.write_text(json.dumps({"counts": [2]}))
    assert main(["sweep", "--kind", "receivers", "--config", str(conf), "--report", rep]) == 2


def test_import_vna(trained, tmp_path):
    csv_p = tmp_path / "m.csv"
    csv_p.write_text("receiver_index,re,im\n" + "\n".join(f"{k},{0.01 * k},0" for k in range(1, 11)) + "\n")
    out = str(tmp_path / "v")
    assert main(["import-vna", "--csv", str(csv_p), "--model", trained, "--out", out]) == 0
    assert np.all(np.isfinite(read_profile_csv(out + ".csv").values))
    csv_p.write_text("\n".join(f"{k},0,0" for k in range(1, 10)) + "\n")
    assert main(["import-vna", "--csv", str(csv_p), "--model", trained, "--out", out]) == 4


def test_import_vna_rejects_time_model(tiny_dataset, tmp_path):
    out = str(tmp_path / "t.wpm")
    assert main(["train", "--dataset", tiny_dataset.root, "--model", "fcnn-t", "--epochs", "1", "--batch", "4",
                 "--out", out]) == 0
    csv_p = tmp_path / "m.csv"
    csv_p.write_text("\n".join(f"{k},0,0" for k in range(1, 11)) + "\n")
    assert main(["import-vna", "--csv", str(csv_p), "--model", out, "--out", str(tmp_path / "v")]) == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "wallprobe.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "import-vna" in r.stdout
