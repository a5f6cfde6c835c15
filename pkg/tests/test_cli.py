import pytest

from omnivid import cli, tensorio
from omnivid.export import read_ppm


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "data.kv").write_text("canvas = 16\nframes = 4\nT2V = 1\nI2V = 1\nFLF2V = 1\nInContextGen = 1\nInContextEdit = 1\n")
    (d / "plan.kv").write_text("optimizer = adam\nlr = 0.002\n")
    assert cli.main(["datagen", "--config", str(d / "data.kv"), "--seed", "7", "--out", str(d / "ds")]) == 0
    return d


def _main(capsys, argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_datagen_digest_deterministic(run_dir, capsys):
    args = ["datagen", "--config", run_dir / "data.kv", "--seed", 7]
    _, first, _ = _main(capsys, args + ["--out", run_dir / "d1"])
    _, second, _ = _main(capsys, args + ["--out", run_dir / "d2"])
    digest = [line for line in first.splitlines() if line.startswith("digest=")]
    assert digest and digest[0] in second


def test_train_then_inspect(run_dir, capsys):
    m = run_dir / "ds" / "manifest.jsonl"
    code, out, _ = _main(capsys, ["train", "--stage", 1, "--manifest", m, "--config", run_dir / "plan.kv",
                                  "--steps", 2, "--seed", 0, "--out", run_dir / "ck1"])
    assert code == 0 and "stage=1 step=2" in out
    code, out, _ = _main(capsys, ["inspect", "--checkpoint", run_dir / "ck1"])
    assert code == 0 and "stage=1" in out.splitlines()
    code, out, _ = _main(capsys, ["train", "--stage", 2, "--checkpoint", run_dir / "ck1", "--manifest", m,
                                  "--steps", 2, "--out", run_dir / "ck2"])
    assert code == 0 and "stage=2 step=4" in out
    assert (run_dir / "ck2" / "telemetry.csv").exists()


def test_generate_edit_eval(run_dir, capsys):
    m = run_dir / "ds" / "manifest.jsonl"
    ck = run_dir / "ck2"
    if not ck.exists():
        pytest.skip("depends on test_train_then_inspect")
    code, out, _ = _main(capsys, ["generate", "--checkpoint", ck, "--manifest", m, "--out", run_dir / "gen",
                                  "--sample-steps", 2])
    assert code == 0 and "generated=4" in out
    assert tensorio.load(run_dir / "gen" / "t2v_0000.tomn").shape == (4, 16, 16, 3)
    code, out, _ = _main(capsys, ["edit", "--checkpoint", ck, "--manifest", m, "--out", run_dir / "ed",
                                  "--sample-steps", 2, "--ppm"])
    assert code == 0 and "generated=1" in out
    assert read_ppm(run_dir / "ed" / "incontextedit_0000" / "frame_000.ppm").shape == (16, 16, 3)
    for name in ("r1", "r2"):
        code, _, _ = _main(capsys, ["eval", "--checkpoint", ck, "--manifest", m, "--out", run_dir / name,
                                    "--sample-steps", 2, "--seed", 4])
        assert code == 0
    for f in ("report.csv", "report.txt"):
        assert (run_dir / "r1" / f).read_bytes() == (run_dir / "r2" / f).read_bytes()


def test_generate_without_checkpoint(run_dir, capsys):
    code, _, err = _main(capsys, ["generate", "--manifest", run_dir / "ds" / "manifest.jsonl", "--out", run_dir])
    assert code == 2 and "--checkpoint" in err and len(err.strip().splitlines()) == 1


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["bogus"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["train", "--frobnicate"])
    assert e.value.code == 2
    capsys.readouterr()


def test_runtime_error_is_one_line(tmp_path, capsys):
    code, _, err = _main(capsys, ["inspect", "--checkpoint", tmp_path / "missing"])
    assert code == 1 and err.startswith("error: ") and len(err.strip().splitlines()) == 1


def test_bad_thread_env(monkeypatch, capsys, tmp_path):
    monkeypatch.setenv("OMNIVID_THREADS", "many")
    code, _, err = _main(capsys, ["inspect", "--checkpoint", tmp_path])
    assert code == 2 and "OMNIVID_THREADS" in err


def test_stage_conflict(run_dir, capsys, tmp_path):
    (tmp_path / "p.kv").write_text("stage = 2\n")
    code, _, err = _main(capsys, ["train", "--stage", 1, "--config", tmp_path / "p.kv",
                                  "--manifest", run_dir / "ds" / "manifest.jsonl", "--out", tmp_path / "o"])
    assert code == 2 and "stage" in err
