import csv
import io

import numpy as np
import pytest

from fracrank.cli import EXIT_FORMAT, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, threshold_curve
from fracrank.frac import threshold_values, ThresholdSpec


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def echoed(err):
    line = next(l for l in err.splitlines() if l.startswith("# command="))
    return line[2:]


def test_complete_single_row(capsys, tmp_path):
    out_csv = tmp_path / "r.csv"
    code, out, err = run(capsys, "complete", "--n", "100", "--rank", "11", "--sr", "0.4",
                         "--a", "1", "--jobs", "1", "--out", str(out_csv))
    assert code == EXIT_OK
    assert "(100, 11, 1.9240)" in out
    rows = list(csv.DictReader(out_csv.open()))
    assert len(rows) == 1 and rows[0]["converged"] == "true"
    assert float(rows[0]["re"]) <= 1e-4


def test_complete_failure_row_still_exits_zero(capsys):
    code, out, _ = run(capsys, "complete", "--n", "30", "--rank", "14", "--sr", "0.4",
                       "--max-iter", "300", "--jobs", "1")
    assert code == EXIT_OK
    assert out.splitlines()[-1].count("---") == 2


def test_missing_rank_is_usage_error(capsys):
    code, _, err = run(capsys, "complete", "--n", "100")
    assert code == EXIT_USAGE
    assert "usage:" in err and "--rank" in err


def test_bad_flag_values(capsys):
    assert run(capsys, "complete", "--n", "10", "--rank", "2", "--mu", "fast")[0] == EXIT_USAGE
    assert run(capsys, "complete", "--n", "10", "--rank", "2", "--lambda", "fixed:")[0] == EXIT_USAGE
    assert run(capsys, "complete", "--n", "10", "--rank", "20", "--jobs", "1")[0] == EXIT_USAGE


def test_config_precedence_and_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# sweep\nn = 20\nrank = 2\nsr = 0.6\nmax-iter = 50\n")
    code, _, err = run(capsys, "complete", "--config", str(cfg), "--max-iter", "40", "--jobs", "1")
    assert code == EXIT_OK
    line = echoed(err)
    assert "n=20" in line and "max_iter=40" in line and "sr=0.6" in line
    cfg.write_text("n = 20\nrank = 2\nbogus_key = 1\n")
    code, _, err = run(capsys, "complete", "--config", str(cfg))
    assert code == EXIT_USAGE and "bogus_key" in err


def test_echoed_config_reproduces_run(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("FRACRANK_SEED", "7")
    code, out1, err = run(capsys, "complete", "--n", "20", "--rank", "2", "--max-iter", "60",
                          "--jobs", "1", "--a", "1", "--a", "3")
    assert code == EXIT_OK and "seed=7" in echoed(err)
    cfg = tmp_path / "again.cfg"
    cfg.write_text("\n".join(part.replace("=", " = ", 1) for part in echoed(err).split()))
    monkeypatch.delenv("FRACRANK_SEED")
    code, out2, err2 = run(capsys, "complete", "--config", str(cfg))
    assert code == EXIT_OK
    strip = lambda s: [l.rsplit(None, 1)[0] for l in s.splitlines()]  # noqa: E731  drop timing
    assert strip(out1) == strip(out2)
    assert echoed(err2) == echoed(err)


def test_threshold_curve_csv(capsys):
    code, out, _ = run(capsys, "threshold-curve", "--step", "0.001")
    assert code == EXIT_OK
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["gamma", "a=1", "a=3", "a=5", "a=7", "a=30", "a=100"]
    table = np.array(rows[1:], dtype=float)
    zero = table[table[:, 0] == 0.0]
    assert zero.shape[0] == 1 and np.all(zero[0, 1:] == 0.0)
    assert np.all(np.diff(table[:, 1:], axis=0) >= 0)


def test_threshold_curve_dead_zone():
    step = 1e-3
    for a in (1.0, 3.0, 30.0):
        t = threshold_curve([a], 0.25, 1.0, 0.0, 2.0, step)
        t_star = ThresholdSpec.resolve(a, 0.25, 1.0).t_star
        first = t[np.flatnonzero(t[:, 1] != 0.0)[0], 0]
        assert t_star < first <= t_star + step + 1e-12
    # for a = 1 the dead zone is lambda * a / 2
    assert ThresholdSpec.resolve(1.0, 0.25, 1.0).t_star == threshold_values(0.25, 1.0)[1]


def test_generate_then_solve(capsys, tmp_path):
    samples, truth = tmp_path / "s.csv", tmp_path / "m.npy"
    code, out, _ = run(capsys, "generate", "--n", "30", "--rank", "2", "--sr", "0.5",
                       "--samples", str(samples), "--truth", str(truth))
    assert code == EXIT_OK and "FR" in out
    x_out, trace = tmp_path / "x.npy", tmp_path / "t.csv"
    code, out, _ = run(capsys, "solve", "--samples", str(samples), "--shape", "30x30",
                       "--rank", "2", "--truth", str(truth), "--stop", "target",
                       "--out", str(x_out), "--trace", str(trace))
    assert code == EXIT_OK and out.startswith("target")
    x, m = np.load(x_out), np.load(truth)
    assert np.linalg.norm(x - m) / np.linalg.norm(m) <= 1e-4
    assert trace.read_text().startswith("iter,objective,step_diff,lambda,rank,re")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_solve_exit_codes(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert run(capsys, "solve", "--samples", str(bad), "--rank", "1")[0] == EXIT_FORMAT
    assert run(capsys, "solve", "--samples", str(tmp_path / "missing.csv"), "--rank", "1")[0] == EXIT_FORMAT
    good = tmp_path / "g.csv"
    run(capsys, "generate", "--n", "10", "--rank", "1", "--samples", str(good))
    code, _, err = run(capsys, "solve", "--samples", str(good), "--shape", "10x10",
                       "--lambda", "fixed:1e-6", "--mu", "explicit:5")
    assert code == EXIT_NUMERIC and "NonFiniteError" in err
    assert run(capsys, "solve", "--samples", str(good))[0] == EXIT_USAGE


def test_inpaint_synthetic(capsys, tmp_path):
    code, out, _ = run(capsys, "inpaint", "--synthetic", "40x30", "--rank", "3", "--sr", "0.7",
                       "--a", "1", "--a", "5", "--jobs", "1", "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["metrics.csv", "synthetic_40x30_isvta_a1.png", "synthetic_40x30_isvta_a5.png",
                     "synthetic_40x30_mask.png", "synthetic_40x30_target.png"]
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "image,rank,sr,fr,method,a,re,time,converged" and len(lines) == 3


def test_inpaint_bad_image(capsys, tmp_path):
    bad = tmp_path / "x.pgm"
    bad.write_bytes(b"P5\n4 4\n255\n\x00")
    code, _, err = run(capsys, "inpaint", "--image", str(bad), "--rank", "1", "--out-dir", str(tmp_path))
    assert code == EXIT_FORMAT and "byte offset" in err
    assert run(capsys, "inpaint", "--rank", "1")[0] == EXIT_USAGE
