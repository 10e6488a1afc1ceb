from __future__ import annotations

import math
import random
import shutil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scylla.cli import Config
from scylla.harness import (
    GAP_CAP,
    RunRecord,
    compare,
    gap,
    main,
    parse_seeds,
    read_records,
    run_batch,
    shifted_geom_mean,
    summarize,
    write_records,
)


@pytest.fixture
def small_dir(tmp_path, data_dir):
    d = tmp_path / "inst"
    d.mkdir()
    for name in ("cover0", "knap1"):
        shutil.copy(data_dir / "mips" / f"{name}.mps", d)
    return d


def cfg():
    return Config("", time_limit_s=10)


def test_gap_examples():
    assert gap(110, 100) == 0.10
    assert gap(100, 100) == 0.0
    assert gap(0.5, 0.0) == GAP_CAP


def test_shifted_geom_mean_examples():
    assert shifted_geom_mean([10, 1000], 10) == pytest.approx(math.sqrt(20 * 1010) - 10)
    assert shifted_geom_mean([7.5] * 4, 3) == pytest.approx(7.5)
    assert shifted_geom_mean([1, 4], 0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        shifted_geom_mean([], 1)


def rec(i, seed=0, status="feasible", t=1.0, g=0.0):
    return RunRecord(f"i{i}", seed, status, t, 1.0, g, 3, 100, 0.01)


def test_summarize_examples():
    recs = [rec(i, t=2.5) for i in range(4)]
    assert summarize(recs)["all"]["time_sgm"] == pytest.approx(2.5)
    assert summarize([]) == {}
    s = summarize([rec(0, g=0.0), rec(1, g=0.1)], gap_shift=1)
    assert s["all"]["gap_sgm"] == pytest.approx(math.exp((math.log(1) + math.log(1.1)) / 2) - 1)


def test_summarize_single_record_reproduces_it():
    r = RunRecord("a", 0, "feasible", 3.25, 1.0, 0.2, 4, 50, 0.125)
    s = summarize([r])["all"]
    assert (s["runs"], s["found"]) == (1, 1)
    assert s["time_sgm"] == pytest.approx(3.25)
    assert s["gap_sgm"] == pytest.approx(0.2)
    assert s["overhead_mean"] == 0.125


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 10)), min_size=1, max_size=12), st.randoms())
def test_summarize_permutation_invariant(vals, rnd):
    recs = [rec(i, t=t, g=g) for i, (t, g) in enumerate(vals)]
    shuffled = recs[:]
    rnd.shuffle(shuffled)
    a, b = summarize(recs)["all"], summarize(shuffled)["all"]
    for k in a:
        assert a[k] == pytest.approx(b[k], rel=1e-12, abs=1e-12)


def test_buckets():
    recs = [rec(0), rec(1), rec(2), rec(3)]
    s = summarize(recs, lp_times={"i0": 0.5, "i1": 30, "i2": 120})
    assert s["[0,1)"]["runs"] == 1 and s["[1,60)"]["runs"] == 1 and s["[60,lim]"]["runs"] == 1
    assert s["unknown"]["runs"] == 1


def test_csv_round_trip(tmp_path):
    recs = [
        RunRecord("a", 0, "feasible", 0.1 + 0.2, -3.0, None, 2, 40, 1e-3),
        RunRecord("b", 1, "limit", 600.0, None, GAP_CAP, 1000, 20000, 0.5, "time limit"),
        RunRecord("c", 2, "error", 0.0, None, GAP_CAP, 0, 0, 0.0, "MpsError: x.mps:3: bad, really"),
    ]
    p = tmp_path / "r.csv"
    write_records(recs, p)
    assert "n/a" in p.read_text()
    assert read_records(p) == recs


def test_run_batch_counts_and_determinism(small_dir):
    a = run_batch(small_dir, [0, 1], cfg())
    assert len(a) == 4
    assert all(r.status == "feasible" for r in a)
    b = run_batch(small_dir, [0, 1], cfg())
    assert [r.outcome() for r in a] == [r.outcome() for r in b]


def test_run_batch_isolates_bad_instance(small_dir):
    (small_dir / "broken.mps").write_text("NAME broken\nROWS\n X r\nENDATA\n")
    recs = run_batch(small_dir, [0], cfg())
    assert len(recs) == 3
    bad = [r for r in recs if r.instance == "broken"]
    assert bad[0].status == "error" and "broken.mps:3" in bad[0].message
    assert sum(r.status == "feasible" for r in recs) == 2


def test_run_batch_gap_uses_best_known(small_dir):
    recs = run_batch(small_dir, [0], cfg(), {"cover0": 5.0})
    by = {r.instance: r for r in recs}
    assert by["cover0"].gap == gap(by["cover0"].objective, 5.0)
    assert by["knap1"].gap is None


def test_parallel_matches_serial(small_dir):
    serial = run_batch(small_dir, [0, 1], cfg())
    parallel = run_batch(small_dir, [0, 1], cfg(), workers=2)
    assert [r.outcome() for r in serial] == [r.outcome() for r in parallel]


def test_compare_counts_wins():
    a = [rec(0, t=1.0, g=0.0), rec(1, t=10.0, g=0.5), rec(2, status="limit", g=GAP_CAP)]
    b = [rec(0, t=1.05, g=0.0), rec(1, t=5.0, g=0.1), rec(2, t=2.0, g=0.3)]
    res = compare(a, b)
    assert res["instances"] == 3
    assert res["a"]["found"] == 2 and res["b"]["found"] == 3
    assert res["b"]["only"] == 1 and res["a"]["only"] == 0
    assert res["b"]["time_wins"] == 1 and res["a"]["time_wins"] == 0
    assert res["b"]["gap_wins"] == 2


def test_parse_seeds():
    assert parse_seeds("0..9") == list(range(10))
    assert parse_seeds("1,3,5") == [1, 3, 5]
    assert parse_seeds("0..1,7") == [0, 1, 7]
    with pytest.raises(ValueError):
        parse_seeds("")


def test_cli_run_and_compare(small_dir, tmp_path, capsys):
    bk = tmp_path / "bk.csv"
    bk.write_text("instance,objective\ncover0,5\n")
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--dir", str(small_dir), "--seeds", "0..1", "--out", str(out_a),
                 "--best-known", str(bk), "--time-limit", "10"]) == 0
    assert "all" in capsys.readouterr().out
    assert len(read_records(out_a)) == 4
    assert main(["run", "--dir", str(small_dir), "--seeds", "0", "--out", str(out_b)]) == 0
    assert main(["compare", str(out_a), str(out_b)]) == 0
    assert "instances in common: 2" in capsys.readouterr().out
    assert main(["run", "--dir", str(tmp_path / "nope"), "--out", str(out_b)]) == 3
