import json
import random

import pytest
from hypothesis import given, strategies as st

from qeforge.errors import ConfigError, InvariantError
from qeforge.pipeline import FILES
from qeforge.stats import (N_BINS, TerHistogram, corpus_stats, format_report, scan, ter_bin,
                           ter_histogram, ter_moments, write_reports)


def write_dataset(directory, records):
    """records: list of (src, mt, pe, source_tags, mt_tags, ter) strings/floats."""
    directory.mkdir(parents=True, exist_ok=True)
    cols = {r: [] for r in FILES}
    for src, mt, pe, stags, mtags, ter in records:
        cols["src"].append(src)
        cols["mt"].append(mt)
        cols["pe"].append(pe)
        cols["source_tags"].append(stags)
        cols["mt_tags"].append(mtags)
        cols["alignments"].append("")
        cols["ter"].append(repr(float(ter)))
    for role, lines in cols.items():
        (directory / FILES[role]).write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    return str(directory)


TWO = [("s1 s2", "a b", "a b", "OK OK", "OK OK OK OK OK", 0.0),
       ("s1", "a", "b c", "BAD", "OK BAD BAD", 1 / 2)]


def test_two_record_fixture(tmp_path):
    stats = corpus_stats(write_dataset(tmp_path / "d", TWO))
    assert stats.ter_mean == 0.25
    assert stats.ter_median == 0.0
    assert stats.ter_variance == 0.0625
    assert stats.ter_std == 0.25
    assert stats.sentence_counts == {"source": 2, "mt": 2, "pe": 2}
    assert stats.token_counts == {"source": 3, "mt": 3, "pe": 4}
    assert stats.avg_tokens_per_sentence["pe"] == 2.0
    assert stats.tag_counts == {"source_ok": 2, "source_bad": 1, "mt_ok": 6, "mt_bad": 2}


def test_identical_pairs_have_zero_moments(tmp_path):
    recs = [("x", "a b", "a b", "OK", "OK OK OK OK OK", 0.0)] * 5
    s = corpus_stats(write_dataset(tmp_path / "d", recs))
    assert (s.ter_mean, s.ter_median, s.ter_std, s.ter_variance) == (0, 0, 0, 0)


def test_moments_conventions():
    assert ter_moments([0.4, 0.1, 0.3, 0.2]) == pytest.approx((0.25, 0.2, 0.1118034, 0.0125))
    assert ter_moments([0.3, 0.1, 0.2])[1] == 0.2
    with pytest.raises(ConfigError):
        ter_moments([])


def test_histogram_examples():
    h = TerHistogram()
    for t in (0.05, 0.15, 0.15):
        h.add(t)
    assert h.bins == [1, 2, 0, 0, 0, 0, 0, 0, 0, 0] and h.overflow == 0
    h = TerHistogram()
    h.add(1.3)
    h.add(1.0)
    assert h.overflow == 2
    h = TerHistogram()
    for k in range(10):
        h.add(k / 10)
    assert h.bins == [1] * 10
    assert ter_bin(3 / 10) == 3 and ter_bin(0.7) == 7 and ter_bin(0.0999) == 0


@given(st.lists(st.fractions(0, 3).map(float), min_size=1, max_size=50))
def test_histogram_total(values):
    h = TerHistogram()
    for v in values:
        h.add(v)
    assert h.total == len(values)
    assert len(h.counts) == N_BINS + 1


def test_permutation_invariance_and_report_stability(tmp_path):
    rng = random.Random(0)
    recs = []
    for _ in range(40):
        n = rng.randint(1, 5)
        mtags = " ".join(rng.choice(["OK", "BAD"]) for _ in range(2 * n + 1))
        recs.append(("s", " ".join(["w"] * n), "p q", rng.choice(["OK", "BAD"]), mtags,
                     rng.randint(0, 12) / 7))
    a_stats, a_hist = scan(write_dataset(tmp_path / "a", recs))
    rng.shuffle(recs)
    b_stats, b_hist = scan(write_dataset(tmp_path / "b", recs))
    assert a_stats.tag_counts == b_stats.tag_counts
    assert a_stats.ter_median == b_stats.ter_median
    assert a_stats.ter_mean == pytest.approx(b_stats.ter_mean, abs=1e-15)
    assert a_hist == b_hist
    assert format_report(a_stats, a_hist) == format_report(a_stats, a_hist)
    assert a_stats.ter_variance == pytest.approx(a_stats.ter_std ** 2, rel=1e-12)


def test_reports_written(tmp_path):
    d = write_dataset(tmp_path / "d", TWO)
    stats, hist = scan(d)
    write_reports(stats, hist, d)
    data = json.load(open(f"{d}/stats.json"))
    assert data["ter_mean"] == 0.25 and data["tag_counts"]["mt_bad"] == 2
    assert data["ter_histogram"]["0.0-0.1"] == 1 and data["ter_histogram"]["0.5-0.6"] == 1
    text = open(f"{d}/stats.txt").read()
    assert "Mean TER" in text and "population" in text and "Average Token Per MT Output" in text
    assert ter_histogram(d).total == 2


def test_bad_datasets(tmp_path):
    with pytest.raises(ConfigError):
        corpus_stats(write_dataset(tmp_path / "e", []))
    with pytest.raises(InvariantError):
        corpus_stats(write_dataset(tmp_path / "x", [("a", "b", "c", "OK", "OK OK", 0.0)]))
    with pytest.raises(ConfigError):
        corpus_stats(str(tmp_path / "missing"))
