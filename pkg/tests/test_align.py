import math
import random
from collections import defaultdict

import pytest
from hypothesis import given, strategies as st

from qeforge.align import (GDFA, INTERSECTION, NULL, UNION, AlignerConfig, AlignmentSet,
                           TranslationTable, WordAligner, log_likelihood, symmetrize, train,
                           viterbi_align)
from qeforge.errors import ConfigError, InvariantError

TOY = [(["a", "b"], ["x", "y"]), (["a"], ["x"]), (["b"], ["y"])]


def ibm1_oracle(corpus, iterations=2):
    """Plain IBM Model 1 (with NULL), written independently of the production aligner."""
    tgt_vocab = {f for _, tgt in corpus for f in tgt}
    t = defaultdict(lambda: 1.0 / len(tgt_vocab))
    for _ in range(iterations):
        count, total = defaultdict(float), defaultdict(float)
        for src, tgt in corpus:
            src = ["<null>"] + src
            for f in tgt:
                z = sum(t[(f, e)] for e in src)
                for e in src:
                    c = t[(f, e)] / z
                    count[(f, e)] += c
                    total[e] += c
        t = defaultdict(float, {(f, e): c / total[e] for (f, e), c in count.items()})
    return t


def oracle_viterbi(t, src, tgt):
    links = set()
    for j, f in enumerate(tgt):
        scores = [t[(f, e)] for e in src]
        if max(scores) > t[(f, "<null>")]:
            links.add((scores.index(max(scores)), j))
    return links


def test_toy_oracle_agrees():
    t = ibm1_oracle(TOY)
    assert oracle_viterbi(t, ["a", "b"], ["x", "y"]) == {(0, 0), (1, 1)}
    model = train(TOY, AlignerConfig())
    assert viterbi_align(model, (["a", "b"], ["x", "y"])) == {(0, 0), (1, 1)}


def test_single_candidate_converges():
    model = train([(["a"], ["b"])] * 100, AlignerConfig(iterations=5))
    assert model.probs["a"]["b"] >= 0.99
    assert viterbi_align(model, (["a"], ["b"])) == {(0, 0)}


def test_empty_corpus_is_an_error():
    with pytest.raises(ConfigError):
        train([], AlignerConfig())
    with pytest.raises(ConfigError):
        train([([], ["x"])], AlignerConfig())


def test_config_ranges():
    with pytest.raises(ConfigError):
        AlignerConfig(iterations=0)
    with pytest.raises(ConfigError):
        AlignerConfig(p0=1.0)
    with pytest.raises(ConfigError):
        AlignerConfig(tension=-1)


def test_null_winner_leaves_target_unaligned():
    model = TranslationTable({NULL: {"x": 1.0}, "a": {"y": 1.0}})
    assert viterbi_align(model, (["a"], ["x", "y"])) == {(0, 1)}


def test_viterbi_ties_go_to_smaller_index():
    model = TranslationTable({NULL: {"x": 1e-12}, "a": {"x": 1.0}}, favor_diagonal=False)
    assert viterbi_align(model, (["a", "a", "a"], ["x"])) == {(0, 0)}


def random_corpus(n, seed):
    rng = random.Random(seed)
    vocab = "abcdefgh"
    corpus = []
    for _ in range(n):
        src = [rng.choice(vocab) for _ in range(rng.randint(1, 8))]
        tgt = [s.upper() if rng.random() < 0.85 else rng.choice(vocab).upper() for s in src]
        if rng.random() < 0.3 and len(tgt) > 1:
            tgt.pop(rng.randrange(len(tgt)))
        corpus.append((src, tgt))
    return corpus


@pytest.mark.parametrize("favor_diagonal", [True, False])
def test_em_monotone_and_row_stochastic(favor_diagonal):
    corpus = random_corpus(300, 3)
    history = []
    model = train(corpus, AlignerConfig(iterations=6, favor_diagonal=favor_diagonal), history)
    assert len(history) == 6
    final = log_likelihood(model, corpus)
    seq = history + [final]
    assert all(b >= a - 1e-6 for a, b in zip(seq, seq[1:]))
    for row in model.probs.values():
        assert math.fsum(row.values()) == pytest.approx(1.0, abs=1e-9)
        assert all(0.0 <= p <= 1.0 for p in row.values())


def test_learns_diagonal_mapping():
    corpus = [(src, [s.upper() for s in src]) for src, _ in random_corpus(400, 9)]
    model = train(corpus, AlignerConfig())
    assert viterbi_align(model, (list("abc"), list("ABC"))) == {(0, 0), (1, 1), (2, 2)}


def test_tension_optimization_moves_tension():
    corpus = [(src, [s.upper() for s in src]) for src, _ in random_corpus(200, 4)]
    model = train(corpus, AlignerConfig(optimize_tension=True, tension=1.0))
    assert model.tension != 1.0
    assert 0.1 <= model.tension <= 14.0
    # Perfectly monotone data should pull the tension up.
    assert model.tension > 1.0


def test_model_file_round_trip(tmp_path):
    model = train(random_corpus(50, 1), AlignerConfig())
    path = tmp_path / "m.ttable"
    model.save(str(path))
    loaded = TranslationTable.load(str(path))
    assert loaded == model
    loaded.save(str(tmp_path / "again.ttable"))
    assert (tmp_path / "again.ttable").read_bytes() == path.read_bytes()


def test_word_aligner_save_load(tmp_path):
    aligner = WordAligner().fit(random_corpus(50, 2))
    aligner.save(str(tmp_path))
    again = WordAligner.load(str(tmp_path))
    pair = (list("abc"), list("ABC"))
    assert again.align(*pair) == aligner.align(*pair)


def test_pharaoh_format():
    a = AlignmentSet.from_pharaoh("8-12 0-3 8-11")
    assert a == {(0, 3), (8, 11), (8, 12)}
    assert a.to_pharaoh() == "0-3 8-11 8-12"
    assert AlignmentSet.from_pharaoh("") == set()
    with pytest.raises(ValueError):
        AlignmentSet.from_pharaoh("0_1")


def test_symmetrize_examples():
    fwd, rev = {(0, 0), (1, 1)}, {(0, 0)}
    assert symmetrize(fwd, rev, INTERSECTION) == {(0, 0)}
    assert symmetrize(fwd, rev, UNION) == {(0, 0), (1, 1)}
    fwd, rev = {(0, 0), (1, 2)}, {(0, 0), (1, 1), (1, 2)}
    assert symmetrize(fwd, rev, GDFA) == {(0, 0), (1, 2), (1, 1)}


def test_gdfa_final_and_adds_isolated_points():
    # (2,3) is only in forward and not adjacent to the intersection; both ends unaligned.
    fwd, rev = {(0, 0), (2, 3)}, {(0, 0)}
    assert symmetrize(fwd, rev, GDFA, 4, 4) == {(0, 0), (2, 3)}
    # (0,1) shares source 0 with an existing link and is not a neighbour-growth candidate
    # via an unaligned word, so final-and rejects it.
    fwd, rev = {(0, 0), (0, 2)}, {(0, 0)}
    assert symmetrize(fwd, rev, GDFA, 3, 3) == {(0, 0)}


def test_symmetrize_out_of_range():
    with pytest.raises(InvariantError):
        symmetrize({(5, 0)}, set(), GDFA, 2, 2)


links = st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=12)


@given(links, links)
def test_symmetrize_nesting(a, b):
    inter = symmetrize(a, b, INTERSECTION, 6, 6)
    grown = symmetrize(a, b, GDFA, 6, 6)
    union = symmetrize(a, b, UNION, 6, 6)
    assert inter <= grown <= union
