"""Word alignment: a reparameterized IBM Model 2 with a diagonal prior.

Lexical probabilities t(target | source) are learned with EM. The alignment
prior for target position i (1-based, of m) and source position j (of n) is

    p(a_i = 0)         = p0                                   (NULL)
    p(a_i = j)         = (1 - p0) * exp(-tension * |i/m - j/n|) / Z_i

or uniform over the n + 1 choices when ``favor_diagonal`` is off.
"""
import logging
import os
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass
from functools import lru_cache

from .errors import ConfigError, InvariantError

log = logging.getLogger(__name__)

NULL = None
NULL_TOKEN = "<NULL>"
FLOOR = 1e-9
MODEL_HEADER = "#qeforge-ttable"
MODEL_VERSION = 1
TENSION_BOUNDS = (0.1, 14.0)


@dataclass
class AlignerConfig:
    iterations: int = 5
    tension: float = 4.0
    p0: float = 0.08
    favor_diagonal: bool = True
    optimize_tension: bool = False

    def __post_init__(self):
        if not (isinstance(self.iterations, int) and self.iterations > 0):
            raise ConfigError(f"iterations must be a positive integer, got {self.iterations!r}")
        if not self.tension > 0:
            raise ConfigError(f"tension must be positive, got {self.tension!r}")
        if not 0 < self.p0 < 1:
            raise ConfigError(f"p0 must lie in (0, 1), got {self.p0!r}")


class AlignmentSet(frozenset):
    """Set of 0-based (source index, target index) links for one sentence pair."""

    def to_pharaoh(self):
        return " ".join(f"{i}-{j}" for i, j in sorted(self))

    @classmethod
    def from_pharaoh(cls, line):
        links = []
        for item in line.split():
            try:
                i, j = item.split("-")
                links.append((int(i), int(j)))
            except ValueError:
                raise ValueError(f"bad alignment link {item!r}") from None
        return cls(links)

    def transpose(self):
        return AlignmentSet((j, i) for i, j in self)

    def check(self, source_len, target_len):
        for i, j in self:
            if not (0 <= i < source_len and 0 <= j < target_len):
                raise InvariantError(
                    f"alignment link {i}-{j} out of range for lengths {source_len}x{target_len}")
        return self


class TranslationTable:
    """Sparse t(target | source) with a NULL source row and the learned tension."""

    def __init__(self, probs=None, tension=4.0, p0=0.08, favor_diagonal=True):
        self.probs = probs if probs is not None else {}
        self.tension = tension
        self.p0 = p0
        self.favor_diagonal = favor_diagonal

    def prob(self, source, target, floor=FLOOR):
        p = self.probs.get(source, {}).get(target, 0.0)
        return p if p > floor else floor

    def row_sums(self):
        return {src: math.fsum(row.values()) for src, row in self.probs.items()}

    def __eq__(self, other):
        return (isinstance(other, TranslationTable) and self.probs == other.probs
                and self.tension == other.tension and self.p0 == other.p0
                and self.favor_diagonal == other.favor_diagonal)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{MODEL_HEADER} v{MODEL_VERSION} tension={self.tension!r} "
                     f"p0={self.p0!r} favor_diagonal={int(self.favor_diagonal)}\n")
            for src, row in self.probs.items():
                name = NULL_TOKEN if src is NULL else src
                for tgt, p in row.items():
                    fh.write(f"{name} {tgt} {p!r}\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if not header or header[0] != MODEL_HEADER or header[1] != f"v{MODEL_VERSION}":
                raise ConfigError(f"{path}: not a qeforge translation table (v{MODEL_VERSION})")
            meta = dict(item.split("=", 1) for item in header[2:])
            probs = {}
            for n, line in enumerate(fh, 2):
                parts = line.split()
                if len(parts) != 3:
                    raise ConfigError(f"{path}:{n}: expected 'src tgt prob'")
                src = NULL if parts[0] == NULL_TOKEN else parts[0]
                probs.setdefault(src, {})[parts[1]] = float(parts[2])
        return cls(probs, float(meta["tension"]), float(meta["p0"]),
                   meta["favor_diagonal"] == "1")


@lru_cache(maxsize=4096)
def _diagonal_prior(m, n, tension, p0):
    """Non-NULL prior weights for each target position: tuple of m tuples of n floats."""
    rows = []
    for i in range(1, m + 1):
        w = [math.exp(-tension * abs(i / m - j / n)) for j in range(1, n + 1)]
        z = math.fsum(w)
        rows.append(tuple((1.0 - p0) * x / z for x in w))
    return tuple(rows)


def _prior(table_or_cfg, m, n):
    """Return (null_prob, rows) for a target of length m and source of length n."""
    if table_or_cfg.favor_diagonal:
        return table_or_cfg.p0, _diagonal_prior(m, n, table_or_cfg.tension, table_or_cfg.p0)
    u = 1.0 / (n + 1)
    return u, ((u,) * n,) * m


def _features(m, n):
    return [[-abs(i / m - j / n) for j in range(1, n + 1)] for i in range(1, m + 1)]


def _usable(pairs, warn=False):
    for k, (src, tgt) in enumerate(pairs):
        if not src or not tgt:
            if warn:
                log.warning("aligner: skipping pair %d with an empty side", k)
            continue
        yield src, tgt


def _optimize_tension(model, stats, steps=8, rate=20.0):
    """Gradient ascent on the expected complete-data log-likelihood in the tension.

    ``stats`` maps (m, n) to (target position, posterior-weighted feature,
    non-NULL posterior mass) rows collected in the E-step.
    """
    tokens = sum(len(rows) for rows in stats.values())
    if not tokens:
        return model.tension
    emp = math.fsum(w for rows in stats.values() for _, w, _ in rows)
    for _ in range(steps):
        mod = 0.0
        for (m, n), rows in stats.items():
            prior = _diagonal_prior(m, n, model.tension, model.p0)
            feats = _features(m, n)
            for i, _, mass in rows:
                expected = math.fsum(p * f for p, f in zip(prior[i], feats[i])) / (1.0 - model.p0)
                mod += mass * expected
        model.tension += rate * (emp - mod) / tokens
        model.tension = min(max(model.tension, TENSION_BOUNDS[0]), TENSION_BOUNDS[1])
    return model.tension


def train(pairs, config=None, history=None):
    """Fit a TranslationTable on (source, target) token-sequence pairs with EM.

    ``pairs`` must be re-iterable (each EM iteration makes one pass); a
    one-shot iterator is materialized. If ``history`` is a list, the corpus
    log-likelihood computed in each E-step is appended to it.
    """
    config = config or AlignerConfig()
    if iter(pairs) is pairs:
        pairs = list(pairs)

    targets = set()
    cooc = OrderedDict()
    n_pairs = 0
    for src, tgt in _usable(pairs, warn=True):
        n_pairs += 1
        targets.update(tgt)
        for e in (NULL, *src):
            row = cooc.setdefault(e, {})
            for f in tgt:
                row.setdefault(f, None)
    if n_pairs == 0:
        raise ConfigError("aligner: training corpus has no usable sentence pairs")

    init = 1.0 / len(targets)
    model = TranslationTable({e: dict.fromkeys(row, init) for e, row in cooc.items()},
                             config.tension, config.p0, config.favor_diagonal)

    for it in range(config.iterations):
        counts = OrderedDict((e, dict.fromkeys(row, 0.0)) for e, row in cooc.items())
        loglik = 0.0
        tension_stats = {}
        for src, tgt in _usable(pairs):
            m, n = len(tgt), len(src)
            p_null, prior = _prior(model, m, n)
            feats = _features(m, n) if config.optimize_tension else None
            null_row = model.probs[NULL]
            src_rows = [model.probs[e] for e in src]
            for i, f in enumerate(tgt):
                scores = [pr * row[f] for pr, row in zip(prior[i], src_rows)]
                s_null = p_null * null_row[f]
                z = s_null + math.fsum(scores)
                loglik += math.log(z)
                counts[NULL][f] += s_null / z
                for e, s in zip(src, scores):
                    counts[e][f] += s / z
                if feats is not None:
                    emp = math.fsum(s * x for s, x in zip(scores, feats[i])) / z
                    mass = (z - s_null) / z
                    tension_stats.setdefault((m, n), []).append((i, emp, mass))
        if history is not None:
            history.append(loglik)
        log.debug("aligner: iteration %d log-likelihood %.6f", it + 1, loglik)

        for e, row in counts.items():
            total = math.fsum(row.values())
            model.probs[e] = {f: c / total for f, c in row.items()} if total > 0 else \
                {f: 1.0 / len(row) for f in row}
        if config.optimize_tension and config.favor_diagonal:
            _optimize_tension(model, tension_stats)
    return model


def log_likelihood(model, pairs):
    """Corpus log-likelihood of the target sides under ``model``."""
    total = 0.0
    for src, tgt in _usable(pairs):
        p_null, prior = _prior(model, len(tgt), len(src))
        for i, f in enumerate(tgt):
            z = p_null * model.prob(NULL, f) + math.fsum(
                pr * model.prob(e, f) for pr, e in zip(prior[i], src))
            total += math.log(z)
    return total


def viterbi_align(model, pair):
    """Most probable link for each target word; NULL winners produce no link.

    Ties between source positions go to the smaller index; NULL only wins
    when strictly better than every source position.
    """
    src, tgt = pair
    if not src or not tgt:
        return AlignmentSet()
    p_null, prior = _prior(model, len(tgt), len(src))
    links = []
    for i, f in enumerate(tgt):
        best_j, best = 0, -1.0
        for j, e in enumerate(src):
            s = prior[i][j] * model.prob(e, f)
            if s > best:
                best_j, best = j, s
        if p_null * model.prob(NULL, f) <= best:
            links.append((best_j, i))
    return AlignmentSet(links)


INTERSECTION = "intersection"
UNION = "union"
GDFA = "grow-diag-final-and"
HEURISTICS = (INTERSECTION, UNION, GDFA)

_NEIGHBOURS = ((-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


def symmetrize(forward, reverse, heuristic=GDFA, source_len=None, target_len=None):
    """Combine two directional alignments of the same pair.

    Both sets must already be in (source, target) orientation; transpose the
    target-to-source alignment with :meth:`AlignmentSet.transpose` first.
    """
    if heuristic not in HEURISTICS:
        raise ValueError(f"unknown symmetrization heuristic {heuristic!r}")
    forward, reverse = AlignmentSet(forward), AlignmentSet(reverse)
    union = forward | reverse
    if source_len is None:
        source_len = max((i for i, _ in union), default=-1) + 1
    if target_len is None:
        target_len = max((j for _, j in union), default=-1) + 1
    forward.check(source_len, target_len)
    reverse.check(source_len, target_len)

    if heuristic == INTERSECTION:
        return AlignmentSet(forward & reverse)
    if heuristic == UNION:
        return AlignmentSet(union)

    links = set(forward & reverse)
    src_aligned = {i for i, _ in links}
    tgt_aligned = {j for _, j in links}

    def add(i, j):
        links.add((i, j))
        src_aligned.add(i)
        tgt_aligned.add(j)

    added = True
    while added:
        added = False
        for i in range(source_len):
            for j in range(target_len):
                if (i, j) not in links:
                    continue
                for di, dj in _NEIGHBOURS:
                    ni, nj = i + di, j + dj
                    if (ni, nj) in union and (ni, nj) not in links and (
                            ni not in src_aligned or nj not in tgt_aligned):
                        add(ni, nj)
                        added = True

    for directional in (forward, reverse):
        for i in range(source_len):
            for j in range(target_len):
                if (i, j) in directional and i not in src_aligned and j not in tgt_aligned:
                    add(i, j)
    return AlignmentSet(links)


def config_dict(config):
    return asdict(config)


FORWARD_ONLY = "forward"


class WordAligner:
    """Source-to-target aligner, optionally symmetrized with a reverse model."""

    def __init__(self, config=None, heuristic=GDFA, forward=None, reverse=None):
        if heuristic not in HEURISTICS + (FORWARD_ONLY,):
            raise ConfigError(f"unknown symmetrization {heuristic!r}")
        self.config = config or AlignerConfig()
        self.heuristic = heuristic
        self.forward = forward
        self.reverse = reverse
        self.history = {"forward": [], "reverse": []}

    @property
    def fitted(self):
        return self.forward is not None and (
            self.heuristic == FORWARD_ONLY or self.reverse is not None)

    def fit(self, pairs):
        """Train on a re-iterable of (source, target) pairs."""
        if iter(pairs) is pairs:
            pairs = list(pairs)
        self.forward = train(pairs, self.config, self.history["forward"])
        if self.heuristic != FORWARD_ONLY:
            self.reverse = train(_Swapped(pairs), self.config, self.history["reverse"])
        return self

    def align(self, source, target):
        fwd = viterbi_align(self.forward, (source, target))
        if self.heuristic == FORWARD_ONLY:
            return fwd
        rev = viterbi_align(self.reverse, (target, source)).transpose()
        return symmetrize(fwd, rev, self.heuristic, len(source), len(target))

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        self.forward.save(os.path.join(directory, "forward.ttable"))
        if self.reverse is not None:
            self.reverse.save(os.path.join(directory, "reverse.ttable"))

    @classmethod
    def load(cls, directory, heuristic=GDFA):
        forward = TranslationTable.load(os.path.join(directory, "forward.ttable"))
        rev_path = os.path.join(directory, "reverse.ttable")
        reverse = TranslationTable.load(rev_path) if os.path.exists(rev_path) else None
        if reverse is None and heuristic != FORWARD_ONLY:
            raise ConfigError(f"{directory}: no reverse.ttable for symmetrization {heuristic!r}")
        config = AlignerConfig(tension=forward.tension, p0=forward.p0,
                               favor_diagonal=forward.favor_diagonal)
        return cls(config, heuristic, forward, reverse)


class _Swapped:
    def __init__(self, pairs):
        self.pairs = pairs

    def __iter__(self):
        return ((tgt, src) for src, tgt in self.pairs)
