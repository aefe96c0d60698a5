"""Dataset statistics (counts, average lengths, TER moments, tag counts) and
the TER-range histogram.

Conventions: the standard deviation is the population one (divide by n) and
the median of an even-sized sample is the lower of the two middle values.
"""
import json
import math
import os
from array import array
from dataclasses import asdict, dataclass, field
from typing import List

from .errors import ConfigError, InvariantError
from .pipeline import FILES, _text_lines, _zip_strict
from .tags import BAD, OK

BIN_WIDTH = 0.1
N_BINS = 10
CONVENTIONS = "std: population (divide by n); median: lower middle value for even counts"


def ter_bin(ter):
    """Histogram bin of a TER value: k for [k/10, (k+1)/10), N_BINS for >= 1.0."""
    if ter < 0 or math.isnan(ter):
        raise ValueError(f"invalid TER value {ter!r}")
    if ter >= 1.0:
        return N_BINS
    # Scale by 10 then floor; guard float artefacts like 0.3 -> 2.9999999999999996.
    k = int(math.floor(ter * 10 + 1e-9))
    return min(k, N_BINS - 1)


def bin_label(k):
    if k == N_BINS:
        return ">=1.0"
    return f"{k / 10:.1f}-{(k + 1) / 10:.1f}"


@dataclass
class TerHistogram:
    counts: List[int] = field(default_factory=lambda: [0] * (N_BINS + 1))

    @property
    def bins(self):
        return self.counts[:N_BINS]

    @property
    def overflow(self):
        return self.counts[N_BINS]

    @property
    def total(self):
        return sum(self.counts)

    def add(self, ter):
        self.counts[ter_bin(ter)] += 1

    def to_json(self):
        return {bin_label(k): c for k, c in enumerate(self.counts)}


@dataclass
class CorpusStats:
    sentence_counts: dict
    token_counts: dict
    avg_tokens_per_sentence: dict
    ter_mean: float
    ter_median: float
    ter_std: float
    ter_variance: float
    tag_counts: dict
    ter_mode: str = "no-shifts"
    conventions: str = CONVENTIONS

    def to_json(self):
        return asdict(self)


def ter_moments(values):
    """(mean, lower median, population std, population variance) of a TER sample."""
    n = len(values)
    if n == 0:
        raise ConfigError("no TER values")
    mean = math.fsum(values) / n
    variance = math.fsum((v - mean) ** 2 for v in values) / n
    ordered = sorted(values)
    median = ordered[(n - 1) // 2]
    return mean, median, math.sqrt(variance), variance


def _dataset_dir(manifest_or_dir):
    directory = getattr(manifest_or_dir, "directory", manifest_or_dir)
    mode = getattr(manifest_or_dir, "ter_mode", None)
    if mode is None and os.path.exists(os.path.join(directory, "manifest.json")):
        with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
            mode = json.load(fh).get("ter_mode")
    return directory, mode or "no-shifts"


def scan(manifest_or_dir):
    """Single pass over a dataset; returns (CorpusStats, TerHistogram)."""
    directory, ter_mode = _dataset_dir(manifest_or_dir)
    roles = ("src", "mt", "pe", "source_tags", "mt_tags", "ter")
    paths = [os.path.join(directory, FILES[r]) for r in roles]
    for p in paths:
        if not os.path.exists(p):
            raise ConfigError(f"missing dataset file {p}")
    tokens = {"source": 0, "mt": 0, "pe": 0}
    tags = {"source_ok": 0, "source_bad": 0, "mt_ok": 0, "mt_bad": 0}
    ters = array("d")
    hist = TerHistogram()
    n = 0
    for line_no, (src, mt, pe, stags, mtags, ter) in enumerate(
            _zip_strict([(p, _text_lines(p)) for p in paths]), 1):
        n_src, n_mt = len(src.split()), len(mt.split())
        tokens["source"] += n_src
        tokens["mt"] += n_mt
        tokens["pe"] += len(pe.split())
        stags, mtags = stags.split(), mtags.split()
        if len(stags) != n_src or len(mtags) != 2 * n_mt + 1:
            raise InvariantError(f"{directory}: tag length mismatch on line {line_no}")
        for prefix, seq in (("source", stags), ("mt", mtags)):
            bad = seq.count(BAD)
            if bad + seq.count(OK) != len(seq):
                raise InvariantError(f"{directory}: unknown tag on line {line_no}")
            tags[prefix + "_bad"] += bad
            tags[prefix + "_ok"] += len(seq) - bad
        value = float(ter)
        ters.append(value)
        hist.add(value)
        n += 1
    if n == 0:
        raise ConfigError(f"{directory}: empty dataset")
    mean, median, std, var = ter_moments(ters)
    stats = CorpusStats(
        sentence_counts={"source": n, "mt": n, "pe": n},
        token_counts=tokens,
        avg_tokens_per_sentence={k: v / n for k, v in tokens.items()},
        ter_mean=mean, ter_median=median, ter_std=std, ter_variance=var,
        tag_counts=tags, ter_mode=ter_mode,
    )
    return stats, hist


def corpus_stats(manifest_or_dir):
    return scan(manifest_or_dir)[0]


def ter_histogram(manifest_or_dir):
    return scan(manifest_or_dir)[1]


ROWS = (
    ("# of Source Sentences", lambda s: f"{s.sentence_counts['source']:,}"),
    ("# of MT Output", lambda s: f"{s.sentence_counts['mt']:,}"),
    ("# of pseudo-PE", lambda s: f"{s.sentence_counts['pe']:,}"),
    ("# of Source Tokens", lambda s: f"{s.token_counts['source']:,}"),
    ("# of MT Output Tokens", lambda s: f"{s.token_counts['mt']:,}"),
    ("# of pseudo-PE Tokens", lambda s: f"{s.token_counts['pe']:,}"),
    ("Average Token Per Source Sentence", lambda s: f"{s.avg_tokens_per_sentence['source']:.2f}"),
    ("Average Token Per MT Output", lambda s: f"{s.avg_tokens_per_sentence['mt']:.2f}"),
    ("Average Token Per pseudo-PE", lambda s: f"{s.avg_tokens_per_sentence['pe']:.2f}"),
    ("Mean TER", lambda s: f"{s.ter_mean:.2f}"),
    ("Median TER", lambda s: f"{s.ter_median:.2f}"),
    ("STD TER", lambda s: f"{s.ter_std:.2f}"),
    ("Variance TER", lambda s: f"{s.ter_variance:.2f}"),
    ("# Source OK tags", lambda s: f"{s.tag_counts['source_ok']:,}"),
    ("# Source BAD tags", lambda s: f"{s.tag_counts['source_bad']:,}"),
    ("# MT Output OK tags", lambda s: f"{s.tag_counts['mt_ok']:,}"),
    ("# MT Output BAD tags", lambda s: f"{s.tag_counts['mt_bad']:,}"),
)


def format_report(stats, hist=None):
    width = max(len(name) for name, _ in ROWS)
    lines = [f"# TER mode: {stats.ter_mode}; {stats.conventions}"]
    lines += [f"{name:<{width}}  {fmt(stats)}" for name, fmt in ROWS]
    if hist is not None:
        lines.append("")
        lines.append("TER Range  Count")
        lines += [f"{bin_label(k):<9}  {c:,}" for k, c in enumerate(hist.counts)]
    return "\n".join(lines) + "\n"


def write_reports(stats, hist, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    data = stats.to_json()
    data["ter_histogram"] = hist.to_json()
    with open(os.path.join(out_dir, "stats.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "stats.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report(stats, hist))
