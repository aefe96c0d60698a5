"""Word-level tag evaluation with the Matthews correlation coefficient.

BAD is the positive class. Token and gap tags are pooled into one target
score unless gaps are split out explicitly.
"""
import math
from dataclasses import dataclass

from .errors import ConfigError
from .stats import N_BINS, bin_label, ter_bin
from .tags import BAD, OK


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    def update(self, pred, gold):
        for p, g in zip(pred, gold):
            if p == BAD:
                if g == BAD:
                    self.tp += 1
                else:
                    self.fp += 1
            elif g == BAD:
                self.fn += 1
            else:
                self.tn += 1
        return self

    def mcc(self):
        """Matthews correlation; 0.0 when any marginal is empty."""
        tp, fp, tn, fn = self.tp, self.fp, self.tn, self.fn
        denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        if denom == 0:
            return 0.0
        return (tp * tn - fp * fn) / math.sqrt(denom)


def mcc_from_counts(tp, fp, tn, fn):
    return ConfusionCounts(tp, fp, tn, fn).mcc()


def read_tag_file(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            tags = line.split()
            for t in tags:
                if t not in (OK, BAD):
                    raise ConfigError(f"{path}:{n}: unknown tag {t!r}")
            rows.append(tags)
    return rows


def _as_rows(tags):
    return read_tag_file(tags) if isinstance(tags, str) else [list(r) for r in tags]


def _check_rows(pred, gold):
    if len(pred) != len(gold):
        raise ConfigError(f"prediction has {len(pred)} lines, gold has {len(gold)}")
    for n, (p, g) in enumerate(zip(pred, gold), 1):
        if len(p) != len(g):
            raise ConfigError(f"line {n}: {len(p)} predicted tags vs {len(g)} gold tags")


def confusion(pred, gold, select=None):
    """Pooled ConfusionCounts; ``select`` optionally slices each row (e.g. gaps only)."""
    pred, gold = _as_rows(pred), _as_rows(gold)
    _check_rows(pred, gold)
    counts = ConfusionCounts()
    for p, g in zip(pred, gold):
        if select is not None:
            p, g = select(p), select(g)
        counts.update(p, g)
    return counts


def mcc(pred, gold):
    """Pooled MCC of two tag files (paths or lists of tag rows)."""
    return confusion(pred, gold).mcc()


def read_ter_file(path):
    with open(path, encoding="utf-8") as fh:
        return [float(line) for line in fh if line.strip()]


def evaluate_by_ter_range(pred, gold, ter):
    """Pooled MCC per 0.1-wide TER bin (plus the >=1.0 overflow bin).

    Returns a list of dicts {range, mcc, count}; ``mcc`` is None for empty bins
    and ``count`` is the number of records in the bin.
    """
    pred, gold = _as_rows(pred), _as_rows(gold)
    _check_rows(pred, gold)
    ters = read_ter_file(ter) if isinstance(ter, str) else list(ter)
    if len(ters) != len(gold):
        raise ConfigError(f"TER file has {len(ters)} lines, tag files have {len(gold)}")
    bins = [ConfusionCounts() for _ in range(N_BINS + 1)]
    sizes = [0] * (N_BINS + 1)
    for p, g, t in zip(pred, gold, ters):
        k = ter_bin(t)
        bins[k].update(p, g)
        sizes[k] += 1
    return [{"range": bin_label(k), "mcc": bins[k].mcc() if sizes[k] else None,
             "count": sizes[k]} for k in range(N_BINS + 1)]


def evaluate(pred_mt, gold_mt, pred_src=None, gold_src=None, ter=None, split_gaps=False):
    """JSON-ready report: target/source MCC and, given a TER file, per-bin target MCC."""
    report = {"positive_class": BAD, "zero_denominator": 0.0,
              "target_mcc": mcc(pred_mt, gold_mt)}
    report["source_mcc"] = mcc(pred_src, gold_src) if pred_src is not None else None
    if split_gaps:
        report["target_token_mcc"] = confusion(pred_mt, gold_mt, lambda r: r[1::2]).mcc()
        report["target_gap_mcc"] = confusion(pred_mt, gold_mt, lambda r: r[0::2]).mcc()
    report["per_bin"] = evaluate_by_ter_range(pred_mt, gold_mt, ter) if ter is not None else []
    return report


def format_report(report):
    def fmt(x):
        return "n/a" if x is None else f"{x:.4f}"

    lines = [f"Target MCC  {fmt(report['target_mcc'])}",
             f"Source MCC  {fmt(report['source_mcc'])}"]
    if "target_token_mcc" in report:
        lines.append(f"Target MCC (tokens)  {fmt(report['target_token_mcc'])}")
        lines.append(f"Target MCC (gaps)    {fmt(report['target_gap_mcc'])}")
    if report["per_bin"]:
        lines.append("")
        lines.append("TER Range  Target MCC  Records")
        for row in report["per_bin"]:
            lines.append(f"{row['range']:<9}  {fmt(row['mcc']):>10}  {row['count']}")
    return "\n".join(lines) + "\n"
