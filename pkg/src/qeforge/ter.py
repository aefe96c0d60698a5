"""Edit alignment between an MT hypothesis and its pseudo post-edit, and TER.

The monotone script produced by :func:`levenshtein_align` drives tagging.
:func:`shift_phase` adds Tercom-style block moves for TER reporting only.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

from .errors import InvariantError

MATCH = "Match"
SUBSTITUTE = "Substitute"
INSERT = "InsertIntoMt"  # PE word missing from the MT output
DELETE = "DeleteFromMt"  # extra MT word with no PE counterpart
SHIFT = "Shift"
KINDS = (MATCH, SUBSTITUTE, INSERT, DELETE, SHIFT)


@dataclass(frozen=True)
class EditOp:
    kind: str
    mt_index: Optional[int] = None
    pe_index: Optional[int] = None
    # InsertIntoMt: number of MT tokens preceding the missing word (the gap index).
    gap: Optional[int] = None
    # Shift only: span length and destination (index in the sequence after removal).
    length: Optional[int] = None
    dest: Optional[int] = None

    def serialize(self):
        if self.kind == SHIFT:
            return f"{SHIFT}:{self.mt_index}+{self.length}>{self.dest}:-"
        mt = "-" if self.mt_index is None else str(self.mt_index)
        pe = "-" if self.pe_index is None else str(self.pe_index)
        return f"{self.kind}:{mt}:{pe}"


@dataclass(frozen=True)
class EditScript:
    ops: Tuple[EditOp, ...]
    mt_length: int
    pe_length: int

    @property
    def cost(self):
        return sum(op.kind != MATCH for op in self.ops)

    def serialize(self):
        return ",".join(op.serialize() for op in self.ops)

    @classmethod
    def parse(cls, text, mt_length=None, pe_length=None):
        ops = []
        consumed_mt = 0
        max_pe = -1
        for item in filter(None, text.strip().split(",")):
            kind, mt, pe = item.split(":")
            if kind not in KINDS or kind == SHIFT:
                raise ValueError(f"cannot parse edit op {item!r}")
            mt_i = None if mt == "-" else int(mt)
            pe_i = None if pe == "-" else int(pe)
            gap = consumed_mt if kind == INSERT else None
            if mt_i is not None:
                consumed_mt = mt_i + 1
            if pe_i is not None:
                max_pe = max(max_pe, pe_i)
            ops.append(EditOp(kind, mt_i, pe_i, gap))
        script = cls(tuple(ops),
                     consumed_mt if mt_length is None else mt_length,
                     max_pe + 1 if pe_length is None else pe_length)
        check_script(script)
        return script


@dataclass(frozen=True)
class TerResult:
    edit_count: int
    ref_length: int
    script: EditScript
    shifts: Tuple[EditOp, ...] = ()
    shifted_mt: Optional[Tuple[str, ...]] = field(default=None, compare=False)

    @property
    def defined(self):
        return self.ref_length > 0

    @property
    def ter(self):
        """edit_count / ref_length as a float, or None when the reference is empty."""
        if not self.defined:
            return None
        return self.edit_count / self.ref_length

    @property
    def ter_fraction(self):
        return Fraction(self.edit_count, self.ref_length) if self.defined else None


def check_script(script):
    """Raise InvariantError unless each MT and PE index is covered exactly once, in order."""
    mt_seen, pe_seen = [], []
    for op in script.ops:
        if op.kind == SHIFT:
            continue
        needs_mt = op.kind in (MATCH, SUBSTITUTE, DELETE)
        needs_pe = op.kind in (MATCH, SUBSTITUTE, INSERT)
        if needs_mt != (op.mt_index is not None) or needs_pe != (op.pe_index is not None):
            raise InvariantError(f"malformed edit op {op}")
        if needs_mt:
            mt_seen.append(op.mt_index)
        if needs_pe:
            pe_seen.append(op.pe_index)
    if mt_seen != list(range(script.mt_length)):
        raise InvariantError("edit script does not cover MT indices 0..N-1 in order")
    if pe_seen != list(range(script.pe_length)):
        raise InvariantError("edit script does not cover PE indices 0..M-1 in order")


def _fold(tokens, lowercase):
    return [t.lower() for t in tokens] if lowercase else list(tokens)


def edit_distance(mt, pe):
    """Unit-cost Levenshtein distance (cost only, two-row DP)."""
    prev = list(range(len(pe) + 1))
    for i, a in enumerate(mt, 1):
        cur = [i]
        for j, b in enumerate(pe, 1):
            cur.append(min(prev[j - 1] + (a != b), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[-1]


def levenshtein_align(mt, pe, lowercase=False):
    """Minimal monotone edit script turning ``mt`` into ``pe``.

    Backtrace runs from the end and prefers Match, then Substitute, then
    DeleteFromMt, then InsertIntoMt, so extra MT words are charged to tokens
    rather than to gaps.
    """
    a, b = _fold(mt, lowercase), _fold(pe, lowercase)
    n, m = len(a), len(b)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        row, up = d[i], d[i - 1]
        row[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            row[j] = min(up[j - 1] + (ai != b[j - 1]), up[j] + 1, row[j - 1] + 1)

    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        here = d[i][j]
        if i > 0 and j > 0 and a[i - 1] == b[j - 1] and d[i - 1][j - 1] == here:
            ops.append(EditOp(MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i - 1][j - 1] + 1 == here:
            ops.append(EditOp(SUBSTITUTE, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i - 1][j] + 1 == here:
            ops.append(EditOp(DELETE, i - 1, None))
            i -= 1
        else:
            ops.append(EditOp(INSERT, None, j - 1, gap=i))
            j -= 1
    ops.reverse()
    return EditScript(tuple(ops), n, m)


def apply_shift(tokens, start, length, dest):
    """Move ``tokens[start:start+length]`` so it begins at ``dest`` in the remainder."""
    tokens = list(tokens)
    span = tokens[start:start + length]
    rest = tokens[:start] + tokens[start + length:]
    return rest[:dest] + span + rest[dest:]


def _occurs(span, seq):
    k = len(span)
    return any(seq[i:i + k] == span for i in range(len(seq) - k + 1))


def shift_phase(mt, pe, max_shifts=10, max_span=10, lowercase=False):
    """Greedy Tercom-style block moves on the MT side.

    Only spans that also occur contiguously in ``pe`` are candidates. Each step
    takes the move with the largest Levenshtein reduction (at least 1); ties go
    to the longest span, then the leftmost origin, then the leftmost
    destination. Returns ``(shifted_mt, shift_ops)``.
    """
    hyp = list(mt)
    ref = _fold(pe, lowercase)
    ops = []
    cost = edit_distance(_fold(hyp, lowercase), ref)
    while len(ops) < max_shifts and cost > 0:
        folded = _fold(hyp, lowercase)
        best = None  # (reduction, length, -start, -dest)
        for length in range(1, min(max_span, len(hyp)) + 1):
            for start in range(0, len(hyp) - length + 1):
                span = folded[start:start + length]
                if not _occurs(span, ref):
                    continue
                for dest in range(0, len(hyp) - length + 1):
                    if dest == start:
                        continue
                    moved = apply_shift(folded, start, length, dest)
                    reduction = cost - edit_distance(moved, ref)
                    if reduction < 1:
                        continue
                    key = (reduction, length, -start, -dest)
                    if best is None or key > best:
                        best = key
        if best is None:
            break
        reduction, length, start, dest = best[0], best[1], -best[2], -best[3]
        hyp = apply_shift(hyp, start, length, dest)
        ops.append(EditOp(SHIFT, start, None, length=length, dest=dest))
        cost -= reduction
    return tuple(hyp), tuple(ops)


def ter_score(mt, pe, shifts=False, lowercase=False, max_shifts=10):
    """TER of ``mt`` against ``pe``; ``result.ter`` is None when ``pe`` is empty."""
    if shifts:
        shifted, shift_ops = shift_phase(mt, pe, max_shifts=max_shifts, lowercase=lowercase)
    else:
        shifted, shift_ops = tuple(mt), ()
    script = levenshtein_align(shifted, pe, lowercase=lowercase)
    return TerResult(script.cost + len(shift_ops), len(pe), script, shift_ops,
                     shifted if shifts else None)
