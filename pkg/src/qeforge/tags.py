"""OK/BAD word-level annotations derived from an edit script and an alignment.

MT-side tags have length 2N+1 and interleave gaps and tokens:
``gap0 tok1 gap1 tok2 ... tokN gapN``. Source-side tags carry no gaps.
"""
from dataclasses import dataclass
from typing import Tuple

from .align import AlignmentSet
from .errors import InvariantError
from .ter import DELETE, INSERT, SUBSTITUTE, check_script, levenshtein_align

OK = "OK"
BAD = "BAD"


def token_position(k):
    """Index of 0-based MT token ``k`` inside the 2N+1 tag sequence."""
    return 2 * k + 1


def gap_position(g):
    return 2 * g


def token_tags(mt_tags):
    return mt_tags[1::2]


def gap_tags(mt_tags):
    return mt_tags[0::2]


@dataclass(frozen=True)
class TagSet:
    mt_tags: Tuple[str, ...]
    source_tags: Tuple[str, ...]
    alignment: AlignmentSet

    def check(self, source_len, mt_len):
        if len(self.mt_tags) != 2 * mt_len + 1:
            raise InvariantError(f"{len(self.mt_tags)} MT tags for {mt_len} tokens")
        if len(self.source_tags) != source_len:
            raise InvariantError(f"{len(self.source_tags)} source tags for {source_len} tokens")
        self.alignment.check(source_len, mt_len)
        return self


def annotate_mt_tags(script):
    """2N+1 MT tags from a monotone edit script.

    Substituted and extra MT tokens are BAD; a gap is BAD when at least one
    pseudo-PE word is missing there.
    """
    check_script(script)
    tags = [OK] * (2 * script.mt_length + 1)
    for op in script.ops:
        if op.kind in (SUBSTITUTE, DELETE):
            tags[token_position(op.mt_index)] = BAD
        elif op.kind == INSERT:
            if op.gap is None or not 0 <= op.gap <= script.mt_length:
                raise InvariantError(f"missing-word op without a valid gap: {op}")
            tags[gap_position(op.gap)] = BAD
    return tuple(tags)


def project_source_tags(mt_tags, alignment, source_len):
    """A source token is BAD iff it links to at least one BAD MT token."""
    if len(mt_tags) % 2 != 1:
        raise InvariantError(f"MT tag sequence has even length {len(mt_tags)}")
    mt_len = len(mt_tags) // 2
    AlignmentSet(alignment).check(source_len, mt_len)
    tags = [OK] * source_len
    for i, j in alignment:
        if mt_tags[token_position(j)] == BAD:
            tags[i] = BAD
    return tuple(tags)


def annotate_triple(source, mt, pe, alignment, lowercase=False):
    """Tag one record: edit script of ``mt`` vs ``pe``, projected through ``alignment``."""
    alignment = AlignmentSet(alignment)
    mt_tags = annotate_mt_tags(levenshtein_align(mt, pe, lowercase=lowercase))
    src_tags = project_source_tags(mt_tags, alignment, len(source))
    return TagSet(mt_tags, src_tags, alignment).check(len(source), len(mt))


def format_tags(tags):
    return " ".join(tags)


def parse_tags(line):
    tags = tuple(line.split())
    for t in tags:
        if t not in (OK, BAD):
            raise ValueError(f"unknown tag {t!r}")
    return tags
