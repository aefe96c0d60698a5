"""Line normalization and tokenization.

Corpus files are UTF-8 with one sentence per line and tokens separated by
single spaces. Korean input is taken as already space-segmented.
"""
import re
import unicodedata

from .errors import LineError

WHITESPACE = "whitespace"
PUNCT_SPLIT = "punct-split"
MODES = (WHITESPACE, PUNCT_SPLIT)

PUNCT = '.,!?;:"()'
_LEADING = re.compile(r'^([%s])(.+)$' % re.escape(PUNCT), re.S)
_TRAILING = re.compile(r'^(.+?)([%s])$' % re.escape(PUNCT), re.S)


class TokenSequence(tuple):
    """Immutable sequence of non-empty, whitespace-free tokens."""

    def __new__(cls, tokens=()):
        seq = super().__new__(cls, tokens)
        for tok in seq:
            if not isinstance(tok, str) or not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"invalid token: {tok!r}")
        return seq

    def __repr__(self):
        return f"TokenSequence({list(self)!r})"

    def join(self):
        return " ".join(self)


def decode_line(raw, line_no=None):
    """Decode a raw bytes line as UTF-8, raising LineError on failure."""
    if isinstance(raw, str):
        return raw
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise LineError(f"invalid UTF-8 ({exc.reason})", line_no) from None


def normalize(raw, line_no=None):
    """NFC-normalize a line, drop control characters and collapse whitespace.

    ``raw`` may be ``str`` or ``bytes``; undecodable bytes raise LineError.
    """
    text = unicodedata.normalize("NFC", decode_line(raw, line_no))
    # Whitespace controls (\t, \n, \r, ...) become spaces; other Cc/Cf are dropped.
    chars = []
    for ch in text:
        if ch.isspace():
            chars.append(" ")
        elif unicodedata.category(ch) in ("Cc", "Cf"):
            continue
        else:
            chars.append(ch)
    return " ".join("".join(chars).split())


def _split_punct(word):
    head, tail = [], []
    while True:
        m = _LEADING.match(word)
        if not m:
            break
        head.append(m.group(1))
        word = m.group(2)
    while True:
        m = _TRAILING.match(word)
        if not m:
            break
        tail.append(m.group(2))
        word = m.group(1)
    return head + [word] + tail[::-1]


def tokenize(line, mode=WHITESPACE):
    """Split a normalized line into a TokenSequence.

    ``punct-split`` additionally detaches leading and trailing ``.,!?;:"()``
    marks from each whitespace token, so ``"high."`` becomes ``[high, .]``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown tokenization mode: {mode!r}")
    words = line.split()
    if mode == PUNCT_SPLIT:
        words = [piece for w in words for piece in _split_punct(w)]
    return TokenSequence(words)


def prepare(raw, mode=WHITESPACE, lowercase=False, line_no=None):
    """normalize + optional case folding + tokenize, as used by the pipeline."""
    line = normalize(raw, line_no)
    if lowercase:
        line = line.lower()
    return tokenize(line, mode)


def read_lines(path):
    """Yield raw lines (bytes, without the trailing newline) from a corpus file.

    Both ``\\n`` and ``\\r\\n`` endings are accepted.
    """
    with open(path, "rb") as fh:
        for raw in fh:
            if raw.endswith(b"\n"):
                raw = raw[:-1]
            if raw.endswith(b"\r"):
                raw = raw[:-1]
            yield raw


def read_tokens(path, mode=WHITESPACE, lowercase=False):
    """Yield a TokenSequence per line of an already-tokenized corpus file."""
    for i, raw in enumerate(read_lines(path), 1):
        yield prepare(raw, mode, lowercase, line_no=i)
