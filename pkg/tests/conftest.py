import random

import pytest

from qeforge.align import AlignmentSet
from qeforge.text import tokenize

GOLDEN_MT = "Given that the Chinese authorities do not deny it , it is highly likely ."
GOLDEN_PE = "Given that the Chinese authorities do not deny it , chances are high ."
GOLDEN_SRC = "중국 당국이 부인하지 않는 것으로 볼 때 가능성이 높다 ."
GOLDEN_ALIGN = "0-3 1-4 2-7 3-5 3-6 4-8 5-8 6-0 7-13 8-11 8-12 9-14"
GOLDEN_MT_TAGS = ("OK OK OK OK OK OK OK OK OK OK OK OK OK OK OK OK "
                  "OK OK OK OK OK BAD OK BAD OK BAD OK BAD OK OK OK")
GOLDEN_SRC_TAGS = "OK OK OK OK OK OK OK BAD BAD OK"

WORDS = ("the a of to and in is that it for was on are with as be this by at from "
         "house river city old new small big red green blue runs sees makes takes "
         "quickly slowly today never always people world water light road").split()


@pytest.fixture
def golden():
    return {
        "src": tokenize(GOLDEN_SRC),
        "mt": tokenize(GOLDEN_MT),
        "pe": tokenize(GOLDEN_PE),
        "alignment": AlignmentSet.from_pharaoh(GOLDEN_ALIGN),
        "mt_tags": tuple(GOLDEN_MT_TAGS.split()),
        "src_tags": tuple(GOLDEN_SRC_TAGS.split()),
    }


def make_parallel(n, seed=1234):
    """Deterministic synthetic (src, tgt) corpus; src shares most tokens with tgt."""
    rng = random.Random(seed)
    src, tgt = [], []
    for _ in range(n):
        words = [rng.choice(WORDS) for _ in range(rng.randint(1, 18))]
        tgt.append(" ".join(words))
        mapped = [w if rng.random() < 0.8 else w.upper() for w in words]
        src.append(" ".join(mapped))
    return src, tgt


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return str(path)


@pytest.fixture
def parallel_files(tmp_path):
    def factory(n, seed=1234, name="corpus"):
        src, tgt = make_parallel(n, seed)
        return (write_lines(tmp_path / f"{name}.src", src),
                write_lines(tmp_path / f"{name}.tgt", tgt))
    return factory


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "acceptance" in report.keywords:
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _ACCEPTANCE:
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  ({duration:.2f}s)")
