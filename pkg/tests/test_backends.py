import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from qeforge.backends import (Direction, FileBackend, HttpBackend, MockBackend,
                              parse_backend_spec, translate_stream)
from qeforge.errors import BackendError, ConfigError, LineError

KO_EN = Direction("ko", "en")


def test_direction():
    assert KO_EN.label == "ko-en"
    assert KO_EN.inverse() == Direction("en", "ko")
    assert KO_EN.inverse().inverse() == KO_EN
    assert Direction.parse("en-de") == Direction("en", "de")
    with pytest.raises(ConfigError):
        Direction.parse("ende")


def test_mock_zero_noise_is_identity():
    mock = MockBackend(seed=0, dropout=0, swap=0, substitute=0)
    lines = ["a b c", "", "중국 당국이"]
    assert mock.translate_batch(lines, KO_EN) == lines


def test_mock_regression_fixture():
    # Frozen outputs of the seeded transform.
    assert MockBackend(seed=42).translate_line("the quick brown fox jumps", "ko-en") == \
        "the brown fox jumps"
    noisy = MockBackend(seed=42, dropout=0.3, swap=0.3, substitute=0.3)
    assert noisy.translate_line("the quick brown fox jumps", "ko-en") == "or in fox"


def test_mock_is_pure():
    a, b = MockBackend(seed=7), MockBackend(seed=7)
    lines = [f"w{i} x y z q r s" for i in range(50)]
    assert a.translate_batch(lines, KO_EN) == b.translate_batch(lines, KO_EN)
    assert a.translate_batch(lines, KO_EN) == [a.translate_line(l, "ko-en") for l in lines]
    assert a.translate_batch(lines, KO_EN) != MockBackend(seed=8).translate_batch(lines, KO_EN)


def test_file_backend(tmp_path):
    table = tmp_path / "t.tsv"
    table.write_text("1\tone\n2\ttwo\n3\tthree\n", encoding="utf-8")
    fb = FileBackend({"ko-en": str(table)})
    assert fb.translate_batch(["x", "y", "z"], KO_EN) == ["one", "two", "three"]
    assert fb.translate_batch(["y"], KO_EN, offset=1) == ["two"]
    with pytest.raises(LineError, match="line 4"):
        fb.translate_batch(["q"], KO_EN, offset=3)
    with pytest.raises(ConfigError):
        fb.translate_batch(["q"], KO_EN.inverse())


def test_parse_backend_spec(tmp_path):
    m = parse_backend_spec("mock:seed=42,dropout=0")
    assert isinstance(m, MockBackend) and m.seed == 42 and m.dropout == 0
    f = parse_backend_spec("file:path=x.tsv")
    assert isinstance(f, FileBackend) and f.paths == {"*": "x.tsv"}
    h = parse_backend_spec("http:endpoint=http://localhost:1/t,batch_size=4", jobs=3)
    assert isinstance(h, HttpBackend) and h.batch_size == 4 and h.max_in_flight == 3
    for bad in ("nope:", "mock:seed", "mock:colour=3", "mock:dropout=2"):
        with pytest.raises(ConfigError):
            parse_backend_spec(bad)


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        srv = self.server
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        srv.requests.append((body, self.headers.get("Authorization")))
        if srv.fail_first > 0:
            srv.fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        out = {"lines": [f"{body['direction']}:{line.upper()}" for line in body["lines"]]}
        data = json.dumps(out).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    srv.requests, srv.fail_first = [], 0
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv
    srv.shutdown()


def _url(srv):
    return f"http://127.0.0.1:{srv.server_address[1]}/translate"


def test_http_backend_protocol(server, monkeypatch):
    monkeypatch.setenv("QEFORGE_MT_TOKEN", "s3cret")
    hb = HttpBackend(_url(server), batch_size=2, max_in_flight=3, backoff=0)
    lines = [f"line {i}" for i in range(7)]
    assert hb.translate_batch(lines, KO_EN) == [f"ko-en:LINE {i}" for i in range(7)]
    assert len(server.requests) == 4
    assert all(auth == "Bearer s3cret" for _, auth in server.requests)
    assert all(set(body) == {"direction", "lines"} for body, _ in server.requests)


def test_http_endpoint_from_env(server, monkeypatch):
    monkeypatch.setenv("QEFORGE_MT_ENDPOINT", _url(server))
    assert HttpBackend().translate_batch(["x"], KO_EN) == ["ko-en:X"]


def test_http_retries_then_succeeds(server):
    server.fail_first = 2
    hb = HttpBackend(_url(server), retries=3, backoff=0)
    assert hb.translate_batch(["a", "b"], KO_EN) == ["ko-en:A", "ko-en:B"]
    assert len(server.requests) == 3


def test_http_gives_up(server):
    server.fail_first = 10
    hb = HttpBackend(_url(server), retries=1, backoff=0)
    with pytest.raises(BackendError):
        hb.translate_batch(["a"], KO_EN)


class _Flaky:
    """Fails once on the batch starting at ``fail_at``."""

    def __init__(self, fail_at):
        self.fail_at = fail_at
        self.inner = MockBackend(seed=3)

    def translate_batch(self, lines, direction, offset=0):
        if offset == self.fail_at:
            self.fail_at = None
            raise BackendError("boom")
        return self.inner.translate_batch(lines, direction, offset)


def test_translate_stream_checkpoint_and_resume(tmp_path):
    lines = [f"w{i} a b c d" for i in range(25)]
    ref = str(tmp_path / "ref.txt")
    translate_stream(lines, MockBackend(seed=3), KO_EN, ref, batch_size=4)
    out = str(tmp_path / "out.txt")
    with pytest.raises(BackendError):
        translate_stream(lines, _Flaky(12), KO_EN, out, batch_size=4, checkpoint_every=4)
    with open(out + ".ckpt") as fh:
        assert json.load(fh)["lines"] == 12
    translate_stream(lines, _Flaky(None), KO_EN, out, batch_size=4, resume=True)
    with open(ref, "rb") as a, open(out, "rb") as b:
        assert a.read() == b.read()


def test_translate_stream_marks_missing_lines(tmp_path):
    table = tmp_path / "t.tsv"
    table.write_text("1\tone\n3\tthree\n", encoding="utf-8")
    out = str(tmp_path / "o.txt")
    failed = translate_stream(["a", "b", "c"], FileBackend({"*": str(table)}), KO_EN, out)
    assert failed == [1]
    with open(out, encoding="utf-8") as fh:
        assert fh.read() == "one\n\nthree\n"
