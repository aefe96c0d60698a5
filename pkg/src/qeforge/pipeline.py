"""Dataset construction: strategies M (round trip), P (one way) and H (hybrid).

Every build runs in streaming stages over files so memory stays flat in the
corpus size: ingest -> translate (checkpointed) -> assemble + TER -> fit the
aligner on the assembled (source, mt) columns -> align + tag -> manifest.
"""
import hashlib
import itertools
import json
import logging
import multiprocessing
import os
import random
import shutil
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

from . import FORMAT_VERSION, __version__
from .align import FORWARD_ONLY, GDFA, HEURISTICS, AlignerConfig, AlignmentSet, WordAligner
from .backends import Direction, translate_stream
from .errors import ConfigError, InvariantError, LineError
from .tags import annotate_triple, format_tags
from .ter import ter_score
from .text import MODES, WHITESPACE, TokenSequence, prepare, read_lines, tokenize

log = logging.getLogger(__name__)

STRATEGIES = ("M", "P", "H")
FILES = {
    "src": "src.txt",
    "mt": "mt.txt",
    "pe": "pe.txt",
    "mt_tags": "mt_tags.txt",
    "source_tags": "source_tags.txt",
    "alignments": "alignments.txt",
    "ter": "ter.txt",
}
MANIFEST = "manifest.json"
WORK = ".work"


@dataclass
class BuildConfig:
    tokenize: str = WHITESPACE
    lowercase: bool = False
    ter_shifts: bool = False
    max_shifts: int = 10
    symmetrization: str = GDFA
    aligner: AlignerConfig = field(default_factory=AlignerConfig)
    src_lang: str = "ko"
    tgt_lang: str = "en"
    batch_size: int = 64
    checkpoint_every: int = 10000
    jobs: int = 1

    def __post_init__(self):
        if isinstance(self.aligner, dict):
            self.aligner = AlignerConfig(**self.aligner)
        if self.tokenize not in MODES:
            raise ConfigError(f"tokenize must be one of {MODES}, got {self.tokenize!r}")
        if self.symmetrization not in HEURISTICS + (FORWARD_ONLY,):
            raise ConfigError(f"unknown symmetrization {self.symmetrization!r}")
        if self.batch_size < 1 or self.checkpoint_every < 1:
            raise ConfigError("batch_size and checkpoint_every must be positive")

    @property
    def forward(self):
        return Direction(self.src_lang, self.tgt_lang)

    @property
    def backward(self):
        return self.forward.inverse()

    def to_dict(self):
        return asdict(self)


def config_hash(payload):
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class DatasetManifest:
    directory: str
    strategy: str
    records: int
    dropped: Dict[str, int] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    config_hash: str = ""
    split: Optional[dict] = None
    ter_mode: str = "no-shifts"

    def path(self, role):
        return os.path.join(self.directory, FILES[role])

    def to_json(self):
        data = {
            "strategy": self.strategy,
            "files": dict(FILES),
            "counts": {"records": self.records},
            "dropped": dict(sorted(self.dropped.items())),
            "ter_mode": self.ter_mode,
            "config": self.config,
            "config_hash": self.config_hash,
            "tool_version": __version__,
            "format_version": FORMAT_VERSION,
        }
        if self.split is not None:
            data["split"] = self.split
        return data

    def save(self):
        with open(os.path.join(self.directory, MANIFEST), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")

    @classmethod
    def load(cls, directory):
        path = os.path.join(directory, MANIFEST)
        if not os.path.exists(path):
            raise ConfigError(f"{directory}: no {MANIFEST}")
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(directory, data["strategy"], data["counts"]["records"], data.get("dropped", {}),
                   data.get("config", {}), data.get("config_hash", ""), data.get("split"),
                   data.get("ter_mode", "no-shifts"))

    def check(self):
        """Raise InvariantError unless all seven files exist with ``records`` lines."""
        for role in FILES:
            path = self.path(role)
            if not os.path.exists(path):
                raise InvariantError(f"manifest file missing: {path}")
            n = count_lines(path)
            if n != self.records:
                raise InvariantError(f"{path}: {n} lines, manifest says {self.records}")
        return self


def count_lines(path):
    with open(path, "rb") as fh:
        return sum(1 for _ in fh)


def _open_w(path):
    return open(path, "w", encoding="utf-8", newline="\n")


class TokenColumns:
    """Re-iterable zip of tokenized files (one TokenSequence per line per file)."""

    def __init__(self, *paths, mode=WHITESPACE):
        self.paths = paths
        self.mode = mode

    def __iter__(self):
        files = [read_lines(p) for p in self.paths]
        for raws in zip(*files):
            yield tuple(tokenize(raw.decode("utf-8"), self.mode) for raw in raws)


def _text_lines(path):
    for raw in read_lines(path):
        yield raw.decode("utf-8")


def _zip_strict(named_iters):
    """zip() that raises ConfigError when the inputs have different line counts."""
    sentinel = object()
    names = [n for n, _ in named_iters]
    for row in itertools.zip_longest(*(it for _, it in named_iters), fillvalue=sentinel):
        if any(x is sentinel for x in row):
            raise ConfigError(f"line-count mismatch between {', '.join(names)}")
        yield row


class _Build:
    """State shared by the stages of one dataset build."""

    def __init__(self, strategy, out_dir, config, inputs, resume=False, keep_work=False):
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r}")
        self.strategy = strategy
        self.out = out_dir
        self.cfg = config
        self.inputs = inputs
        self.resume = resume
        self.keep_work = keep_work
        self.work = os.path.join(out_dir, WORK)
        self.dropped = {"invalid_line": 0, "empty_pe": 0, "translation": 0}
        os.makedirs(self.work, exist_ok=True)

    def w(self, name):
        return os.path.join(self.work, name)

    def _prep(self, raw, line_no):
        return prepare(raw, self.cfg.tokenize, line_no=line_no)

    def ingest(self, columns):
        """Normalize the input columns ({name: path}); 'pe' must be one of them.

        Writes the kept lines to the work directory and returns their count.
        """
        names = list(columns)
        outs = {n: _open_w(self.w(f"in.{n}")) for n in names}
        kept = 0
        try:
            rows = _zip_strict([(columns[n], read_lines(columns[n])) for n in names])
            for line_no, row in enumerate(rows, 1):
                try:
                    toks = {n: self._prep(raw, line_no) for n, raw in zip(names, row)}
                except LineError as exc:
                    log.warning("skipping input %s", exc)
                    self.dropped["invalid_line"] += 1
                    continue
                if not toks["pe"]:
                    self.dropped["empty_pe"] += 1
                    continue
                for n in names:
                    outs[n].write(toks[n].join() + "\n")
                kept += 1
        finally:
            for fh in outs.values():
                fh.close()
        if kept == 0:
            raise ConfigError("no usable input lines after normalization")
        return kept

    def translate(self, in_name, out_name, backend, direction):
        failed = translate_stream(_text_lines(self.w(in_name)), backend, direction,
                                  self.w(out_name), self.cfg.batch_size,
                                  self.cfg.checkpoint_every, self.resume)
        return set(failed)

    def assemble(self, src_name, mt_name, failed=()):
        """Write src/mt/pe/ter for every kept line whose translations succeeded."""
        cols = [(n, _text_lines(self.w(n))) for n in (src_name, mt_name, "in.pe")]
        records = 0
        with _open_w(os.path.join(self.out, FILES["src"])) as f_src, \
                _open_w(os.path.join(self.out, FILES["mt"])) as f_mt, \
                _open_w(os.path.join(self.out, FILES["pe"])) as f_pe, \
                _open_w(os.path.join(self.out, FILES["ter"])) as f_ter:
            for k, (src, mt, pe) in enumerate(_zip_strict(cols)):
                if k in failed:
                    self.dropped["translation"] += 1
                    continue
                src_t = tokenize(src, self.cfg.tokenize)
                mt_t = tokenize(mt, self.cfg.tokenize)
                pe_t = tokenize(pe, self.cfg.tokenize)
                res = ter_score(mt_t, pe_t, shifts=self.cfg.ter_shifts,
                                lowercase=self.cfg.lowercase, max_shifts=self.cfg.max_shifts)
                if not res.defined:
                    self.dropped["empty_pe"] += 1
                    continue
                f_src.write(src_t.join() + "\n")
                f_mt.write(mt_t.join() + "\n")
                f_pe.write(pe_t.join() + "\n")
                f_ter.write(repr(res.ter) + "\n")
                records += 1
        if records == 0:
            raise ConfigError("every record was dropped; nothing to tag")
        return records

    def tag(self, aligner):
        src_mt = TokenColumns(os.path.join(self.out, FILES["src"]),
                              os.path.join(self.out, FILES["mt"]), mode=self.cfg.tokenize)
        if aligner is None:
            aligner = WordAligner(self.cfg.aligner, self.cfg.symmetrization)
        if not aligner.fitted:
            try:
                aligner.fit(src_mt)
            except ConfigError as exc:
                log.warning("aligner not trained (%s); all alignments will be empty", exc)
                aligner = None
        triples = TokenColumns(*(os.path.join(self.out, FILES[r]) for r in ("src", "mt", "pe")),
                               mode=self.cfg.tokenize)
        with _open_w(os.path.join(self.out, FILES["alignments"])) as f_al, \
                _open_w(os.path.join(self.out, FILES["mt_tags"])) as f_mt, \
                _open_w(os.path.join(self.out, FILES["source_tags"])) as f_src:
            for al, mt_tags, src_tags in tag_records(triples, aligner, self.cfg.lowercase,
                                                     self.cfg.jobs):
                f_al.write(al + "\n")
                f_mt.write(mt_tags + "\n")
                f_src.write(src_tags + "\n")

    def finish(self, records, extra_inputs=None):
        payload = {"strategy": self.strategy, "inputs": self.inputs,
                   "config": {k: v for k, v in self.cfg.to_dict().items() if k != "jobs"}}
        if extra_inputs:
            payload["inputs"] = {**self.inputs, **extra_inputs}
        manifest = DatasetManifest(self.out, self.strategy, records, dict(self.dropped),
                                   payload, config_hash(payload),
                                   ter_mode="shifts" if self.cfg.ter_shifts else "no-shifts")
        manifest.save()
        manifest.check()
        if not self.keep_work:
            shutil.rmtree(self.work, ignore_errors=True)
        log.info("built %s dataset: %d records in %s (dropped %s)", self.strategy, records,
                 self.out, manifest.dropped)
        return manifest


_WORKER_ALIGNER = None


def _init_worker(aligner):
    global _WORKER_ALIGNER
    _WORKER_ALIGNER = aligner


def _tag_one(args):
    (src, mt, pe), lowercase = args
    return _tag_record(_WORKER_ALIGNER, src, mt, pe, lowercase)


def _tag_record(aligner, src, mt, pe, lowercase):
    alignment = aligner.align(src, mt) if aligner is not None else AlignmentSet()
    tags = annotate_triple(src, mt, pe, alignment, lowercase=lowercase)
    return alignment.to_pharaoh(), format_tags(tags.mt_tags), format_tags(tags.source_tags)


def tag_records(triples, aligner, lowercase=False, jobs=1):
    """Yield (pharaoh, mt tags, source tags) lines for each (src, mt, pe), in order."""
    if jobs <= 1:
        for src, mt, pe in triples:
            yield _tag_record(aligner, src, mt, pe, lowercase)
        return
    ctx = multiprocessing.get_context("fork") if hasattr(os, "fork") else multiprocessing
    with ctx.Pool(jobs, initializer=_init_worker, initargs=(aligner,)) as pool:
        yield from pool.imap(_tag_one, ((t, lowercase) for t in triples), chunksize=256)


def _prepare_out(out_dir):
    os.makedirs(out_dir, exist_ok=True)


def build_quak_m(target_mono, backend, out_dir, aligner=None, config=None, resume=False,
                 keep_work=False):
    """Round-trip strategy: pseudo-source = back-translation of the monolingual
    target text, MT = forward translation of the pseudo-source, pseudo-PE =
    the original target line. The dataset's source column is the pseudo-source.
    """
    cfg = config or BuildConfig()
    _prepare_out(out_dir)
    b = _Build("M", out_dir, cfg, {"mono": target_mono}, resume, keep_work)
    b.ingest({"pe": target_mono})
    failed = b.translate("in.pe", "pseudo_src", backend, cfg.backward)
    failed |= b.translate("pseudo_src", "mt", backend, cfg.forward)
    records = b.assemble("pseudo_src", "mt", failed)
    b.tag(aligner)
    return b.finish(records)


def build_quak_p(parallel, backend, out_dir, aligner=None, config=None, resume=False,
                 keep_work=False):
    """One-way strategy: MT = forward translation of the parallel source side;
    the target side is the pseudo-PE and the source stays intact."""
    cfg = config or BuildConfig()
    src_path, tgt_path = parallel
    _prepare_out(out_dir)
    b = _Build("P", out_dir, cfg, {"src": src_path, "tgt": tgt_path}, resume, keep_work)
    b.ingest({"src": src_path, "pe": tgt_path})
    failed = b.translate("in.src", "mt", backend, cfg.forward)
    records = b.assemble("in.src", "mt", failed)
    b.tag(aligner)
    return b.finish(records)


def build_quak_h(parallel, out_dir, round_trip_mt=None, backend=None, aligner=None, config=None,
                 resume=False, keep_work=False):
    """Hybrid strategy: source and pseudo-PE from the parallel corpus (as in P),
    MT from the round trip of the target side (as in M).

    ``round_trip_mt`` is a file of MT outputs line-aligned with the parallel
    corpus; without it the round trip is run through ``backend``.
    """
    cfg = config or BuildConfig()
    src_path, tgt_path = parallel
    if round_trip_mt is None and backend is None:
        raise ConfigError("strategy H needs either round-trip MT outputs or a backend")
    _prepare_out(out_dir)
    inputs = {"src": src_path, "tgt": tgt_path}
    if round_trip_mt is not None:
        inputs["round_trip_mt"] = round_trip_mt
    b = _Build("H", out_dir, cfg, inputs, resume, keep_work)
    if round_trip_mt is not None:
        b.ingest({"src": src_path, "pe": tgt_path, "mt": round_trip_mt})
        failed = set()
        mt_name = "in.mt"
    else:
        b.ingest({"src": src_path, "pe": tgt_path})
        failed = b.translate("in.pe", "pseudo_src", backend, cfg.backward)
        failed |= b.translate("pseudo_src", "mt", backend, cfg.forward)
        mt_name = "mt"
    records = b.assemble("in.src", mt_name, failed)
    b.tag(aligner)
    return b.finish(records)


SPLITS = ("train", "valid", "test")


def split(manifest, valid_count, test_count, seed, out_dir):
    """Seeded disjoint train/valid/test split of a built dataset.

    Valid and test records are a uniform sample without replacement; the
    rest is train. Record order is preserved within each split. Returns the
    three manifests in (train, valid, test) order.
    """
    if valid_count < 0 or test_count < 0:
        raise ConfigError("split sizes must be non-negative")
    if valid_count + test_count and valid_count + test_count >= manifest.records:
        raise ConfigError(f"cannot take {valid_count}+{test_count} records out of "
                          f"{manifest.records}")
    manifest.check()
    rng = random.Random(seed)
    chosen = rng.sample(range(manifest.records), valid_count + test_count)
    route = dict.fromkeys(chosen[:valid_count], "valid")
    route.update(dict.fromkeys(chosen[valid_count:], "test"))
    counts = {s: 0 for s in SPLITS}
    for k in range(manifest.records):
        counts[route.get(k, "train")] += 1

    for s in SPLITS:
        os.makedirs(os.path.join(out_dir, s), exist_ok=True)
    for role, name in FILES.items():
        outs = {s: open(os.path.join(out_dir, s, name), "wb") for s in SPLITS}
        try:
            for k, raw in enumerate(read_lines(manifest.path(role))):
                outs[route.get(k, "train")].write(raw + b"\n")
        finally:
            for fh in outs.values():
                fh.close()

    result = []
    for s in SPLITS:
        info = {"name": s, "seed": seed, "valid": valid_count, "test": test_count,
                "parent_config_hash": manifest.config_hash}
        m = DatasetManifest(os.path.join(out_dir, s), manifest.strategy, counts[s],
                            {}, manifest.config, config_hash({"parent": manifest.config_hash,
                                                              "split": info}),
                            info, manifest.ter_mode)
        m.save()
        result.append(m.check())
    return tuple(result)


def iter_records(manifest):
    """Yield dicts with the tokenized columns and tags of every record."""
    paths = [manifest.path(r) for r in FILES]
    for row in _zip_strict([(p, _text_lines(p)) for p in paths]):
        src, mt, pe, mt_tags, src_tags, al, ter = row
        yield {
            "src": TokenSequence(src.split()),
            "mt": TokenSequence(mt.split()),
            "pe": TokenSequence(pe.split()),
            "mt_tags": tuple(mt_tags.split()),
            "source_tags": tuple(src_tags.split()),
            "alignment": AlignmentSet.from_pharaoh(al),
            "ter": float(ter),
        }
