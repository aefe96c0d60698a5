"""``qeforge`` command-line entry point.

Exit codes: 0 success, 1 input/configuration/backend error, 2 invariant violation.
Configuration precedence: command-line flags > ``--config`` JSON file > defaults.
"""
import argparse
import json
import logging
import os
import sys

from . import FORMAT_VERSION, __version__
from .align import FORWARD_ONLY, GDFA, HEURISTICS, AlignerConfig, AlignmentSet, WordAligner
from .backends import Direction, parse_backend_spec, translate_stream
from .errors import ConfigError, InvariantError, QeForgeError
from .evaluation import evaluate, format_report as format_eval
from .pipeline import (BuildConfig, DatasetManifest, TokenColumns, build_quak_h, build_quak_m,
                       build_quak_p, split, tag_records)
from .stats import format_report as format_stats, scan, ter_moments, write_reports
from .ter import ter_score
from .text import MODES, WHITESPACE, read_lines, tokenize

log = logging.getLogger("qeforge")

# Option defaults; argparse defaults are None so a config file can fill the gaps.
DEFAULTS = {
    "backend": "mock:seed=0",
    "tokenize": WHITESPACE,
    "lowercase": False,
    "ter_shifts": False,
    "max_shifts": 10,
    "symmetrization": GDFA,
    "iterations": 5,
    "tension": 4.0,
    "p0": 0.08,
    "favor_diagonal": True,
    "optimize_tension": False,
    "src_lang": "ko",
    "tgt_lang": "en",
    "batch_size": 64,
    "checkpoint_every": 10000,
    "jobs": None,
    "seed": 0,
    "valid": 0,
    "test": 0,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class _LogFormatter(logging.Formatter):
    def format(self, record):
        msg = record.getMessage().replace('"', "'")
        return f'level={record.levelname} logger={record.name} msg="{msg}"'


def _pair(value):
    parts = value.split(",")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected SRC_FILE,TGT_FILE")
    return tuple(parts)


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values (flags take precedence)")
    p.add_argument("--out", required=False, help="output directory")
    p.add_argument("--jobs", type=int, help="worker cap (default: available cores)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_text(p):
    p.add_argument("--tokenize", choices=MODES)
    p.add_argument("--lowercase", action="store_true", default=None,
                   help="fold case before edit alignment")


def _add_aligner(p):
    p.add_argument("--symmetrization", choices=HEURISTICS + (FORWARD_ONLY,))
    p.add_argument("--iterations", type=int)
    p.add_argument("--tension", type=float)
    p.add_argument("--p0", type=float)
    p.add_argument("--favor-diagonal", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--optimize-tension", action="store_true", default=None)


def _add_build(p):
    _add_text(p)
    _add_aligner(p)
    p.add_argument("--backend", help="mock:seed=N,... | file:ko-en=PATH,... | http:endpoint=URL,...")
    p.add_argument("--ter-shifts", action="store_true", default=None)
    p.add_argument("--max-shifts", type=int)
    p.add_argument("--src-lang")
    p.add_argument("--tgt-lang")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--aligner-model", help="directory with pretrained forward/reverse tables")
    p.add_argument("--align-corpus", type=_pair, help="SRC,TGT corpus to train the aligner on")
    p.add_argument("--resume", action="store_true", help="continue from translation checkpoints")
    p.add_argument("--keep-work", action="store_true", help="keep the .work/ staging directory")


def build_parser():
    parser = _Parser(prog="qeforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"qeforge {__version__} (format {FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("build-m", help="round-trip dataset from a monolingual target corpus")
    _add_common(p)
    _add_build(p)
    p.add_argument("--mono", help="target-language monolingual corpus")

    for name, text in (("build-p", "one-way dataset from a parallel corpus"),
                       ("build-h", "hybrid dataset: parallel source/pseudo-PE + round-trip MT")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        _add_build(p)
        p.add_argument("--parallel", type=_pair, help="SRC_FILE,TGT_FILE")
        if name == "build-h":
            p.add_argument("--round-trip-mt", help="MT outputs of the target side's round trip "
                                                   "(line-aligned with the parallel corpus)")

    p = sub.add_parser("align-train", help="train forward/reverse alignment models")
    _add_common(p)
    _add_aligner(p)
    p.add_argument("--parallel", type=_pair)
    p.add_argument("--tokenize", choices=MODES)

    p = sub.add_parser("align", help="Viterbi-align a parallel corpus with trained models")
    _add_common(p)
    p.add_argument("--model", help="directory written by align-train")
    p.add_argument("--parallel", type=_pair)
    p.add_argument("--symmetrization", choices=HEURISTICS + (FORWARD_ONLY,))
    p.add_argument("--tokenize", choices=MODES)

    p = sub.add_parser("tag", help="tag existing source/MT/pseudo-PE files")
    _add_common(p)
    _add_text(p)
    _add_aligner(p)
    p.add_argument("--src")
    p.add_argument("--mt")
    p.add_argument("--pe")
    p.add_argument("--alignments", help="Pharaoh alignment file (else the aligner is trained)")
    p.add_argument("--model", help="directory written by align-train")

    p = sub.add_parser("ter", help="TER of MT output against pseudo-PE")
    _add_common(p)
    _add_text(p)
    p.add_argument("--mt")
    p.add_argument("--pe")
    p.add_argument("--ter-shifts", "--shifts", dest="ter_shifts", action="store_true", default=None)
    p.add_argument("--max-shifts", type=int)

    p = sub.add_parser("stats", help="dataset statistics and TER histogram")
    _add_common(p)
    p.add_argument("--data", help="dataset directory")

    p = sub.add_parser("split", help="seeded train/valid/test split of a dataset")
    _add_common(p)
    p.add_argument("--data")
    p.add_argument("--valid", type=int)
    p.add_argument("--test", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("evaluate", help="MCC of predicted against gold tags")
    _add_common(p)
    p.add_argument("--pred-mt")
    p.add_argument("--gold-mt")
    p.add_argument("--pred-src")
    p.add_argument("--gold-src")
    p.add_argument("--ter", help="TER file for per-range scores")
    p.add_argument("--split-gaps", action="store_true", default=None)

    p = sub.add_parser("mock-translate", help="translate a file with any backend")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--direction", help="e.g. ko-en")
    p.add_argument("--backend")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--resume", action="store_true")
    return parser


def merge_config(args):
    """Fill unset options from --config then DEFAULTS; returns the merged dict."""
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
    merged = {}
    for key, value in vars(args).items():
        if key in ("config", "command", "verbose"):
            continue
        if value is None:
            value = file_cfg.get(key, DEFAULTS.get(key))
        if key in ("parallel", "align_corpus") and isinstance(value, list):
            value = tuple(value)
        merged[key] = value
    if merged.get("jobs") is None:
        merged["jobs"] = os.cpu_count() or 1
    return merged


def _require(cfg, *keys):
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise ConfigError("missing required option(s): " +
                          ", ".join("--" + k.replace("_", "-") for k in missing))


def _aligner_config(cfg):
    return AlignerConfig(iterations=cfg["iterations"], tension=cfg["tension"], p0=cfg["p0"],
                         favor_diagonal=cfg["favor_diagonal"],
                         optimize_tension=cfg["optimize_tension"])


def _build_config(cfg):
    return BuildConfig(tokenize=cfg["tokenize"], lowercase=cfg["lowercase"],
                       ter_shifts=cfg["ter_shifts"], max_shifts=cfg["max_shifts"],
                       symmetrization=cfg["symmetrization"], aligner=_aligner_config(cfg),
                       src_lang=cfg["src_lang"], tgt_lang=cfg["tgt_lang"],
                       batch_size=cfg["batch_size"], checkpoint_every=cfg["checkpoint_every"],
                       jobs=cfg["jobs"])


def _aligner(cfg):
    heuristic = cfg.get("symmetrization") or GDFA
    if cfg.get("model") or cfg.get("aligner_model"):
        return WordAligner.load(cfg.get("model") or cfg.get("aligner_model"), heuristic)
    aligner = WordAligner(_aligner_config(cfg), heuristic)
    if cfg.get("align_corpus"):
        src, tgt = cfg["align_corpus"]
        aligner.fit(TokenColumns(src, tgt, mode=cfg.get("tokenize") or WHITESPACE))
    return aligner


def cmd_build(cfg, strategy):
    _require(cfg, "out", *{"M": ("mono",), "P": ("parallel",), "H": ("parallel",)}[strategy])
    config = _build_config(cfg)
    aligner = _aligner(cfg)
    kw = dict(aligner=aligner, config=config, resume=cfg["resume"], keep_work=cfg["keep_work"])
    if strategy == "H" and cfg.get("round_trip_mt"):
        manifest = build_quak_h(cfg["parallel"], cfg["out"], round_trip_mt=cfg["round_trip_mt"], **kw)
    else:
        backend = parse_backend_spec(cfg["backend"], jobs=cfg["jobs"])
        if strategy == "M":
            manifest = build_quak_m(cfg["mono"], backend, cfg["out"], **kw)
        elif strategy == "P":
            manifest = build_quak_p(cfg["parallel"], backend, cfg["out"], **kw)
        else:
            manifest = build_quak_h(cfg["parallel"], cfg["out"], backend=backend, **kw)
    print(f"{manifest.strategy}: {manifest.records} records -> {manifest.directory} "
          f"(config {manifest.config_hash[:12]})")


def cmd_align_train(cfg):
    _require(cfg, "out", "parallel")
    aligner = WordAligner(_aligner_config(cfg), cfg["symmetrization"])
    aligner.fit(TokenColumns(*cfg["parallel"], mode=cfg["tokenize"]))
    aligner.save(cfg["out"])
    with open(os.path.join(cfg["out"], "loglik.json"), "w", encoding="utf-8") as fh:
        json.dump(aligner.history, fh, indent=2)
        fh.write("\n")
    print(f"aligner: forward tension {aligner.forward.tension:.4f}; models in {cfg['out']}")


def cmd_align(cfg):
    _require(cfg, "out", "model", "parallel")
    aligner = WordAligner.load(cfg["model"], cfg["symmetrization"])
    os.makedirs(cfg["out"], exist_ok=True)
    with open(os.path.join(cfg["out"], "alignments.txt"), "w", encoding="utf-8", newline="\n") as fh:
        for src, tgt in TokenColumns(*cfg["parallel"], mode=cfg["tokenize"]):
            fh.write(aligner.align(src, tgt).to_pharaoh() + "\n")


def cmd_tag(cfg):
    _require(cfg, "out", "src", "mt", "pe")
    mode = cfg["tokenize"]
    os.makedirs(cfg["out"], exist_ok=True)
    triples = TokenColumns(cfg["src"], cfg["mt"], cfg["pe"], mode=mode)
    out = {n: open(os.path.join(cfg["out"], n + ".txt"), "w", encoding="utf-8", newline="\n")
           for n in ("alignments", "mt_tags", "source_tags")}
    try:
        if cfg.get("alignments"):
            from .tags import annotate_triple, format_tags
            links = (AlignmentSet.from_pharaoh(raw.decode("utf-8"))
                     for raw in read_lines(cfg["alignments"]))
            n = 0
            for (src, mt, pe), al in _zip_checked(triples, links):
                tags = annotate_triple(src, mt, pe, al, lowercase=cfg["lowercase"])
                rows = (al.to_pharaoh(), format_tags(tags.mt_tags), format_tags(tags.source_tags))
                for fh, row in zip(out.values(), rows):
                    fh.write(row + "\n")
                n += 1
        else:
            aligner = _aligner(cfg)
            if not aligner.fitted:
                aligner.fit(TokenColumns(cfg["src"], cfg["mt"], mode=mode))
            for rows in tag_records(triples, aligner, cfg["lowercase"], cfg["jobs"]):
                for fh, row in zip(out.values(), rows):
                    fh.write(row + "\n")
    finally:
        for fh in out.values():
            fh.close()


def _zip_checked(a, b):
    sentinel = object()
    ia, ib = iter(a), iter(b)
    while True:
        x, y = next(ia, sentinel), next(ib, sentinel)
        if x is sentinel and y is sentinel:
            return
        if x is sentinel or y is sentinel:
            raise ConfigError("alignment file and text files have different line counts")
        yield x, y


def cmd_ter(cfg):
    _require(cfg, "mt", "pe")
    values, lines, edits = [], [], []
    undefined = 0
    for mt, pe in TokenColumns(cfg["mt"], cfg["pe"], mode=cfg["tokenize"]):
        res = ter_score(mt, pe, shifts=cfg["ter_shifts"], lowercase=cfg["lowercase"],
                        max_shifts=cfg["max_shifts"])
        if not res.defined:
            undefined += 1
            lines.append("-")
            log.warning("empty pseudo-PE; TER undefined for this pair")
        else:
            values.append(res.ter)
            lines.append(repr(res.ter))
        shifts = ",".join(op.serialize() for op in res.shifts)
        edits.append(res.script.serialize() if not shifts else shifts + "," + res.script.serialize())
    if not values:
        raise ConfigError("no pair with a non-empty pseudo-PE")
    mean, median, std, var = ter_moments(values)
    report = (f"# TER mode: {'shifts' if cfg['ter_shifts'] else 'no-shifts'}; "
              f"pairs {len(values)}, undefined {undefined}\n"
              f"Mean TER      {mean:.2f}\nMedian TER    {median:.2f}\n"
              f"STD TER       {std:.2f}\nVariance TER  {var:.2f}\n")
    sys.stdout.write(report)
    if cfg.get("out"):
        os.makedirs(cfg["out"], exist_ok=True)
        for name, rows in (("ter.txt", lines), ("edits.txt", edits)):
            with open(os.path.join(cfg["out"], name), "w", encoding="utf-8", newline="\n") as fh:
                fh.writelines(r + "\n" for r in rows)
        with open(os.path.join(cfg["out"], "ter_report.txt"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(report)


def cmd_stats(cfg):
    _require(cfg, "data")
    stats, hist = scan(cfg["data"])
    write_reports(stats, hist, cfg.get("out") or cfg["data"])
    sys.stdout.write(format_stats(stats, hist))


def cmd_split(cfg):
    _require(cfg, "data", "out")
    manifest = DatasetManifest.load(cfg["data"])
    parts = split(manifest, cfg["valid"], cfg["test"], cfg["seed"], cfg["out"])
    print(" ".join(f"{m.split['name']}={m.records}" for m in parts))


def cmd_evaluate(cfg):
    _require(cfg, "pred_mt", "gold_mt")
    if bool(cfg.get("pred_src")) != bool(cfg.get("gold_src")):
        raise ConfigError("--pred-src and --gold-src must be given together")
    report = evaluate(cfg["pred_mt"], cfg["gold_mt"], cfg.get("pred_src"), cfg.get("gold_src"),
                      cfg.get("ter"), bool(cfg.get("split_gaps")))
    text = format_eval(report)
    sys.stdout.write(text)
    if cfg.get("out"):
        os.makedirs(cfg["out"], exist_ok=True)
        with open(os.path.join(cfg["out"], "evaluation.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        with open(os.path.join(cfg["out"], "evaluation.txt"), "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_mock_translate(cfg):
    _require(cfg, "input", "out")
    direction = Direction.parse(cfg.get("direction") or
                                f"{DEFAULTS['src_lang']}-{DEFAULTS['tgt_lang']}")
    backend = parse_backend_spec(cfg["backend"], jobs=cfg["jobs"])
    os.makedirs(cfg["out"], exist_ok=True)
    out_path = os.path.join(cfg["out"], "translation.txt")
    lines = (raw.decode("utf-8") for raw in read_lines(cfg["input"]))
    failed = translate_stream(lines, backend, direction, out_path, cfg["batch_size"],
                              cfg["checkpoint_every"], cfg["resume"])
    if os.path.exists(out_path + ".ckpt"):
        os.remove(out_path + ".ckpt")
    if failed:
        log.warning("%d lines could not be translated (written as empty)", len(failed))


COMMANDS = {
    "build-m": lambda c: cmd_build(c, "M"),
    "build-p": lambda c: cmd_build(c, "P"),
    "build-h": lambda c: cmd_build(c, "H"),
    "align-train": cmd_align_train,
    "align": cmd_align,
    "tag": cmd_tag,
    "ter": cmd_ter,
    "stats": cmd_stats,
    "split": cmd_split,
    "evaluate": cmd_evaluate,
    "mock-translate": cmd_mock_translate,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_LogFormatter())
    root = logging.getLogger("qeforge")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if getattr(args, "verbose", False) else logging.INFO)
    root.propagate = False
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = merge_config(args)
        COMMANDS[args.command](cfg)
    except InvariantError as exc:
        log.error("invariant violation: %s", exc)
        return 2
    except (QeForgeError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
