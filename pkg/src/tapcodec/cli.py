"""Command-line front end: encode, decode, train and bench.

Exit codes: 0 success, 1 usage or I/O error, 2 malformed stream,
3 a benchmark round trip failed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .codec import EncoderConfig, Method, decode_frame, encode_frame_detailed
from .core import Plane, PgmError, WeightTableError, format_weight_table, load_pgm, parse_weight_table, store_pgm
from .entropy import MalformedStream
from .trainer import EmptyCorpus, TrainReport, default_init_weights, stage1_train, stage2_search

EXIT_OK, EXIT_USAGE, EXIT_MALFORMED, EXIT_ROUNDTRIP = 0, 1, 2, 3

METHODS = {
    "block": Method.BLOCK_HEVC,
    "sap": Method.SAP,
    "3tap": Method.THREE_TAP_OFFLINE,
    "adaptive": Method.THREE_TAP_ADAPTIVE,
}
# published average reductions over HEVC lossless intra, for orientation only
REFERENCE_REDUCTION = {"sap": 8.74, "3tap": 11.55, "adaptive": 12.02}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_plane(path) -> Plane:
    try:
        return load_pgm(Path(path).read_bytes())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except PgmError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _read_weights(path):
    try:
        return parse_weight_table(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (WeightTableError, UnicodeDecodeError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _write(path, data) -> None:
    try:
        if isinstance(data, str):
            Path(path).write_text(data)
        else:
            Path(path).write_bytes(data)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from None


def load_corpus(directory) -> list[tuple[str, Plane]]:
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"corpus directory not found: {directory}")
    return [(p.name, _read_plane(p)) for p in sorted(d.glob("*.pgm"))]


def _table_for(method: Method, weights_path):
    if weights_path is not None and method.uses_weights:
        return _read_weights(weights_path)
    if method.uses_weights:
        raise UsageError("--weights is required for methods 3tap and adaptive")
    # the stream header always carries a table; block and SAP never read it
    return default_init_weights()


def cmd_encode(args) -> int:
    method = METHODS[args.method]
    plane = _read_plane(args.input)
    try:
        cfg = EncoderConfig(method, _table_for(method, args.weights), args.ctu,
                            args.min_pu, args.frame_index)
        result = encode_frame_detailed(plane, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(args.output, result.data)
    bits = result.payload_bits
    print(f"bits={bits} bpp={bits / (plane.width * plane.height):.4f}")
    return EXIT_OK


def cmd_decode(args) -> int:
    try:
        data = Path(args.input).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror or exc}") from None
    try:
        plane = decode_frame(data)
    except MalformedStream as exc:
        print(f"error: malformed stream: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    _write(args.output, store_pgm(plane))
    return EXIT_OK


def cmd_train(args) -> int:
    corpus = [p for _, p in load_corpus(args.corpus)]
    weights = _read_weights(args.init) if args.init else default_init_weights()
    report = TrainReport()
    try:
        if args.stage in ("1", "both"):
            weights, report = stage1_train(corpus, weights, args.max_iters, report)
        if args.stage in ("2", "both"):
            weights, report = stage2_search(corpus, weights, report)
    except EmptyCorpus as exc:
        raise UsageError(f"{exc}: no .pgm files in {args.corpus}") from None
    _write(args.output, format_weight_table(weights, f"trained on {len(corpus)} images"))
    report_path = args.report or f"{args.output}.report.txt"
    _write(report_path, report.to_text())
    print(f"bits={report.final_bits} weights={args.output} report={report_path}")
    return EXIT_OK


def run_bench(corpus, table, methods):
    """Encode and verify every (image, method) pair.

    Returns ``(rows, failures)`` where rows are
    ``(image, method_name, bits, bpp)`` for verified streams only.
    """
    rows, failures = [], []
    for name, plane in corpus:
        for key in methods:
            cfg = EncoderConfig(METHODS[key], table)
            result = encode_frame_detailed(plane, cfg)
            try:
                ok = decode_frame(result.data) == plane
            except MalformedStream:
                ok = False
            if not ok:
                failures.append((name, key))
                continue
            bits = result.payload_bits
            rows.append((name, key, bits, bits / (plane.width * plane.height)))
    return rows, failures


def reduction_table(rows, methods):
    """Per-image and average reduction in percent against the block method."""
    bpp = {(img, m): b for img, m, _, b in rows}
    images = list(dict.fromkeys(img for img, *_ in rows))
    table = {}
    for img in images:
        base = bpp[(img, "block")]
        table[img] = {m: 100.0 * (1.0 - bpp[(img, m)] / base) for m in methods}
    table["Average"] = {m: sum(table[i][m] for i in images) / len(images) for m in methods}
    return table


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UsageError(f"unknown methods: {', '.join(unknown)}")
    if "block" not in methods:
        methods.insert(0, "block")
    corpus = load_corpus(args.corpus)
    if not corpus:
        raise UsageError(f"no .pgm files in {args.corpus}")
    table = _read_weights(args.weights)
    rows, failures = run_bench(corpus, table, methods)
    if failures:
        for name, key in failures:
            print(f"error: round trip failed for {name} with {key}", file=sys.stderr)
        return EXIT_ROUNDTRIP
    red = reduction_table(rows, methods)
    width = max(len(k) for k in red)
    print(" ".join([f"{'image':<{width}}"] + [f"{m:>9}" for m in methods]))
    for img, cells in red.items():
        print(" ".join([f"{img:<{width}}"] + [f"{cells[m]:>9.2f}" for m in methods]))
    refs = ", ".join(f"{m} {v:.2f}%" for m, v in REFERENCE_REDUCTION.items())
    print(f"(published averages for reference: {refs})")
    if args.csv:
        _write_csv(args.csv, rows, red, methods)
    return EXIT_OK


def _write_csv(path, rows, red, methods) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["image", "method", "bits", "bpp", "reduction_pct"])
            for img, m, bits, bpp in rows:
                w.writerow([img, m, bits, f"{bpp:.6f}", f"{red[img][m]:.4f}"])
            for m in methods:
                sel = [r for r in rows if r[1] == m]
                bits = sum(r[2] for r in sel)
                bpp = sum(r[3] for r in sel) / len(sel)
                w.writerow(["Average", m, bits, f"{bpp:.6f}", f"{red['Average'][m]:.4f}"])
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tapcodec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="encode a PGM image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--method", choices=list(METHODS), required=True)
    p.add_argument("--weights")
    p.add_argument("--ctu", type=int, default=64)
    p.add_argument("--min-pu", type=int, default=4)
    p.add_argument("--frame-index", type=int, default=0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a stream to PGM")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", help="train a weight table on a PGM directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--stage", choices=("1", "2", "both"), default="both")
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--init")
    p.add_argument("--report", help="report path (default: <out>.report.txt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="compare methods on a PGM directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--methods", default="block,sap,3tap,adaptive")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
