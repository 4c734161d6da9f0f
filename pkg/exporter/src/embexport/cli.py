"""Command-line entry point: export-text, export-media, build-manifests.

Exports are driven by a YAML/JSON spec file; individual fields can be
overridden with flags. Exit codes: 0 success, 1 execution error, 2 usage
error."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .backends import EncoderError
from .emb1 import Emb1WriteError
from .export import InputError, export_media, export_text
from .manifests import ManifestError, build_from_layout
from .spec import ExportSpec, SpecError, load_spec


def _spec_from_args(args) -> ExportSpec:
    if args.spec:
        spec = load_spec(args.spec)
        for field in ("encoder", "input", "output", "pooling", "lang", "device"):
            value = getattr(args, field, None)
            if value is not None:
                setattr(spec, field, value)
        if args.batch_size is not None:
            spec.batch_size = args.batch_size
        if args.normalize:
            spec.normalize = True
        return spec
    required = [f for f in ("encoder", "input", "output", "pooling") if getattr(args, f) is None]
    if required:
        raise SpecError(f"without --spec, these flags are required: {required}")
    return ExportSpec(
        encoder=args.encoder,
        input=args.input,
        output=args.output,
        pooling=args.pooling,
        lang=args.lang or "und",
        batch_size=args.batch_size or 32,
        device=args.device or "cpu",
        normalize=args.normalize,
    )


def _add_export_flags(p):
    p.add_argument("--spec", default=None, help="YAML/JSON export spec file")
    p.add_argument("--encoder", default=None, help="encoder id, e.g. dummy:64 (overrides spec)")
    p.add_argument("--input", default=None, help="JSONL input listing (overrides spec)")
    p.add_argument("--output", default=None, help="EMB1 output path (overrides spec)")
    p.add_argument("--pooling", default=None, choices=["cls", "mean", "pooled"], help="pooled representation (required, encoder-specific)")
    p.add_argument("--lang", default=None, help="language tag stored in metadata (default: und)")
    p.add_argument("--batch-size", type=int, default=None, help="inference batch size (default: 32)")
    p.add_argument("--device", default=None, help="inference device (default: cpu)")
    p.add_argument("--normalize", action="store_true", help="store unit-norm rows (default: raw)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport", description="Encode datasets into EMB1 embedding files."
    )
    parser.add_argument("--version", action="version", version=f"embexport {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-text", help="encode a JSONL of {id, text} rows")
    _add_export_flags(p)
    p.set_defaults(func=lambda a: print(export_text(_spec_from_args(a))))

    p = sub.add_parser("export-media", help="encode a JSONL of {path, id?} rows")
    _add_export_flags(p)
    p.set_defaults(func=lambda a: print(export_media(_spec_from_args(a))))

    p = sub.add_parser("build-manifests", help="write corpus/pair manifests from a layout file")
    p.add_argument("--layout", required=True, help="YAML/JSON layout file")
    p.set_defaults(func=lambda a: [print(p) for p in build_from_layout(a.layout)])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
        return 0
    except (SpecError, InputError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EncoderError, Emb1WriteError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
