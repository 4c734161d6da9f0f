"""Command-line entry point.

Subcommands: train, eval, analyze, vizprep, tsne, synth. Flags win over the
optional INI-style config file, which wins over defaults; every run directory
or report records the fully resolved configuration. Exit codes: 0 success,
1 execution error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    AnalysisError,
    cosine_cluster_stats,
    effective_map,
    spectrum_report,
    tsne,
    vizprep,
)
from .embio import load_corpus_manifest, load_pairs, read_emb1, sample_split
from .model import ALLOWED_LAYERS, ProjectionConfig, load_checkpoint
from .objectives import LossConfig
from .optim import ScheduleConfig
from .retrieval import evaluate_corpus
from .sentence_clusters import group_by_cluster
from .synth import synth_generate, write_synth
from .trainer import TrainConfig, train


class CliError(Exception):
    """Usage/config problem: exits with code 2."""


def _read_config_file(path: str | None, section: str) -> dict[str, str]:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise CliError(f"cannot read config file {path}")
    if not parser.has_section(section):
        return {}
    return dict(parser.items(section))


def _resolve(args: argparse.Namespace, file_values: dict[str, str], parser: argparse.ArgumentParser):
    """Config-file values fill in any flag left at its default."""
    for key, raw in file_values.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise CliError(f"unknown config key {key!r}")
        if getattr(args, dest) == parser.get_default(dest):
            default = parser.get_default(dest)
            if isinstance(default, bool):
                setattr(args, dest, raw.lower() in ("1", "true", "yes"))
            elif isinstance(default, int):
                setattr(args, dest, int(raw))
            elif isinstance(default, float):
                setattr(args, dest, float(raw))
            else:
                setattr(args, dest, raw)
    return args


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("M2M_THREADS", "1"))


def _ks(spec: str) -> list[int]:
    return sorted(int(k) for k in spec.split(","))


def cmd_train(args, parser) -> int:
    args = _resolve(args, _read_config_file(args.config, "train"), parser)
    pairs = load_pairs(args.pairs)
    if args.take is not None:
        pairs = sample_split(pairs, args.take, args.seed)
    val = load_corpus_manifest(args.val) if args.val else None
    model_cfg = ProjectionConfig(
        d_in=pairs.zm.d,
        d_out=pairs.ze.d,
        n_layers=args.layers,
        skip=args.skip,
        seed=args.seed,
    )
    generation = args.mode == "generation"
    loss = LossConfig(
        kind=args.loss,
        lam=args.lam,
        beta=0.0 if generation else args.beta,
        normalize=not generation,
    )
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        loss=loss,
        schedule=ScheduleConfig(base_lr=args.lr, warmup_steps=args.warmup, total_steps=args.warmup),
        mode=args.mode,
        weight_decay=args.weight_decay,
    )
    best, log = train(pairs, val, model_cfg, cfg, args.out, quiet=False)
    print(f"best epoch {log.best_epoch} (val {log.best_score:.4f}) -> {args.out}/best")
    return 0


def cmd_eval(args, parser) -> int:
    args = _resolve(args, _read_config_file(args.config, "eval"), parser)
    corpus = load_corpus_manifest(args.corpus)
    model = load_checkpoint(args.model) if args.model else None
    langs = args.langs.split(",") if args.langs else None
    report = evaluate_corpus(
        model,
        corpus,
        directions=args.directions.split(","),
        ks=_ks(args.ks),
        lang_subset=langs,
        corpus_name=Path(args.corpus).stem,
        model_path=args.model,
    )
    payload = json.dumps(report.to_json(), indent=2)
    if args.out:
        Path(args.out).write_text(payload)
    print(payload)
    return 0


def cmd_analyze(args, parser) -> int:
    args = _resolve(args, _read_config_file(args.config, "analyze"), parser)
    out: dict = {"toolkit_version": __version__}
    if args.model:
        model = load_checkpoint(args.model)
        w_eff, b_eff = effective_map(model)
        out["weights"] = spectrum_report(w_eff, b_eff, tau=args.tau).to_json()
        out["model"] = args.model
    families = {}
    for spec in args.family or []:
        name, _, path = spec.partition("=")
        if not path:
            raise CliError(f"--family takes name=path, got {spec!r}")
        families[name] = group_by_cluster(read_emb1(path))
    if families:
        out["cluster_distances"] = cosine_cluster_stats(families).to_json()
    if not args.model and not families:
        raise CliError("nothing to analyze: pass --model and/or --family")
    payload = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(payload)
    print(payload)
    return 0


def _write_coords_csv(path, ids, families, labels, coords):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "family", "cluster", "x", "y"])
        for i in range(len(ids)):
            x, y = ("", "") if coords is None else (repr(float(coords[i, 0])), repr(float(coords[i, 1])))
            writer.writerow([ids[i], families[i], labels[i], x, y])


def cmd_vizprep(args, parser) -> int:
    args = _resolve(args, _read_config_file(args.config, "vizprep"), parser)
    gallery = read_emb1(args.gallery)
    families = {}
    for spec in args.family or []:
        name, _, path = spec.partition("=")
        if not path:
            raise CliError(f"--family takes name=path, got {spec!r}")
        families[name] = read_emb1(path)
    if not families:
        raise CliError("vizprep needs at least one --family name=path")
    out = vizprep(
        gallery,
        families,
        k=args.k,
        top_n=args.top_n,
        select=args.select,
        per_cluster=args.per_cluster,
        min_cluster_size=args.min_cluster_size,
        seed=args.seed,
        run_tsne=args.tsne,
        perplexity=args.perplexity,
        tsne_iters=args.iters,
    )
    _write_coords_csv(args.out, out.ids, out.families, out.cluster_labels, out.coords)
    meta = dict(out.meta, selected_clusters=out.selected_clusters, toolkit_version=__version__)
    Path(args.out).with_suffix(".meta.json").write_text(json.dumps(meta, indent=2))
    print(f"wrote {len(out.ids)} rows to {args.out}")
    return 0


def cmd_tsne(args, parser) -> int:
    args = _resolve(args, _read_config_file(args.config, "tsne"), parser)
    es = read_emb1(args.input)
    coords = tsne(
        es.vectors.astype(np.float64), perplexity=args.perplexity, seed=args.seed, iters=args.iters
    )
    _write_coords_csv(args.out, es.ids, [es.lang] * es.n, [0] * es.n, coords)
    print(f"wrote {es.n} rows to {args.out}")
    return 0


def cmd_synth(args, parser) -> int:
    args = _resolve(args, _read_config_file(args.config, "synth"), parser)
    pairs, truth, corpus = synth_generate(
        seed=args.seed,
        n=args.n,
        d_m=args.dm,
        d_e=args.de,
        map_rank=args.rank if args.rank is not None else min(args.dm, args.de),
        noise_sigma=args.noise,
        n_eval=args.n_eval,
    )
    paths = write_synth(pairs, truth, corpus, args.out)
    print(json.dumps(dict(paths, toolkit_version=__version__), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="m2e", description="Linear alignment of embedding spaces: train, evaluate, analyze."
    )
    parser.add_argument("--version", action="version", version=f"m2e {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="INI config file (flags win, default: none)")
        p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help="worker cap; falls back to M2M_THREADS, then 1",
        )

    p = sub.add_parser("train", help="train a projection model on paired embeddings")
    common(p)
    p.add_argument("--pairs", action="append", required=True, help="pair manifest JSON (repeatable)")
    p.add_argument("--val", default=None, help="validation corpus manifest (default: none)")
    p.add_argument("--take", type=int, default=None, help="subsample this many pairs (default: all)")
    p.add_argument("--layers", type=int, choices=ALLOWED_LAYERS, default=2, help="linear layers (default: 2)")
    p.add_argument("--skip", action="store_true", help="residual connections on square layers (default: off)")
    p.add_argument("--loss", choices=["mse", "l1", "similarity", "combined"], default="combined", help="loss kind (default: combined)")
    p.add_argument("--lambda", dest="lam", type=float, default=48.0, help="alignment weight (default: 48)")
    p.add_argument("--beta", type=float, default=1.0, help="structure weight (default: 1)")
    p.add_argument("--mode", choices=["retrieval", "generation"], default="retrieval", help="training mode (default: retrieval)")
    p.add_argument("--epochs", type=int, default=50, help="epochs (default: 50)")
    p.add_argument("--batch", type=int, default=64, help="batch size (default: 64)")
    p.add_argument("--lr", type=float, default=3e-4, help="base learning rate (default: 3e-4)")
    p.add_argument("--warmup", type=int, default=50, help="warmup steps (default: 50)")
    p.add_argument("--weight-decay", type=float, default=1e-2, help="AdamW weight decay (default: 1e-2)")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train, subparser=p)

    p = sub.add_parser("eval", help="recall evaluation on a retrieval corpus")
    common(p)
    p.add_argument("--corpus", required=True, help="corpus manifest JSON")
    p.add_argument("--model", default=None, help="checkpoint directory (default: no projection)")
    p.add_argument("--ks", default="1,5,10", help="comma-separated K list (default: 1,5,10)")
    p.add_argument("--directions", default="t2i,i2t", help="directions among t2i,i2t,t2t (default: t2i,i2t)")
    p.add_argument("--langs", default=None, help="comma-separated language subset to average (default: all)")
    p.add_argument("--out", default=None, help="report JSON path (default: stdout only)")
    p.set_defaults(func=cmd_eval, subparser=p)

    p = sub.add_parser("analyze", help="spectral report and/or cluster distance stats")
    common(p)
    p.add_argument("--model", default=None, help="checkpoint directory (default: none)")
    p.add_argument("--tau", type=float, default=0.01, help="threshold-rank fraction of s_max (default: 0.01)")
    p.add_argument("--family", action="append", help="name=emb1 with '<cluster>#<i>' ids (repeatable)")
    p.add_argument("--out", default=None, help="report JSON path (default: stdout only)")
    p.set_defaults(func=cmd_analyze, subparser=p)

    p = sub.add_parser("vizprep", help="cluster, select, sample, and optionally embed to 2D")
    common(p)
    p.add_argument("--gallery", required=True, help="gallery EMB1 file")
    p.add_argument("--family", action="append", help="name=emb1 text family sharing gallery ids (repeatable)")
    p.add_argument("--k", type=int, default=100, help="KMeans clusters (default: 100)")
    p.add_argument("--top-n", type=int, default=50, help="largest clusters considered (default: 50)")
    p.add_argument("--select", type=int, default=17, help="clusters picked by farthest sampling (default: 17)")
    p.add_argument("--per-cluster", type=int, default=10, help="points sampled per cluster (default: 10)")
    p.add_argument("--min-cluster-size", type=int, default=3, help="ignore smaller clusters (default: 3)")
    p.add_argument("--tsne", action="store_true", help="also compute 2D coordinates (default: off)")
    p.add_argument("--perplexity", type=float, default=32.0, help="t-SNE perplexity (default: 32)")
    p.add_argument("--iters", type=int, default=1000, help="t-SNE iterations (default: 1000)")
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_vizprep, subparser=p)

    p = sub.add_parser("tsne", help="exact t-SNE of one embedding file")
    common(p)
    p.add_argument("--input", required=True, help="EMB1 file")
    p.add_argument("--perplexity", type=float, default=32.0, help="perplexity (default: 32)")
    p.add_argument("--iters", type=int, default=1000, help="iterations (default: 1000)")
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_tsne, subparser=p)

    p = sub.add_parser("synth", help="generate a synthetic paired benchmark")
    common(p)
    p.add_argument("--n", type=int, required=True, help="training pairs")
    p.add_argument("--dm", type=int, default=64, help="source dimension (default: 64)")
    p.add_argument("--de", type=int, default=64, help="target dimension (default: 64)")
    p.add_argument("--rank", type=int, default=None, help="map rank (default: full)")
    p.add_argument("--noise", type=float, default=0.01, help="noise sigma (default: 0.01)")
    p.add_argument("--n-eval", type=int, default=0, help="held-out corpus size (default: corpus over training rows)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth, subparser=p)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, args.subparser)
    except (CliError, AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
