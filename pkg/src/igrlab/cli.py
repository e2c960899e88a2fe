"""Command line entry point: corpus generation through serving, one config."""

from __future__ import annotations

import argparse
import json
import sys
import time

from .ablation import run_ablation
from .config import RunConfig, load_run_config
from .corpus import generate_corpus, load_corpus, save_corpus
from .errors import ConfigurationError, IgrlabError
from .model import MultiTaskModel
from .retrieval import evaluate, export_embeddings
from .training import train
from .triplets import build_dataset, load_dataset, save_dataset


def _log(**fields) -> None:
    print(json.dumps(fields), file=sys.stderr)


def _check_exists(path, hint: str) -> None:
    if not path.exists():
        raise ConfigurationError(f"missing file {path} ({hint})")


def _load_inputs(cfg: RunConfig, corpus=True, dataset=False, model=False):
    paths = cfg.paths
    out = []
    if corpus:
        _check_exists(paths.corpus_file, "run gen-corpus first")
        out.append(load_corpus(paths.corpus_file))
    if dataset:
        _check_exists(paths.dataset_file, "run build-dataset first")
        out.append(load_dataset(paths.dataset_file))
    if model:
        _check_exists(paths.model_file, "run train first")
        out.append(MultiTaskModel.load(paths.model_file))
    return out


def cmd_gen_corpus(cfg: RunConfig, args) -> int:
    paths = cfg.paths
    paths.out_dir.mkdir(parents=True, exist_ok=True)
    corpus = generate_corpus(cfg.corpus)
    save_corpus(corpus, paths.corpus_file)
    _log(event="gen-corpus", path=str(paths.corpus_file),
         garments=len(corpus.garments), outfits=len(corpus.outfits))
    return 0


def cmd_build_dataset(cfg: RunConfig, args) -> int:
    paths = cfg.paths
    (corpus,) = _load_inputs(cfg)
    dataset = build_dataset(corpus, cfg.pipeline)
    save_dataset(dataset, paths.dataset_file)
    _log(event="build-dataset", path=str(paths.dataset_file), **dataset.counts())
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    from .report import fig_training_curves

    paths = cfg.paths
    corpus, dataset = _load_inputs(cfg, dataset=True)
    started = time.perf_counter()
    model, history = train(
        dataset, corpus, cfg.model, cfg.train,
        log_path=paths.train_log, checkpoint_path=paths.model_file,
    )
    paths.figures_dir.mkdir(parents=True, exist_ok=True)
    if history:
        fig_training_curves(history, paths.figures_dir / "training_curves.png")
    _log(event="train", path=str(paths.model_file), epochs=len(history),
         wall_s=round(time.perf_counter() - started, 2),
         final=history[-1] if history else None)
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    from .report import fig_metrics, write_metrics_tsv

    paths = cfg.paths
    corpus, dataset, model = _load_inputs(cfg, dataset=True, model=True)
    report = evaluate(
        model, dataset, corpus, cfg.eval_split,
        use_true_branch=args.use_true_branch,
        exclude_reference=args.exclude_reference,
        concat_captions=args.concat_captions,
    )
    report.save(paths.metrics_json)
    write_metrics_tsv([("unified", report)], paths.metrics_tsv)
    paths.figures_dir.mkdir(parents=True, exist_ok=True)
    fig_metrics(report, paths.figures_dir / "metrics.png",
                title=f"retrieval metrics ({cfg.eval_split})")
    print(json.dumps(report.to_dict(), sort_keys=True))
    _log(event="eval", split=cfg.eval_split, metrics_json=str(paths.metrics_json))
    return 0


def cmd_export_embeddings(cfg: RunConfig, args) -> int:
    paths = cfg.paths
    corpus, model = _load_inputs(cfg, model=True)
    export_embeddings(model, corpus, args.split or cfg.eval_split, paths.embeddings_tsv)
    _log(event="export-embeddings", path=str(paths.embeddings_tsv))
    return 0


def cmd_ablate(cfg: RunConfig, args) -> int:
    from .report import fig_ablation, write_metrics_tsv

    paths = cfg.paths
    corpus, dataset = _load_inputs(cfg, dataset=True)
    rows = run_ablation(dataset, corpus, cfg.model, cfg.train,
                        split=cfg.eval_split, seeds=args.seeds)
    write_metrics_tsv(rows, paths.ablation_tsv)
    paths.figures_dir.mkdir(parents=True, exist_ok=True)
    fig_ablation(rows, paths.figures_dir / "ablation.png")
    for label, report in rows:
        _log(event="ablate", shared=label,
             mean_map=round(100 * report.mean_map, 2),
             mean_r_at_k=round(100 * report.mean_r_at_k, 2))
    return 0


def cmd_serve(cfg: RunConfig, args) -> int:
    from .service import create_app, serve

    corpus, model = _load_inputs(cfg, model=True)
    app = create_app(model, corpus, cfg.serve_split, static_dir=args.static)
    serve(app, cfg.host, cfg.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="igrlab",
        description="Desk-scale workbench for interactive garment retrieval",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field by dotted path")
    common.add_argument("--out-dir", help="shortcut for --set out_dir=...")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-corpus", parents=[common],
                   help="generate the synthetic corpus").set_defaults(run=cmd_gen_corpus)
    sub.add_parser("build-dataset", parents=[common],
                   help="select pairs and generate feedback").set_defaults(run=cmd_build_dataset)
    sub.add_parser("train", parents=[common],
                   help="train the two-branch model").set_defaults(run=cmd_train)

    p_eval = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p_eval.add_argument("--split", help="shortcut for --set eval_split=...")
    p_eval.add_argument("--use-true-branch", action="store_true",
                        help="route each query by its task label instead of the classifier")
    p_eval.add_argument("--exclude-reference", action="store_true",
                        help="drop the reference garment from the gallery ranking")
    p_eval.add_argument("--concat-captions", action="store_true",
                        help="query with both feedback sentences joined by ' and '")
    p_eval.set_defaults(run=cmd_eval)

    p_exp = sub.add_parser("export-embeddings", parents=[common],
                           help="write branch-projected embeddings as TSV")
    p_exp.add_argument("--split", help="split to export (default: eval split)")
    p_exp.set_defaults(run=cmd_export_embeddings)

    p_abl = sub.add_parser("ablate", parents=[common],
                           help="compare the four module-sharing settings")
    p_abl.add_argument("--seeds", type=int, default=1, help="seed offsets to average over")
    p_abl.add_argument("--split", help="shortcut for --set eval_split=...")
    p_abl.set_defaults(run=cmd_ablate)

    p_srv = sub.add_parser("serve", parents=[common], help="serve the HTTP API")
    p_srv.add_argument("--static", help="directory of built UI files to mount at /")
    p_srv.set_defaults(run=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = list(args.overrides)
    if args.out_dir:
        overrides.append(f"out_dir={args.out_dir}")
    if getattr(args, "split", None) and args.command in ("eval", "ablate"):
        overrides.append(f"eval_split={args.split}")
    try:
        cfg = load_run_config(args.config, overrides)
        return args.run(cfg, args)
    except IgrlabError as exc:
        _log(event="error", error=str(exc))
        return 2
    except FileNotFoundError as exc:
        _log(event="error", error=f"missing file: {exc.filename}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
