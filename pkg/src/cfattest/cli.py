"""Command-line entry point.

Exit codes: 0 success (benign verdict), 10 malicious verdict, 2 parse error,
3 I/O error, 4 profile, model or validation error, 1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .attacks import AttackSpec, gen_attack
from .attest import AttestationProfile, attest, calibrate
from .config import Config, load_config, override
from .errors import (CalibrationError, CfaError, ConfigError, EmptyTraceError, ModelError,
                     ParseError, ProfileError, SpecError, WriteError)
from .graph import (build_graph, graph_from_bytes, graph_to_bytes, graph_to_json, load_graph,
                    save_graph)
from .gnn.model import VgaeModel
from .gnn.train import train
from .trace_io import MAGIC, CorpusManifest, ManifestEntry, load_trace, save_trace, trace_stats

log = logging.getLogger("cfattest")

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_IO, EXIT_INVALID, EXIT_MALICIOUS = 0, 1, 2, 3, 4, 10


def _write(path, text: str):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def _is_graph_file(path) -> bool:
    """Graph files are JSON objects or RAGE containers whose full layout parses as a graph."""
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        try:
            graph_from_bytes(data)
            return True
        except ParseError:
            return False
    return data.lstrip()[:1] == b"{"


def _graph(path, constant_feature: bool):
    """Load a graph file, or build one from a trace file."""
    if _is_graph_file(path):
        g = load_graph(path)
        want = 16 if constant_feature else 15
        if g.feature_dim != want:
            raise ConfigError(f"{path} has {g.feature_dim} features, expected {want}")
        return g
    return build_graph(load_trace(path), constant_feature=constant_feature)


def _load_model(path) -> VgaeModel:
    return VgaeModel.from_json(Path(path).read_text())


def _load_profile(path) -> AttestationProfile:
    return AttestationProfile.from_json(Path(path).read_text())


def _require_seed(cfg: Config, cmd: str):
    if cfg.seed is None:
        raise ConfigError(f"{cmd} needs a seed (--seed or \"seed\" in the config file)")


# -- commands -----------------------------------------------------------------

def cmd_preprocess(args, cfg: Config) -> int:
    trace = load_trace(args.trace, args.format)
    g = build_graph(trace, constant_feature=cfg.constant_feature)
    save_graph(args.out, g)
    print(f"nodes={g.n_nodes} edges={g.n_edges} features={g.feature_dim}")
    if args.stats:
        trace_bytes = Path(args.trace).stat().st_size
        graph_bytes = Path(args.out).stat().st_size
        print(f"trace_bytes={trace_bytes} graph_bytes={graph_bytes} "
              f"compression={trace_bytes / graph_bytes:.4f}")
    return EXIT_OK


def cmd_stats(args, cfg: Config) -> int:
    trace = load_trace(args.trace, args.format)
    s = trace_stats(trace)
    g = build_graph(trace, constant_feature=cfg.constant_feature)
    s.update(nodes=g.n_nodes, edges=g.n_edges,
             graph_bytes_json=len(graph_to_json(g).encode()),
             graph_bytes_binary=len(graph_to_bytes(g)))
    s["compression_binary"] = s["byte_size_binary"] / s["graph_bytes_binary"]
    print(json.dumps(s, indent=1))
    return EXIT_OK


def cmd_train(args, cfg: Config) -> int:
    _require_seed(cfg, "train")
    g = _graph(args.graph, cfg.constant_feature)
    result = train(g, cfg.train)
    out = args.out or cfg.paths.model
    if out is None:
        raise ConfigError("no model output path (-o or paths.model)")
    _write(out, result.model.to_json() + "\n")
    if args.history:
        rows = ["epoch,loss,ap,auc,lr"] + [
            f"{h['epoch']},{h['loss']!r},{h['ap']!r},{h['auc']!r},{h['lr']!r}" for h in result.history]
        _write(args.history, "\n".join(rows) + "\n")
    best = result.best
    print(f"best_epoch={result.best_epoch} stopped_epoch={result.stopped_epoch} "
          f"ap={best['ap']:.4f} auc={best['auc']:.4f}")
    return EXIT_OK


def _calibration_inputs(args, cfg: Config):
    manifest = args.manifest or cfg.paths.corpus
    if manifest:
        m = CorpusManifest.load(manifest)
        return m.resolve(m.train), [m.resolve(e) for e in m.by_role("validation")]
    if not args.ref or not args.val:
        raise ConfigError("calibrate needs --manifest or both --ref and --val")
    return args.ref, args.val


def cmd_calibrate(args, cfg: Config) -> int:
    _require_seed(cfg, "calibrate")
    model = _load_model(args.model or cfg.paths.model)
    ref, val = _calibration_inputs(args, cfg)
    prof = calibrate(model, _graph(ref, cfg.constant_feature),
                     [_graph(p, cfg.constant_feature) for p in val])
    out = args.out or cfg.paths.profile
    if out is None:
        raise ConfigError("no profile output path (-o or paths.profile)")
    _write(out, prof.to_json() + "\n")
    print(f"threshold={prof.threshold!r} n_val={prof.n_val}")
    return EXIT_OK


def cmd_attest(args, cfg: Config) -> int:
    model = _load_model(args.model or cfg.paths.model)
    prof = _load_profile(args.profile or cfg.paths.profile)
    g = _graph(args.input, cfg.constant_feature)
    v = attest(prof, model, g, trace_id=Path(args.input).name)
    if args.out:
        _write(args.out, v.to_json() + "\n")
    print(f"distance={v.distance!r} threshold={v.threshold!r} verdict={v.outcome}")
    return EXIT_MALICIOUS if v.malicious else EXIT_OK


def cmd_gen_attack(args, cfg: Config) -> int:
    _require_seed(cfg, "gen-attack")
    pos = None if args.pos == "random" else int(args.pos)
    spec = AttackSpec(args.kind, args.inserts, pos=pos, repeats=args.repeats, seed=cfg.seed)
    trace = load_trace(args.input, args.format)
    out = gen_attack(trace, spec)
    save_trace(args.out, out, args.out_format)
    print(f"steps_in={len(trace)} steps_out={len(out)} source={out.source_id}")
    return EXIT_OK


def cmd_gen_workload(args, cfg: Config) -> int:
    from .workload import gen_workload
    _require_seed(cfg, "gen-workload")
    spec = cfg.workload.__class__(**{**cfg.workload.__dict__, "seed": cfg.seed})
    traces = gen_workload(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_val = cfg.evaluate.n_val
    entries = []
    for i, t in enumerate(traces):
        name = f"trace_{i:04d}.txt"
        save_trace(out / name, t, "text")
        role = "train" if i == 0 else "validation" if i <= n_val else "attest"
        entries.append(ManifestEntry(name, role, "benign"))
    CorpusManifest(entries, out).save(out / "manifest.json")
    print(f"traces={len(traces)} manifest={out / 'manifest.json'}")
    return EXIT_OK


def cmd_evaluate(args, cfg: Config) -> int:
    from . import harness, plotting
    _require_seed(cfg, "evaluate")
    ev = cfg.evaluate
    hc = harness.HarnessConfig(workload=cfg.workload, train=cfg.train, n_val=ev.n_val,
                               n_benign=ev.n_benign, n_attack_bases=ev.n_attack_bases,
                               constant_feature=cfg.constant_feature,
                               zero_features=tuple(args.zero_feature or ()))
    out = Path(args.out_dir or cfg.paths.reports or "reports")
    out.mkdir(parents=True, exist_ok=True)
    meta = {"config": cfg.to_dict(), "experiment": args.experiment}
    todo = ["rop", "dop", "ablation"] if args.experiment == "all" else [args.experiment]
    for exp in todo:
        if exp == "rop":
            res = harness.run_rop_grid(hc, ev.rop_lengths, ev.per_length, ev.reps, cfg.seed,
                                       ev.n_jobs)
            plotting.plot_detection_by_config(res.rows, out / "rop_grid.png")
        elif exp == "dop":
            res = harness.run_dop_grid(hc, ev.dop_attacks, ev.dop_total_inserted, ev.reps,
                                       cfg.seed, ev.n_jobs, ev.dop_inserts)
            plotting.plot_detection_by_config(res.rows, out / "dop_grid.png",
                                              xlabel="DOP inserted steps")
        elif exp == "ablation":
            res = harness.run_threshold_ablation(hc, ev.ablation_n, ev.reps, cfg.seed,
                                                 ev.ablation_rop_length, ev.per_length,
                                                 ev.n_jobs)
            table = harness.ablation_table(res.rows)
            plotting.plot_ablation(table, out / "threshold_ablation.png")
            meta_ab = dict(meta, table=table)
        else:
            res = harness.run_distance_growth(hc, (5, 50, 500), ev.per_length, ev.reps,
                                              cfg.seed, ev.n_jobs)
            plotting.plot_detection_by_config(res.rows, out / "distance_growth.png")
        name = {"rop": "rop_grid", "dop": "dop_grid", "ablation": "threshold_ablation",
                "growth": "distance_growth"}[exp]
        harness.write_csv(res.all_rows(), out / f"{name}.csv")
        harness.write_json(res, out / f"{name}.json", meta_ab if exp == "ablation" else meta)
        r = res.report
        print(f"{name}: fpr={r.fpr:.4f} precision={r.precision:.4f} recall={r.recall:.4f} "
              f"f1={r.f1:.4f} reps={r.reps}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfattest", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    common.add_argument("--constant-feature", action="store_true", default=None,
                        help="append the constant 16th feature column")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("preprocess", parents=[common], help="trace -> execution graph")
    s.add_argument("trace")
    s.add_argument("-o", "--out", required=True, help="graph file (.json, or .bin for binary)")
    s.add_argument("--format", choices=("text", "binary"))
    s.add_argument("--stats", action="store_true", help="print the trace/graph size ratio")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("stats", parents=[common], help="trace and graph size statistics")
    s.add_argument("trace")
    s.add_argument("--format", choices=("text", "binary"))
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("train", parents=[common], help="fit the VGAE on trace zero")
    s.add_argument("graph", help="graph or trace file")
    s.add_argument("-o", "--out", help="model JSON")
    s.add_argument("--history", help="per-epoch CSV")
    s.add_argument("--max-epochs", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--lr", type=float, dest="lr0")
    s.add_argument("--dropout", type=float, dest="dropout_p")
    s.add_argument("--kl-weight", type=float)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("calibrate", parents=[common], help="reference embeddings + threshold")
    s.add_argument("--model")
    s.add_argument("--manifest", help="corpus manifest (train + validation entries)")
    s.add_argument("--ref", help="trace zero (graph or trace file)")
    s.add_argument("--val", nargs="+", help="validation graphs or traces")
    s.add_argument("-o", "--out", help="profile JSON")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("attest", parents=[common], help="verdict for one execution")
    s.add_argument("input", help="graph or trace file")
    s.add_argument("--model")
    s.add_argument("--profile")
    s.add_argument("-o", "--out", help="verdict JSON")
    s.set_defaults(func=cmd_attest)

    s = sub.add_parser("gen-attack", parents=[common], help="inject a synthetic ROP/DOP attack")
    s.add_argument("--kind", choices=("rop", "dop"), required=True)
    s.add_argument("--pos", default="random", help="insertion index or 'random'")
    s.add_argument("--inserts", type=int, required=True)
    s.add_argument("--repeats", type=int, default=0)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("text", "binary"))
    s.add_argument("--out-format", choices=("text", "binary"), default="text")
    s.set_defaults(func=cmd_gen_attack)

    s = sub.add_parser("gen-workload", parents=[common], help="write a synthetic benign corpus")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n-traces", type=int)
    s.add_argument("--n-blocks", type=int)
    s.add_argument("--trace-len", type=int)
    s.set_defaults(func=cmd_gen_workload)

    s = sub.add_parser("evaluate", parents=[common], help="run the experiment grid")
    s.add_argument("--experiment", choices=("rop", "dop", "ablation", "growth", "all"),
                   default="all")
    s.add_argument("--out-dir", help="report directory (CSV, JSON, PNG)")
    s.add_argument("--reps", type=int)
    s.add_argument("--per-length", type=int)
    s.add_argument("--lengths", type=int, nargs="+", dest="rop_lengths")
    s.add_argument("--n-jobs", type=int)
    s.add_argument("--zero-feature", action="append", help="feature name to zero (repeatable)")
    s.set_defaults(func=cmd_evaluate)
    return p


def effective_config(args) -> Config:
    cfg = load_config(args.config)
    cfg = override(cfg, None, seed=args.seed, log_level=args.log_level,
                   constant_feature=args.constant_feature)
    if args.cmd == "train":
        cfg = override(cfg, "train", max_epochs=args.max_epochs, patience=args.patience,
                       lr0=args.lr0, dropout_p=args.dropout_p, kl_weight=args.kl_weight)
    if args.cmd == "gen-workload":
        cfg = override(cfg, "workload", n_traces=args.n_traces, n_blocks=args.n_blocks,
                       trace_len=args.trace_len)
    if args.cmd == "evaluate":
        cfg = override(cfg, "evaluate", reps=args.reps, per_length=args.per_length,
                       n_jobs=args.n_jobs,
                       rop_lengths=tuple(args.rop_lengths) if args.rop_lengths else None)
    if cfg.seed is not None:
        # one seed drives every stochastic component of the run
        cfg = override(cfg, "train", seed=cfg.seed)
        cfg = override(cfg, "workload", seed=cfg.seed)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = effective_config(args)
        logging.basicConfig(level=cfg.log_level, stream=sys.stderr,
                            format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        log.info("command %s seed=%s", args.cmd, cfg.seed)
        log.info("effective config %s", json.dumps(cfg.to_dict(), sort_keys=True))
        return args.func(args, cfg)
    except (ParseError, EmptyTraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (WriteError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ProfileError, ModelError, ConfigError, SpecError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CfaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
