"""Command-line front end wiring the whole toolkit together.

One binary, subcommand per pipeline stage. Settings resolve in strict
precedence order: command-line flags beat PROVHUNT_* environment variables,
which beat the TOML config file, which beats built-in defaults. The
effective configuration is validated before any stage runs and echoed into
every artifact the stage writes, so results stay reproducible from their
own metadata.

Exit codes: 0 success, 1 usage or configuration error, 2 hunt completed
with at least one flagged graph, 3 runtime failure inside a stage.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from . import __version__
from .bench import run_suite
from .graphs import (
    SchemaError,
    graph_from_dict,
    load_graph,
    load_patterns,
    match_pois,
    poi_entities,
)
from .ingest import ParseIssue, dedup, parse_file, write_events
from .matchnet import ReprModel, load_model, save_model
from .ppg import build_ppg, load_ppg, save_ppg
from .sampler import SamplingConfig, ThreatGraph, sample
from .hunting import hunt, hunt_exhaustive
from .training import TrainConfig, sample_benign_corpus, train
from .vocab import AbstractionRules

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FLAGGED = 2
EXIT_RUNTIME = 3

_ENV_PREFIX = "PROVHUNT_"
_LOG_LEVELS = ("debug", "info", "warning", "error")

log = logging.getLogger("provhunt")


class ConfigError(ValueError):
    """Bad configuration value, wherever it came from."""


@dataclass
class Config:
    """Every tunable the pipeline stages accept, with its default."""

    window_ms: int = 300_000
    abs_rules: str = ""
    k: int = 2
    rules: str = "default"
    max_nodes: int = 5_000
    theta: float = 0.3
    seed: int = 0
    tau: float = 0.1
    epochs: int = 100
    batch_size: int = 16
    lr: float = 0.001
    perturb_ratio: float = 0.2
    corpus_size: int = 1_500
    d: int = 128
    layers: int = 3
    gate_threshold: int = 3
    log_level: str = "warning"

    def validate(self) -> None:
        if self.window_ms <= 0:
            raise ConfigError("window_ms must be positive")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.max_nodes < 1:
            raise ConfigError("max_nodes must be positive")
        if self.log_level not in _LOG_LEVELS:
            raise ConfigError(
                f"log_level must be one of {', '.join(_LOG_LEVELS)}"
            )
        if self.d < 1 or self.layers < 1 or self.gate_threshold < 0:
            raise ConfigError("d and layers must be positive, gate_threshold >= 0")
        # the sampler and trainer validate their own slices of the config;
        # run both here so a bad value dies before any stage starts
        SamplingConfig(k=self.k, rules=self.rules, max_nodes=self.max_nodes)
        TrainConfig(tau=self.tau, epochs=self.epochs, batch_size=self.batch_size,
                    lr=self.lr, perturb_ratio=self.perturb_ratio,
                    corpus_size=self.corpus_size, seed=self.seed)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def echo(self) -> dict:
        """The block stamped into every artifact."""
        return {"version": __version__, **self.to_dict()}

    def sampling_config(self) -> SamplingConfig:
        return SamplingConfig(k=self.k, rules=self.rules, max_nodes=self.max_nodes)

    def train_config(self) -> TrainConfig:
        return TrainConfig(tau=self.tau, epochs=self.epochs,
                           batch_size=self.batch_size, lr=self.lr,
                           perturb_ratio=self.perturb_ratio,
                           corpus_size=self.corpus_size, seed=self.seed)

    def load_rules(self) -> Optional[AbstractionRules]:
        return AbstractionRules.load(self.abs_rules) if self.abs_rules else None


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(name: str, raw, source: str):
    typ = _FIELD_TYPES[name]
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{source}: {name} must be {typ}, got {raw!r}") from None


def _from_file(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    unknown = set(doc) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"{path}: unknown settings: {', '.join(sorted(unknown))}")
    return {k: _coerce(k, v, path) for k, v in doc.items()}


def _from_env() -> dict:
    out = {}
    for name in _FIELD_TYPES:
        raw = os.environ.get(_ENV_PREFIX + name.upper())
        if raw is not None:
            out[name] = _coerce(name, raw, f"${_ENV_PREFIX}{name.upper()}")
    return out


def resolve_config(args: argparse.Namespace) -> Config:
    """Defaults, then config file, then environment, then flags."""
    merged: dict = {}
    path = getattr(args, "config", None)
    if path:
        merged.update(_from_file(path))
    merged.update(_from_env())
    for name in _FIELD_TYPES:
        flag = getattr(args, name, None)
        if flag is not None:
            merged[name] = flag
    cfg = Config(**merged)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# plumbing helpers

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage problems exit 1 per the contract, not argparse's default 2."""

    def error(self, message):
        raise _UsageError(message)


def _write_json(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=str)
        fh.write("\n")


def _read_poi_ids(path) -> list[str]:
    """Seed ids from a pois.json artifact or a bare JSON list of ids."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, list):
        ids = doc
    elif isinstance(doc, dict) and "ids" in doc:
        ids = doc["ids"]
    else:
        raise ConfigError(f"{path}: expected a JSON list of ids or an object "
                          "with an 'ids' field")
    if not all(isinstance(i, str) for i in ids):
        raise ConfigError(f"{path}: seed ids must be strings")
    return ids


def _load_queries(path) -> list:
    """Query graphs from a directory of graph JSON files or a single file
    holding either one graph document or an array of them."""
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.suffix == ".json")
        if not files:
            raise ConfigError(f"{path}: no .json query graphs found")
        return [load_graph(f) for f in files]
    with open(p, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, list):
        return [graph_from_dict(d) for d in doc]
    return [graph_from_dict(doc)]


def _resolve_seeds(snap, ids: Sequence[str], where: str) -> list[int]:
    ents = poi_entities(snap, ids)
    if not ents:
        raise ConfigError(f"{where}: none of the {len(ids)} seed ids exist "
                          "in the store")
    missing = len(ids) - len(ents)
    if missing:
        log.warning("%d of %d seed ids not found in the store", missing, len(ids))
    return sorted(ents)


# ---------------------------------------------------------------------------
# subcommands

def _cmd_ingest(args, cfg: Config) -> int:
    issues: list[ParseIssue] = []
    events = []
    for f in args.infiles:
        events.extend(parse_file(f, issues))
    kept, stats = dedup(events, window_ms=cfg.window_ms)
    if args.out:
        write_events(kept, args.out)
    if args.stats_out:
        _write_json(args.stats_out, {
            "config": cfg.echo(),
            "files": list(args.infiles),
            "parse_issues": len(issues),
            "first_issues": [
                {"line": i.line_no, "reason": i.reason} for i in issues[:20]
            ],
            "dedup": stats.to_dict(),
        })
    print(f"ingest: {stats.input_events} events in, {stats.remaining} kept "
          f"(s1 -{stats.s1_removed}, s2 -{stats.s2_removed}, "
          f"{len(issues)} parse issues)")
    return EXIT_OK


def _cmd_build_ppg(args, cfg: Config) -> int:
    events = parse_file(args.infile)
    g, suppressed = build_ppg(events, rules=cfg.load_rules(),
                              versioning=args.versioning)
    save_ppg(g, args.out)
    snap = g.snapshot()
    _write_json(str(args.out) + ".meta.json", {
        "config": cfg.echo(),
        "source": str(args.infile),
        "versioning": args.versioning,
        "events_in": len(events),
        "suppressed": suppressed,
        "stats": snap.stats(),
    })
    rep = snap.memory_report()
    print(f"build-ppg: {snap.n_entities} entities, {rep['n_edges']} edges, "
          f"{rep['total_bytes']} bytes -> {args.out}")
    return EXIT_OK


def _cmd_stats(args, cfg: Config) -> int:
    g = load_ppg(args.ppg, rules=cfg.load_rules())
    doc = {"config": cfg.echo(), "ppg": str(args.ppg), **g.snapshot().stats()}
    if args.out:
        _write_json(args.out, doc)
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _cmd_pois(args, cfg: Config) -> int:
    patterns = load_patterns(args.patterns)
    events = parse_file(args.infile)
    matches = match_pois(events, patterns)
    _write_json(args.out, {"config": cfg.echo(), **matches.to_dict()})
    print(f"pois: {len(matches.ids)} subjects matched "
          f"({len(matches.events)} events) -> {args.out}")
    return EXIT_OK


def _cmd_sample(args, cfg: Config) -> int:
    g = load_ppg(args.ppg, rules=cfg.load_rules())
    snap = g.snapshot()
    seeds = _resolve_seeds(snap, _read_poi_ids(args.pois), str(args.pois))
    tgs = sample(snap, seeds, cfg.sampling_config())
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, tg in enumerate(tgs):
        name = f"tg{i:04d}.json"
        _write_json(outdir / name, tg.to_dict())
        names.append(name)
    _write_json(outdir / "manifest.json", {
        "config": cfg.echo(),
        "ppg": str(args.ppg),
        "n_seeds": len(seeds),
        "graphs": names,
        "truncated": [tg.truncated for tg in tgs],
    })
    print(f"sample: {len(seeds)} seeds -> {len(tgs)} threat graphs in {outdir}")
    return EXIT_OK


def _cmd_train(args, cfg: Config) -> int:
    events = parse_file(args.benign)
    kept, _ = dedup(events, window_ms=cfg.window_ms)
    g, _ = build_ppg(kept, rules=cfg.load_rules(), versioning=True)
    corpus = sample_benign_corpus(g.snapshot(), size=cfg.corpus_size,
                                  seed=cfg.seed)
    log.info("corpus: %d graphs", len(corpus))
    model = ReprModel(d=cfg.d, layers=cfg.layers,
                      gate_threshold=cfg.gate_threshold, seed=cfg.seed)
    result = train(model, corpus, cfg.train_config())
    save_model(model, args.out)
    _write_json(str(args.out) + ".meta.json", {
        "config": cfg.echo(),
        "benign": str(args.benign),
        "corpus_graphs": len(corpus),
        "model": model.describe(),
        "digest": model.digest(),
        "loss_first": result.losses[0],
        "loss_last": result.losses[-1],
        "pos_mean": result.pos_mean,
        "neg_mean": result.neg_mean,
    })
    if args.curve:
        with open(args.curve, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss"])
            for i, loss in enumerate(result.losses):
                w.writerow([i, f"{loss:.8f}"])
    print(f"train: {len(corpus)} graphs, {cfg.epochs} epochs, "
          f"loss {result.losses[0]:.4f} -> {result.losses[-1]:.4f}, "
          f"digest {model.digest()} -> {args.out}")
    return EXIT_OK


def _load_graph_batch(path) -> tuple[list[str], list]:
    """Graphs to embed: a sample output directory, a threat-graph array
    file, or a single graph document."""
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.iterdir()
                       if f.suffix == ".json" and f.name != "manifest.json")
        if not files:
            raise ConfigError(f"{path}: no graph files found")
        out = []
        for f in files:
            with open(f, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
            g = ThreatGraph.from_dict(doc).graph if "annex" in doc \
                else graph_from_dict(doc)
            out.append(g)
        return [f.name for f in files], out
    with open(p, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, list):
        gs = [ThreatGraph.from_dict(d).graph if "annex" in d
              else graph_from_dict(d) for d in doc]
        return [f"{p.name}[{i}]" for i in range(len(gs))], gs
    g = ThreatGraph.from_dict(doc).graph if "annex" in doc else graph_from_dict(doc)
    return [p.name], [g]


def _cmd_embed(args, cfg: Config) -> int:
    import numpy as np

    model = load_model(args.model)
    names, graphs = _load_graph_batch(args.graphs)
    emb = np.stack([model.embed(g) for g in graphs])
    np.savez(args.out, embeddings=emb, names=np.array(names),
             config=json.dumps(cfg.echo()), model_digest=model.digest())
    print(f"embed: {len(graphs)} graphs -> {emb.shape} matrix in {args.out}")
    return EXIT_OK


def _cmd_hunt(args, cfg: Config) -> int:
    g = load_ppg(args.ppg, rules=cfg.load_rules())
    snap = g.snapshot()
    model = load_model(args.model)
    queries = _load_queries(args.queries)
    if args.exhaustive:
        report = hunt_exhaustive(snap, queries, model, theta=cfg.theta,
                                 k=cfg.k, rules=cfg.rules,
                                 max_nodes=cfg.max_nodes, stride=args.stride)
    else:
        if not args.pois:
            raise _UsageError("hunt needs --pois unless --exhaustive is set")
        seeds = _resolve_seeds(snap, _read_poi_ids(args.pois), str(args.pois))
        report = hunt(snap, seeds, queries, model, theta=cfg.theta,
                      k=cfg.k, rules=cfg.rules, max_nodes=cfg.max_nodes)
    _write_json(args.report, {"config": cfg.echo(), **report.to_dict()})
    if args.hist:
        with open(args.hist, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["graph_id", "best_query", "score", "flagged"])
            for v in report.verdicts:
                w.writerow([v.graph_id, v.best_query, f"{v.score:.6f}",
                            int(v.flagged)])
    print(f"hunt: {report.n_graphs} graphs scored, {report.n_flagged} flagged "
          f"at theta={cfg.theta} -> {args.report}")
    return EXIT_FLAGGED if report.any_flagged else EXIT_OK


def _cmd_bench(args, cfg: Config) -> int:
    model = load_model(args.model) if args.model else None
    out = run_suite(args.suite, seed=cfg.seed, n_events=args.n_events,
                    model=model, theta=cfg.theta, k=cfg.k,
                    decoy_pois=args.decoys)
    out["config"] = cfg.echo()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / f"{args.suite}.json", out)
    if "memory" in out:
        with open(outdir / "memory.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for key, val in out["memory"].items():
                w.writerow([key, val])
    if "sampling" in out:
        with open(outdir / "sampling.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["campaign", "k", "node_cr", "node_nr", "edge_cr",
                        "edge_nr", "nodes", "edges"])
            for name, row in out["sampling"].items():
                for k, cn in row.items():
                    w.writerow([name, k, cn["node_cr"], cn["node_nr"],
                                cn["edge_cr"], cn["edge_nr"],
                                cn["nodes"], cn["edges"]])
    if "hunt" in out:
        with open(outdir / "scores.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["score", "label"])
            hist = out["hunt"]["hist"]
            for s, lb in zip(hist["scores"], hist["labels"]):
                w.writerow([f"{s:.6f}", "" if lb is None else int(lb)])
    print(f"bench: suite {args.suite} done in {out['elapsed_s']:.1f}s "
          f"-> {outdir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_config_flags(p: argparse.ArgumentParser, names: Sequence[str]) -> None:
    """Expose a slice of Config as flags; None means not given."""
    for name in names:
        typ = {"int": int, "float": float, "str": str}[_FIELD_TYPES[name]]
        p.add_argument("--" + name.replace("_", "-"), dest=name,
                       type=typ, default=None)


def build_parser() -> _Parser:
    root = _Parser(prog="provhunt", description=__doc__.split("\n\n")[0])
    root.add_argument("--version", action="version",
                      version=f"provhunt {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="TOML settings file")
    common.add_argument("--log-level", dest="log_level", default=None,
                        choices=_LOG_LEVELS)

    sub = root.add_subparsers(dest="cmd", metavar="command")

    p = sub.add_parser("ingest", parents=[common],
                       help="parse JSONL audit streams and deduplicate")
    p.add_argument("--in", dest="infiles", nargs="+", required=True)
    p.add_argument("--out", default=None, help="kept events, JSONL")
    p.add_argument("--stats-out", dest="stats_out", default=None)
    _add_config_flags(p, ["window_ms"])
    p.set_defaults(func=_cmd_ingest, stage="ingest")

    p = sub.add_parser("build-ppg", parents=[common],
                       help="build the packed store from events")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--versioning", action="store_true")
    _add_config_flags(p, ["abs_rules"])
    p.set_defaults(func=_cmd_build_ppg, stage="build-ppg")

    p = sub.add_parser("stats", parents=[common],
                       help="print store statistics")
    p.add_argument("ppg")
    p.add_argument("--out", default=None)
    _add_config_flags(p, ["abs_rules"])
    p.set_defaults(func=_cmd_stats, stage="stats")

    p = sub.add_parser("pois", parents=[common],
                       help="match alert patterns against an event stream")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--patterns", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pois, stage="pois")

    p = sub.add_parser("sample", parents=[common],
                       help="sample threat graphs around seed entities")
    p.add_argument("--ppg", required=True)
    p.add_argument("--pois", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p, ["k", "rules", "max_nodes", "abs_rules"])
    p.set_defaults(func=_cmd_sample, stage="sample")

    p = sub.add_parser("train", parents=[common],
                       help="train the matcher on a benign stream")
    p.add_argument("--benign", required=True)
    p.add_argument("--out", required=True, help="model checkpoint")
    p.add_argument("--curve", default=None, help="loss curve CSV")
    _add_config_flags(p, ["tau", "epochs", "batch_size", "lr",
                          "perturb_ratio", "corpus_size", "d", "layers",
                          "gate_threshold", "seed", "window_ms", "abs_rules"])
    p.set_defaults(func=_cmd_train, stage="train")

    p = sub.add_parser("embed", parents=[common],
                       help="embed graphs with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--graphs", required=True,
                   help="graph file or sample output directory")
    p.add_argument("--out", required=True, help="npz matrix")
    p.set_defaults(func=_cmd_embed, stage="embed")

    p = sub.add_parser("hunt", parents=[common],
                       help="score sampled neighborhoods against queries")
    p.add_argument("--ppg", required=True)
    p.add_argument("--pois", default=None)
    p.add_argument("--queries", required=True,
                   help="query graph file or directory")
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--hist", default=None, help="score table CSV")
    p.add_argument("--exhaustive", action="store_true",
                   help="sweep every process instead of using seeds")
    p.add_argument("--stride", type=int, default=1)
    _add_config_flags(p, ["theta", "k", "rules", "max_nodes", "abs_rules"])
    p.set_defaults(func=_cmd_hunt, stage="hunt")

    p = sub.add_parser("bench", parents=[common],
                       help="run a canned benchmark suite")
    p.add_argument("--suite", required=True,
                   choices=["smoke", "memory", "sampling", "all"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-events", dest="n_events", type=int, default=None)
    p.add_argument("--model", default=None,
                   help="trained checkpoint; adds the hunt stage")
    p.add_argument("--decoys", type=int, default=60)
    _add_config_flags(p, ["seed", "theta", "k"])
    p.set_defaults(func=_cmd_bench, stage="bench")

    return root


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"provhunt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version print and stop here
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return EXIT_USAGE

    stage = args.stage
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"provhunt: {stage}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, cfg.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args, cfg)
    except _UsageError as exc:
        print(f"provhunt: {stage}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, SchemaError, OSError, ValueError) as exc:
        print(f"provhunt: {stage}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - the contract wants a 3 here
        print(f"provhunt: {stage}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
