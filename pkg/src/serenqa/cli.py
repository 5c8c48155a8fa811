"""Command-line pipeline: build caches, score, partition, explore, evaluate."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import evalkit
from .embed import EmbeddingTable, load_embeddings, propagate_embeddings
from .errors import (DomainError, ExplorationError, InfeasibleSplitError, NotFoundError,
                     SerenQAError, StaleCacheError, UnsupportedPatternError, ValidationError)
from .explore import BeamParams, EdgeScorer, ExternalPolicy, HeuristicPolicy, beam_explore
from .kg import Graph, QaRecord, load_benchmark, load_edges
from .partition import budget, greedy_swap, initial_partition
from .pattern import PatternQuery, execute_pattern, split_graph
from .prob import (MarginalVector, TransitionMatrix, build_transition, content_hash, khop_matrix,
                   load_marginal, load_matrix, marginal, read_cache_header, save_marginal,
                   save_matrix)
from .rns import AnswerPartition, RnsScorer, RnsWeights, calibrate_weights

log = logging.getLogger("serenqa")

FALLBACK_DIM = 64
FALLBACK_LAYERS = 2
STRATEGIES = ("llm", "sscore", "expert")


@dataclass
class Context:
    args: argparse.Namespace
    graph: Graph
    digest: bytes

    @property
    def out(self) -> Path:
        return Path(self.args.out)


def _dump(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cache_dir(out) -> Path:
    env = os.environ.get("SERENQA_CACHE_DIR")
    return Path(env) if env else Path(out) / "cache"


def _cache_paths(args) -> dict:
    d = cache_dir(args.out)
    tag = f"k{args.k}"
    mtag = f"{tag}-d{args.damping!r}-e{args.epsilon!r}"
    return {"p1": d / "p1.bin", "pk": d / f"pk-{tag}.bin", "marginal": d / f"marginal-{mtag}.bin"}


def _cache_valid(path: Path, digest: bytes, strict: bool) -> bool:
    if not path.exists():
        return False
    try:
        _, _, stored = read_cache_header(path)
    except SerenQAError:
        stored = None
    if stored == digest:
        return True
    if strict:
        raise StaleCacheError(f"{path} was built from a different edge file")
    log.info("cache %s is stale; rebuilding", path)
    return False


def ensure_models(ctx: Context) -> tuple[TransitionMatrix, MarginalVector, dict]:
    """Load the probability models from cache, building whatever is missing or stale."""
    args, g = ctx.args, ctx.graph
    paths = _cache_paths(args)
    ids = g.sorted_ids()
    status = {}
    if _cache_valid(paths["pk"], ctx.digest, args.strict):
        pk = load_matrix(paths["pk"], ids, ctx.digest)
        status["pk"] = "hit"
    else:
        if _cache_valid(paths["p1"], ctx.digest, args.strict):
            p1 = load_matrix(paths["p1"], ids, ctx.digest)
            status["p1"] = "hit"
        else:
            p1 = build_transition(g)
            save_matrix(paths["p1"], p1, ctx.digest)
            status["p1"] = "built"
        pk = khop_matrix(p1, args.k, workers=args.workers)
        save_matrix(paths["pk"], pk, ctx.digest)
        status["pk"] = "built"
    if status.get("pk") == "hit" and "p1" not in status:
        status["p1"] = "hit" if _cache_valid(paths["p1"], ctx.digest, args.strict) else "skipped"
    if _cache_valid(paths["marginal"], ctx.digest, args.strict):
        mv = load_marginal(paths["marginal"], ids, ctx.digest)
        status["marginal"] = "hit"
    else:
        mv = marginal(pk, args.damping, args.epsilon)
        save_marginal(paths["marginal"], mv, args.k, ctx.digest)
        status["marginal"] = "built"
    return pk, mv, status


def select_records(args, records) -> list[QaRecord]:
    if args.qid is None:
        return sorted(records, key=lambda r: r.qid)
    wanted = set(args.qid)
    known = {r.qid for r in records}
    missing = sorted(wanted - known)
    if missing:
        raise NotFoundError(f"qid {missing[0]} is not in the benchmark")
    return sorted((r for r in records if r.qid in wanted), key=lambda r: r.qid)


def strategies(args, records) -> list[str]:
    if args.strategy == "all":
        names = set()
        for r in records:
            names |= set(r.partitions)
        return sorted(names)
    return [s.strip() for s in args.strategy.split(",") if s.strip()]


def embeddings_for(ctx: Context, needed) -> EmbeddingTable:
    args = ctx.args
    table = load_embeddings(args.embeddings) if args.embeddings else None
    missing = sorted(set(needed)) if table is None else table.missing(needed)
    if not missing:
        return table
    if not args.fallback_embeddings:
        raise ValidationError(
            f"{len(missing)} ids lack embeddings ({', '.join(missing[:10])}"
            f"{', ...' if len(missing) > 10 else ''}); pass --fallback-embeddings to generate them")
    log.info("generating fallback embeddings for %d ids", len(missing))
    return propagate_embeddings(ctx.graph, FALLBACK_DIM, FALLBACK_LAYERS, args.seed)


def _jobs(args, fn, items):
    """Run ``fn`` over ``items`` with the configured worker count, keeping input order."""
    if args.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# --------------------------------------------------------------------------
# subcommands

def cmd_build(ctx: Context) -> int:
    _, _, status = ensure_models(ctx)
    for name in ("p1", "pk", "marginal"):
        print(f"{name}: {'cache hit' if status.get(name) == 'hit' else status.get(name, 'built')}")
    return 0


def _scorer(ctx: Context, records, names):
    pk, mv, _ = ensure_models(ctx)
    needed = set()
    for r in records:
        for s in names:
            if s in r.partitions:
                p = r.partitions[s]
                needed |= set(p.exact_matches) | set(p.serendipity_set)
        needed |= set(r.answers)
    needed &= set(ctx.graph.nodes)
    t = embeddings_for(ctx, needed)
    weights = RnsWeights.parse(ctx.args.weights)
    return RnsScorer(pk, mv, t, weights, ctx.args.jsd_mode)


def cmd_score(ctx: Context) -> int:
    records = select_records(ctx.args, load_benchmark(ctx.args.benchmark))
    names = strategies(ctx.args, records)
    scorer = _scorer(ctx, records, names)
    rows = []
    for r in records:
        for s in names:
            row = {"qid": r.qid, "strategy": s}
            if s not in r.partitions:
                row["skipped"] = "strategy missing"
            else:
                p = r.partitions[s]
                if not p.serendipity_set or not p.exact_matches:
                    row["skipped"] = "empty " + ("serendipity" if not p.serendipity_set else "existing") + " set"
                else:
                    try:
                        row.update(scorer.report(AnswerPartition(p.exact_matches, p.serendipity_set)).to_json())
                    except (NotFoundError, DomainError) as exc:
                        row["skipped"] = str(exc)
            rows.append(row)
    _dump(rows, ctx.out / "scores.json")
    for row in rows:
        if "skipped" in row:
            print(f"qid {row['qid']} {row['strategy']}: skipped ({row['skipped']})")
        else:
            print(f"qid {row['qid']} {row['strategy']}: R={row['R']:.6f} N={row['N']:.6f} "
                  f"S={row['S']:.6f} RNS={row['rns']:.6f}")
    return 0


def _load_ranking(path) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return {int(q): v for q, v in data.items()}


def cmd_partition(ctx: Context) -> int:
    records = select_records(ctx.args, load_benchmark(ctx.args.benchmark))
    scorer = _scorer(ctx, records, [])
    ranking = _load_ranking(ctx.args.ranking)
    results = {}
    trace_dir = ctx.out / "swap_traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    for r in records:
        cands = [a for a in r.answers if a in ctx.graph]
        if len(cands) < 2:
            results[str(r.qid)] = {"skipped": f"{len(cands)} candidate(s) in the graph; need at least 2"}
            continue
        b = budget(len(cands))
        scores = ranking.get(r.qid)
        init = initial_partition(cands, b, "ranked" if scores else "suffix", scores)
        state = greedy_swap(init, scorer)
        results[str(r.qid)] = {
            "budget": b, "init": "ranked" if scores else "suffix",
            "initial": init.to_json(), "existing": list(state.partition.existing),
            "serendipity": list(state.partition.serendipity), "tau": state.tau,
            "swaps": state.iterations, "components": scorer.report(state.partition).to_json(r.qid),
        }
        with open(trace_dir / f"{r.qid}.jsonl", "w", encoding="utf-8") as fh:
            for step in state.trace:
                fh.write(json.dumps(step, sort_keys=True) + "\n")
        print(f"qid {r.qid}: b={b} swaps={state.iterations} tau={state.tau:.6f} "
              f"serendipity={','.join(state.partition.serendipity)}")
    _dump(results, ctx.out / "partitions.json")
    return 0


def _policy(args):
    if args.policy_url:
        return ExternalPolicy(args.policy_url, timeout=args.policy_timeout, retries=args.policy_retries)
    return HeuristicPolicy(args.seed)


def cmd_explore(ctx: Context) -> int:
    args = ctx.args
    records = select_records(args, load_benchmark(args.benchmark))
    names = strategies(args, records)
    params = BeamParams(n=args.beam_width, m=args.max_relations, k=args.top_k, h=args.depth,
                        context_mode=args.context, seed=args.seed)
    scorer = EdgeScorer(ctx.graph)
    jobs = [(r, s) for r in records for s in names if s in r.partitions]

    def run(job):
        r, s = job
        roots = [x for x in r.partitions[s].exact_matches]
        out = {"qid": r.qid, "strategy": s, "traces": [], "errors": []}
        for root in roots:
            if root not in ctx.graph:
                out["errors"].append(f"root {root} is not in the graph")
                continue
            try:
                trace = beam_explore(ctx.graph, _policy(args), params, root, r.question, scorer)
                out["traces"].append(trace.to_json())
            except ExplorationError as exc:
                out["errors"].append(str(exc))
                if exc.trace is not None:
                    out["traces"].append({**exc.trace.to_json(), "partial": True})
        return out

    for res in _jobs(args, run, jobs):
        _dump(res, ctx.out / "traces" / f"{res['qid']}-{res['strategy']}.json")
        leaves = sorted({leaf["id"] for t in res["traces"] for leaf in t["leaves"]})
        print(f"qid {res['qid']} {res['strategy']}: {len(res['traces'])} trace(s), "
              f"{len(leaves)} leaves, {len(res['errors'])} error(s)")
    return 0


def _load_predictions(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    out = {}
    if isinstance(data, dict):
        for q, v in data.items():
            out[int(q)] = (set(v), True) if isinstance(v, list) else (set(v.get("predicted", [])), bool(v.get("executed_ok", True)))
    else:
        for row in data:
            out[int(row["qid"])] = (set(row.get("predicted", [])), bool(row.get("executed_ok", True)))
    return out


def _retrieval(ctx, r: QaRecord, part) -> evalkit.RetrievalResult:
    """Execute the record's pattern on the graph with the serendipity answers hidden."""
    try:
        q = PatternQuery.from_json(r.graph_query, r.pattern_type)
        g, _ = split_graph(ctx.graph, q, part.exact_matches, part.serendipity_set)
        return evalkit.RetrievalResult(r.qid, execute_pattern(g, q).ids, True, r.pattern_type)
    except (UnsupportedPatternError, InfeasibleSplitError, ValidationError, KeyError, TypeError) as exc:
        log.info("qid %s: pattern execution failed: %s", r.qid, exc)
        return evalkit.RetrievalResult(r.qid, (), False, r.pattern_type)


def _trace_metrics(ctx, r: QaRecord, s: str, part) -> dict:
    path = Path(ctx.args.traces or ctx.out / "traces") / f"{r.qid}-{s}.json"
    if not path.exists() or not part.serendipity_set:
        return {}
    data = json.loads(path.read_text(encoding="utf-8"))
    traces = [t for t in data.get("traces", []) if not t.get("partial")]
    if not traces:
        return {}
    summaries = [txt for t in traces for _, txt in sorted(t["summaries"].items())]
    leaves = [leaf for t in traces for leaf in t["leaves"]]
    out = {"seren_hit": evalkit.seren_hit(leaves, part.serendipity_set)}
    try:
        out["type_match"] = evalkit.type_match(leaves, part.serendipity_set, ctx.graph)
    except NotFoundError:
        pass
    if part.explore_paths:
        out["seren_cov"] = evalkit.seren_cov(summaries, part.explore_paths)
    return out


def cmd_eval(ctx: Context) -> int:
    args = ctx.args
    records = select_records(args, load_benchmark(args.benchmark))
    names = strategies(args, records)
    predictions = _load_predictions(args.predictions) if args.predictions else None
    values: dict = {}  # strategy -> metric -> qid -> value
    executability = {}
    for s in names:
        per = values.setdefault(s, {})
        results = []
        for r in records:
            part = r.partitions.get(s)
            if part is None:
                continue
            truth = set(part.exact_matches)
            if predictions is not None:
                pred, ok = predictions.get(r.qid, (set(), False))
                res = evalkit.RetrievalResult(r.qid, pred if ok else (), ok, r.pattern_type)
            elif r.graph_query:
                res = _retrieval(ctx, r, part)
            else:
                res = None
            if res is not None:
                results.append(res)
                if truth and res.executed_ok:
                    per.setdefault("hit", {})[r.qid] = evalkit.hit_rate(res.predicted, truth)
                    per.setdefault("f1", {})[r.qid] = evalkit.f1(res.predicted, truth)
                elif truth:
                    per.setdefault("hit", {})[r.qid] = None
                    per.setdefault("f1", {})[r.qid] = None
            for metric, v in _trace_metrics(ctx, r, s, part).items():
                per.setdefault(metric, {})[r.qid] = v
        if results:
            executability[s] = evalkit.executability(results)
    report = {"strategies": {}, "executability": executability, "pearson": {}}
    rows = []
    metrics = sorted({m for per in values.values() for m in per})
    for s in names:
        report["strategies"][s] = {}
        for m, vals in sorted(values[s].items()):
            try:
                report["strategies"][s][m] = evalkit.aggregate(vals).to_json()
            except DomainError:
                report["strategies"][s][m] = {"per_record": {}, "mean": None, "count": 0,
                                              "skipped": len(vals)}
            for q, v in sorted(vals.items()):
                rows.append({"strategy": s, "qid": q, "metric": m, "value": v})
    for m in metrics:
        series = {s: values[s].get(m, {}) for s in names}
        report["pearson"][m] = evalkit.pearson_matrix(series)
    if args.format in ("json", "both"):
        evalkit.write_json_report(report, ctx.out / "report.json")
    if args.format in ("csv", "both"):
        evalkit.write_csv_report(rows, ctx.out / "report.csv")
    for s in names:
        parts = [f"{m}={v['mean']:.4f}" for m, v in sorted(report["strategies"][s].items())
                 if v["mean"] is not None]
        print(f"{s}: " + (" ".join(parts) or "no rational samples"))
    return 0


def cmd_calibrate(ctx: Context) -> int:
    records = select_records(ctx.args, load_benchmark(ctx.args.benchmark))
    scorer = _scorer(ctx, records, [ctx.args.reference])
    w = calibrate_weights(records, ctx.args.reference, scorer.pk, scorer.m, scorer.t,
                          mode=ctx.args.jsd_mode, scorer_factory=lambda: scorer)
    _dump(w.to_json(), ctx.out / "weights.json")
    print(f"{w.alpha!r},{w.beta!r},{w.gamma!r}")
    return 0


# --------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--graph", required=True, help="edge file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--k", type=int, default=3, help="hops in the conditional model")
    common.add_argument("--damping", type=float, default=0.85)
    common.add_argument("--epsilon", type=float, default=1e-10)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--strict", action="store_true", help="fail on stale caches instead of rebuilding")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("-v", "--verbose", action="store_true")

    bench = argparse.ArgumentParser(add_help=False)
    bench.add_argument("--benchmark", required=True, help="benchmark JSON")
    bench.add_argument("--qid", type=int, action="append", help="restrict to this qid (repeatable)")
    bench.add_argument("--strategy", default="sscore", help="partition strategy, comma list, or 'all'")

    rns = argparse.ArgumentParser(add_help=False)
    rns.add_argument("--embeddings", help="embedding file")
    rns.add_argument("--fallback-embeddings", action="store_true",
                     help="generate propagation embeddings when coverage is missing")
    rns.add_argument("--weights", default="1,1,1", help="alpha,beta,gamma (normalised)")
    rns.add_argument("--jsd-mode", choices=("own", "shared"), default="own")

    p = argparse.ArgumentParser(prog="serenqa", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="build probability-model caches")
    sub.add_parser("score", parents=[common, bench, rns], help="score benchmark partitions")
    sp = sub.add_parser("partition", parents=[common, bench, rns], help="optimise partitions by greedy swap")
    sp.add_argument("--ranking", help="JSON {qid: {id: score}} for ranked initialisation")
    se = sub.add_parser("explore", parents=[common, bench], help="beam exploration from existing answers")
    se.add_argument("--beam-width", type=int, default=30)
    se.add_argument("--depth", type=int, default=3)
    se.add_argument("--max-relations", type=int, default=3)
    se.add_argument("--top-k", type=int, default=10)
    se.add_argument("--context", choices=("with", "without"), default="with")
    se.add_argument("--policy-url")
    se.add_argument("--policy-timeout", type=float, default=30.0)
    se.add_argument("--policy-retries", type=int, default=2)
    sv = sub.add_parser("eval", parents=[common, bench], help="compute metrics and reports")
    sv.add_argument("--predictions", help="retrieval predictions JSON")
    sv.add_argument("--traces", help="trace directory (default: <out>/traces)")
    sv.add_argument("--format", choices=("json", "csv", "both"), default="both")
    sc = sub.add_parser("calibrate", parents=[common, bench, rns], help="fit RNS weights to a reference strategy")
    sc.add_argument("--reference", default="expert")
    return p


COMMANDS = {"build": cmd_build, "score": cmd_score, "partition": cmd_partition,
            "explore": cmd_explore, "eval": cmd_eval, "calibrate": cmd_calibrate}


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers < 1:
            raise DomainError("--workers must be >= 1")
        graph = load_edges(args.graph)
        ctx = Context(args, graph, content_hash(args.graph))
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](ctx)
    except (SerenQAError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
