"""Command-line entry point: train, generate, eval, sweep, inspect, convergence."""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path

from . import corpus as corpus_io
from .generate import CannotSeedError, GenParams, batch_generate
from .metrics import MetricError, evaluate, read_embeddings
from .midi import MidiError, write_smf
from .oracle import convergence_experiment, parse_source_spec, write_convergence_csv
from .spa import SpaError, LzTree, deserialize_model, serialize_model, tree_stats
from .tokens import PianoRollConfig, decode_tokens
from .tuner import SearchSpace, run_search, summary

log = logging.getLogger("lzmelody")

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_IO = 4
EXIT_GENERATION = 5


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


# -- atomic output helpers ------------------------------------------------------

def atomic_write(path: Path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@contextmanager
def staged_dir(final: Path):
    """Build a directory's contents in a sibling temp dir and swap it in at the end."""
    final = Path(final)
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=final.parent, prefix=f".{final.name}."))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if final.exists():
        for item in tmp.iterdir():
            os.replace(item, final / item.name)
        tmp.rmdir()
    else:
        os.replace(tmp, final)


def read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from exc


def load_corpus(path) -> corpus_io.TokenCorpus:
    try:
        return corpus_io.read_corpus(read_bytes(path))
    except corpus_io.CorpusFormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_FORMAT) from exc


def load_model(path) -> LzTree:
    try:
        return deserialize_model(read_bytes(path))
    except SpaError as exc:
        raise CliError(f"{path}: {exc}", EXIT_FORMAT) from exc


def emit(obj) -> None:
    print(json.dumps(obj, indent=2))


# -- subcommands ------------------------------------------------------------------

def cmd_train(args) -> int:
    data = load_corpus(args.corpus)
    rows = data.tokens if args.limit is None else data.tokens[:args.limit]
    tree = LzTree(data.alphabet_size)
    t0 = time.perf_counter()
    for row in rows:
        tree.train_on_sequence(row)
    tree.freeze()
    blob = serialize_model(tree)
    atomic_write(args.out, blob)
    stats = tree_stats(tree).to_dict()
    stats["wall_time_s"] = time.perf_counter() - t0
    stats["serialized_bytes"] = len(blob)
    stats.pop("depth_histogram")
    emit(stats)
    return 0


def cmd_generate(args) -> int:
    if args.num < 0:
        raise CliError("--num must be >= 0", EXIT_USAGE)
    tree = load_model(args.model)
    params = GenParams(gamma=args.gamma, top_k=args.top_k, temperature=args.temperature,
                       min_context=args.min_context, seq_len=args.len, master_seed=args.seed)
    try:
        params.validate(tree.alphabet_size)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    t0 = time.perf_counter()
    try:
        samples = batch_generate(tree, params, args.num)
    except CannotSeedError as exc:
        raise CliError(str(exc), EXIT_GENERATION) from exc
    elapsed = time.perf_counter() - t0
    out = corpus_io.TokenCorpus.from_sequences(samples, tree.alphabet_size, seq_len=args.len)
    cfg = PianoRollConfig(seq_len=args.len)
    with staged_dir(Path(args.out_dir)) as tmp:
        (tmp / "generated.lztk").write_bytes(corpus_io.write_corpus(out))
        if args.text:
            (tmp / "generated.txt").write_text(corpus_io.format_text(out))
        if args.midi:
            for i, seq in enumerate(samples):
                (tmp / f"sample_{i:05d}.mid").write_bytes(write_smf(decode_tokens(seq, cfg)))
    emit({"samples": args.num, "total_time_s": elapsed,
          "time_per_sample_s": elapsed / args.num if args.num else 0.0,
          "out_dir": str(args.out_dir)})
    return 0


def cmd_eval(args) -> int:
    gen, ref = load_corpus(args.gen), load_corpus(args.ref)
    if (args.emb_gen is None) != (args.emb_ref is None):
        raise CliError("--emb-gen and --emb-ref must be given together", EXIT_USAGE)
    eg = er = None
    try:
        if args.emb_gen:
            eg = read_embeddings(read_bytes(args.emb_gen).decode(), "generated")
            er = read_embeddings(read_bytes(args.emb_ref).decode(), "reference")
        report = evaluate(gen.tokens, ref.tokens, eg, er, alphabet_size=max(gen.alphabet_size, ref.alphabet_size))
    except (MetricError, ValueError) as exc:
        raise CliError(str(exc), EXIT_FORMAT) from exc
    atomic_write(args.out, report.to_json() + "\n")
    print(report.to_table())
    return 0


def cmd_sweep(args) -> int:
    tree = load_model(args.model)
    ref = load_corpus(args.ref)
    space = SearchSpace()
    try:
        results = run_search(tree, space, ref, args.trials, args.samples, args.seed,
                             min_context=args.min_context, seq_len=args.len)
    except CannotSeedError as exc:
        raise CliError(str(exc), EXIT_GENERATION) from exc
    out = Path(args.out)
    lines = "".join(r.to_json() + "\n" for r in results)
    best = json.dumps(summary(results), indent=2) + "\n"
    summary_path = out.with_name(out.stem + ".best.json")
    atomic_write(out, lines)
    try:
        atomic_write(summary_path, best)
    except BaseException:
        out.unlink(missing_ok=True)
        raise
    print(best, end="")
    return 0


def cmd_inspect(args) -> int:
    tree = load_model(args.model)
    stats = tree_stats(tree).to_dict()
    stats["alphabet_size"] = tree.alphabet_size
    stats.pop("wall_time_s")
    emit(stats)
    return 0


def cmd_convergence(args) -> int:
    try:
        source = parse_source_spec(args.source)
        m_list = [int(m) for m in args.m_list.split(",") if m.strip()]
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad convergence arguments: {exc}", EXIT_USAGE) from exc
    rows = convergence_experiment(source, m_list, args.gamma, seed=args.seed)
    buf = io.StringIO()
    write_convergence_csv(rows, buf)
    atomic_write(args.out, buf.getvalue())
    print(buf.getvalue(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lzmelody", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="build a model from a token corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--limit", type=int)
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("generate", help="sample sequences from a model")
    g.add_argument("--model", required=True)
    g.add_argument("--num", type=int, required=True)
    g.add_argument("--gamma", type=float, default=5e-5)
    g.add_argument("--top-k", type=int, default=8)
    g.add_argument("--temperature", type=float, default=0.8)
    g.add_argument("--min-context", type=int, default=64)
    g.add_argument("--len", type=int, default=256)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)
    g.add_argument("--midi", action="store_true", help="also write one .mid file per sample")
    g.add_argument("--text", action="store_true", help="also write a plain-text token dump")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("eval", help="compare a generated corpus with a reference corpus")
    e.add_argument("--gen", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--emb-gen")
    e.add_argument("--emb-ref")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="random search over gamma / top-k / temperature")
    s.add_argument("--model", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--trials", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--samples", type=int, default=100, help="samples generated per trial")
    s.add_argument("--min-context", type=int, default=64)
    s.add_argument("--len", type=int, default=256)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    i = sub.add_parser("inspect", help="print model statistics")
    i.add_argument("--model", required=True)
    i.set_defaults(func=cmd_inspect)

    c = sub.add_parser("convergence", help="exact KL(P || Q^m) on an enumerable source")
    c.add_argument("--source", required=True,
                   help="e.g. 'iid:0.7,0.3;n=4' or 'markov:0.9,0.1/0.2,0.8;n=4'")
    c.add_argument("--m-list", default="100,1000,10000,100000")
    c.add_argument("--gamma", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (MidiError, SpaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
