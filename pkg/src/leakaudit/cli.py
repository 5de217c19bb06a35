"""``leakaudit`` command line: validate -> index -> dedup -> group -> split -> audit -> ablate -> eval."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import LeakauditError
from .io import atomic_write_bytes, atomic_write_text, sha256_file

logger = logging.getLogger("leakaudit")

EXIT_OK, EXIT_INTEGRITY, EXIT_USAGE = 0, 1, 2

_INPUT_FLAGS = ("manifest", "index", "pairs", "groups", "splits", "sim", "subset", "file")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_validate(args) -> int:
    from .manifest import validate_manifest

    count, errors = validate_manifest(args.manifest)
    print(f"{count} records")
    for err in errors:
        print(f"error: {err}")
    return EXIT_OK if not errors else EXIT_INTEGRITY


def cmd_probe(args) -> int:
    from .audio import probe

    info = probe(args.file)
    print(f"duration_s: {info.duration_s:.3f}")
    print(f"channels: {info.channels}")
    print(f"sample_rate: {info.sample_rate}")
    print(f"bits: {info.bits}")
    return EXIT_OK


def cmd_index(args) -> int:
    from .fingerprint import build_index, index_to_bytes
    from .manifest import parse_manifest

    catalog = parse_manifest(args.manifest)
    index = build_index(catalog, threads=args.threads)
    atomic_write_bytes(args.out, index_to_bytes(index))
    print(f"indexed {len(index)} of {len(catalog)} recordings ({index.n_postings} landmarks)")
    for rid, why in index.skipped:
        print(f"skipped {rid}: {why}")
    return EXIT_OK


def cmd_dedup(args) -> int:
    from .fingerprint import load_index
    from .manifest import parse_manifest
    from .matcher import dump_pairs, find_duplicates

    catalog = parse_manifest(args.manifest)
    index = load_index(args.index)
    pairs = find_duplicates(index, catalog, args.min_score, args.min_coverage, threads=args.threads)
    atomic_write_text(args.out, dump_pairs(pairs))
    print(f"{len(pairs)} duplicate pairs")
    return EXIT_OK


def _read_pairs(path):
    from .matcher import parse_pairs

    return parse_pairs(Path(path).read_text(encoding="utf-8"))


def cmd_group(args) -> int:
    from .grouping import groups_from_pairs, merge_group_sources, session_groups, session_stats
    from .manifest import parse_manifest

    catalog = parse_manifest(args.manifest)
    groups = groups_from_pairs(catalog, _read_pairs(args.pairs))
    if args.mode == "group-filtered":
        sessions = session_groups(catalog)
        for key, value in session_stats(sessions).items():
            print(f"{key}: {value}")
        groups = merge_group_sources(groups, sessions, catalog)
    atomic_write_text(args.out, groups.to_json())
    print(f"{len(groups)} groups ({len(groups.non_singleton())} with more than one member)")
    return EXIT_OK


def cmd_split(args) -> int:
    from .grouping import GroupAssignment
    from .manifest import parse_manifest
    from .splitter import SplitSpec, split_groups

    catalog = parse_manifest(args.manifest)
    groups = GroupAssignment.from_json(Path(args.groups).read_text(encoding="utf-8"))
    split = split_groups(catalog, groups, SplitSpec(seed=args.seed))
    atomic_write_text(args.out, split.to_csv())
    print(" ".join(f"{k}={v}" for k, v in split.sizes().items()))
    return EXIT_OK


def _read_split(path):
    from .splitter import SplitAssignment

    return SplitAssignment.from_csv(Path(path).read_text(encoding="utf-8"))


def cmd_audit(args) -> int:
    from .grouping import GroupAssignment
    from .manifest import parse_manifest
    from .splitter import audit_leakage

    split = _read_split(args.splits)
    catalog = parse_manifest(args.manifest) if args.manifest else None
    groups = GroupAssignment.from_json(Path(args.groups).read_text(encoding="utf-8")) if args.groups else None
    report = audit_leakage(split, _read_pairs(args.pairs), groups, catalog)
    atomic_write_text(args.report, _json(report.to_dict()))
    print(f"cross_split_pairs: {report.cross_split_pairs}")
    print(f"duplicates_in_eval: {len(report.duplicates_in_eval)} (test: {report.duplicates_in_test})")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .splitter import Split, deduplicated_train, random_reduced_train

    split = _read_split(args.splits)
    pairs = _read_pairs(args.pairs)
    n_train = len(split.ids(Split.TRAIN))
    dedup = deduplicated_train(split, pairs)
    if args.mode == "dedup":
        subset = dedup
    else:
        n_remove = args.n_remove if args.n_remove is not None else n_train - len(dedup)
        subset = random_reduced_train(split, n_remove, args.seed)
    atomic_write_text(args.out, "".join(f"{rid}\n" for rid in subset))
    print(f"removed {n_train - len(subset)} of {n_train} training items")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .retrieval import full_report, load_similarity, subset_report

    sim = load_similarity(args.sim)
    try:
        ks = [int(k) for k in args.k.split(",") if k.strip()]
    except ValueError:
        raise ValueError(f"--k expects a comma-separated list of integers, got {args.k!r}") from None
    reports = [full_report(sim, ks)]
    if args.subset:
        ids = [line.strip() for line in Path(args.subset).read_text(encoding="utf-8").splitlines() if line.strip()]
        reports.append(subset_report(sim, ids, ks, name=Path(args.subset).stem))
    out = {r.subset_name if i else "full": r.to_dict() for i, r in enumerate(reports)}
    atomic_write_text(args.out, _json(out))
    for r in reports:
        vals = "  ".join(f"R@{k}={v:.1f}" for k, v in sorted(r.recall_at.items()))
        print(f"{r.subset_name} (n={r.n_queries}): {vals}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads for index/dedup")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--log-level", default=argparse.SUPPRESS,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    ap = argparse.ArgumentParser(prog="leakaudit", description="Audio dataset duplicate and leakage audit toolkit.")
    ap.add_argument("--version", action="version", version=f"leakaudit {__version__}")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("validate", parents=[common], help="check a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("probe", parents=[common], help="print WAV duration, channels and rate")
    p.add_argument("file")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("index", parents=[common], help="fingerprint a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("dedup", parents=[common], help="find duplicate pairs")
    p.add_argument("--index", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-score", type=int, default=25)
    p.add_argument("--min-coverage", type=float, default=0.5)
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("group", parents=[common], help="build duplicate / session groups")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--mode", choices=["clean", "group-filtered"], default="clean")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("split", parents=[common], help="stratified group-atomic split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("audit", parents=[common], help="count duplicate pairs crossing train/eval")
    p.add_argument("--splits", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--manifest", help="adds per-category distributions")
    p.add_argument("--groups", help="adds a group atomicity check")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("ablate", parents=[common], help="deduplicated or randomly reduced training set")
    p.add_argument("--splits", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--mode", choices=["dedup", "random"], required=True)
    p.add_argument("--n-remove", type=int, help="random mode; defaults to the dedup removal count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", parents=[common], help="recall@k from a similarity matrix")
    p.add_argument("--sim", required=True)
    p.add_argument("--subset", help="file with one query id per line")
    p.add_argument("--k", default="1,5,10")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return ap


def _log_provenance(args) -> None:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    logger.info("leakaudit %s %s", __version__, json.dumps(flags, default=str, sort_keys=True))
    for name in _INPUT_FLAGS:
        path = getattr(args, name, None)
        if path and Path(path).is_file():
            logger.info("input %s=%s sha256=%s", name, path, sha256_file(path))


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    _log_provenance(args)
    try:
        return args.func(args)
    except LeakauditError as e:
        print(f"leakaudit {args.command}: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except OSError as e:
        print(f"leakaudit {args.command}: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except ValueError as e:
        print(f"leakaudit {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
