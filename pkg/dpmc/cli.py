"""
Command-line frontend.

    dpmc design.btor2 [--mode prop-on|prop-off] [--witness] [--stats-json] ...

Standard output carries the verdict line, then the witness and the
statistics record when requested. Diagnostics go to standard error.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .abstraction import dp_abstract
from .btor2 import read_btor2
from .cegar import CheckResult, Verdict, dp_ic3
from .config import load_config
from .errors import ConfigError, ParseError, TooLarge, UnsupportedFeature
from .ir import ConcreteTrace, TransitionSystem
from .oracle import CounterModel, Reachable, bfs_reachability, bv_valid_exhaustive
from .rules import validate_rules

logger = logging.getLogger(__name__)

EXIT_CODES = {Verdict.SAFE: 0, Verdict.UNSAFE: 1, Verdict.UNKNOWN: 2}
EXIT_INPUT_ERROR = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpmc", description="Word-level safety model checking with datapath propagation"
    )
    parser.add_argument("input", type=str, help="BTOR2 design file")
    parser.add_argument("--config", type=str, help="YAML configuration file")
    parser.add_argument(
        "--mode", type=str, choices=["prop-on", "prop-off"], help="Datapath propagation on or off"
    )
    parser.add_argument("--prop-bound", type=int, help="Propagation iteration bound")
    parser.add_argument("--max-frames", type=int, help="IC3 frame budget")
    parser.add_argument("--max-refinements", type=int, help="Refinement budget")
    parser.add_argument("--dump-lemmas", type=str, metavar="PATH", help="Write lemmas to PATH")
    parser.add_argument(
        "--dump-queries", type=str, metavar="DIR", help="Write every solver query as SMT-LIB2"
    )
    parser.add_argument("--witness", action="store_true", help="Print a witness for UNSAFE")
    parser.add_argument("--stats-json", action="store_true", help="Print a JSON statistics line")
    parser.add_argument(
        "--oracle-check", action="store_true", help="Cross-check the verdict by explicit search"
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def _overrides(args: argparse.Namespace) -> Dict:
    engine, propagation, solver = {}, {}, {}
    if args.mode:
        engine["mode"] = args.mode
    if args.max_frames is not None:
        engine["max_frames"] = args.max_frames
    if args.max_refinements is not None:
        engine["max_refinements"] = args.max_refinements
    if args.prop_bound is not None:
        propagation["bound"] = args.prop_bound
    if args.dump_queries:
        solver["dump_queries"] = args.dump_queries
    return {"engine": engine, "propagation": propagation, "solver": solver}


def _setup_logging(level_name: str, verbose: int):
    level = getattr(logging, str(level_name).upper(), logging.WARNING)
    if verbose == 1:
        level = min(level, logging.INFO)
    elif verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def format_witness(ts: TransitionSystem, witness: ConcreteTrace) -> List[str]:
    """BTOR2-witness-style listing: state part #k, input part @k, binary values."""
    lines = ["sat", "b0"]
    for step in range(witness.length + 1):
        lines.append(f"#{step}")
        for i, v in enumerate(ts.state_vars):
            lines.append(f"{i} {witness.states[step][v]:0{v.width}b} {v.name}@{step}")
        lines.append(f"@{step}")
        for i, v in enumerate(ts.input_vars):
            lines.append(f"{i} {witness.inputs[step][v]:0{v.width}b} {v.name}@{step}")
    lines.append(".")
    return lines


def _oracle_agrees(ts: TransitionSystem, result: CheckResult, oracle: Dict) -> bool:
    """Verdict against explicit search, rules and DPLs against exhaustive validity."""
    failures = validate_rules(widths=oracle["rule_widths"])
    if failures:
        logger.error(f"Rules without bit-level validity: {sorted(failures)}")
        return False
    amap = dp_abstract(ts).amap
    for lemma in result.lemmas.dpl:
        try:
            verdict = bv_valid_exhaustive(amap.gamma(lemma), max_bits=oracle["max_bits"])
        except TooLarge:
            logger.warning(f"DPL too wide for exhaustive check: {lemma!r}")
            continue
        if isinstance(verdict, CounterModel):
            logger.error(f"DPL {lemma!r} fails at {verdict}")
            return False
    if result.verdict is Verdict.UNKNOWN:
        return True
    expected = isinstance(bfs_reachability(ts, oracle["bfs_max_bits"]), Reachable)
    return expected == (result.verdict is Verdict.UNSAFE)


def run(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    _setup_logging(config["logging"]["level"], args.verbose)

    ts = read_btor2(args.input)
    if args.oracle_check:
        bits = ts.state_bits + ts.input_bits
        if bits > config["oracle"]["bfs_max_bits"]:
            raise TooLarge(bits, config["oracle"]["bfs_max_bits"])

    start = time.perf_counter()
    result = dp_ic3(ts, config)
    wall_ms = (time.perf_counter() - start) * 1000.0

    verdict = result.verdict
    if args.oracle_check and not _oracle_agrees(ts, result, config["oracle"]):
        logger.error(f"Oracle check failed, reporting UNKNOWN instead of {verdict.value}")
        verdict = Verdict.UNKNOWN

    print(verdict.value)
    if args.witness and verdict is Verdict.UNSAFE:
        print("\n".join(format_witness(ts, result.witness)))
    if args.stats_json:
        record = result.record()
        record["verdict"] = verdict.value
        record["wall_ms"] = round(wall_ms, 3)
        print(json.dumps(record, sort_keys=True))
    if args.dump_lemmas:
        lines = result.lemmas.dump_lines()
        Path(args.dump_lemmas).write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")
        logger.info(f"Wrote {len(lines)} lemma(s) to {args.dump_lemmas}")
    return EXIT_CODES[verdict]


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (ParseError, UnsupportedFeature, ConfigError, TooLarge, OSError) as e:
        print(f"dpmc: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
