"""Command line for the attention probe: run a spec, emit stats JSON."""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from .probe import ProbeError, ProbeSpec, direction_summary, emit, probe

_NAMED = {"LF": "\n", "CR": "\r", "CRLF": "\r\n", "BACKSLASH": "\\", "SPACE": " ", "TAB": "\t"}


def _symbol(text: str) -> str:
    return _NAMED.get(text.upper(), text)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sepseq-probe", description=__doc__)
    parser.add_argument("--model", required=True, help="local path or hub id of a causal LM")
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--seq-len", dest="seq_len", type=int, default=20)
    parser.add_argument("--segment", type=int, default=8)
    parser.add_argument("--separator", default="LF", help="LF, CR, CRLF, BACKSLASH, or literal text")
    parser.add_argument("--delimiter", default="SPACE", help="SPACE, TAB, or literal text")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="stats JSON output path")
    args = parser.parse_args(argv)

    try:
        spec = ProbeSpec(
            model=args.model,
            trials=args.trials,
            sequence_length=args.seq_len,
            segment_size=args.segment,
            separator_text=_symbol(args.separator),
            delimiter_text=_symbol(args.delimiter),
            seed=args.seed,
        )
        stats = probe(spec)
        path = emit(stats, args.out)
    except ProbeError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps({"stats": str(path), **direction_summary(stats)}))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
