"""Command line entry point: answer a request file with a local model."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .session import ProbeSession, load_prefix_map, read_requests, write_responses

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probe")
    parser.add_argument("--model", required=True,
                        help="model identifier or local model directory")
    parser.add_argument("--requests", required=True, help="request JSONL file")
    parser.add_argument("--out", required=True, help="response JSONL file")
    parser.add_argument("--prefix-map",
                        help="JSONL mapping case_id to its update sentence; "
                             "prompts are prefixed with the sentence + '. '")
    parser.add_argument("--max-new-tokens", type=int, default=100)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    session = ProbeSession(args.model, device=args.device,
                           max_new_tokens=args.max_new_tokens,
                           batch_size=args.batch_size).load()
    requests = read_requests(args.requests)
    prefix_map = load_prefix_map(args.prefix_map) if args.prefix_map else None
    responses = session.run(requests, prefix_map)
    count = write_responses(args.out, responses)
    logger.info("answered %d requests with %s", count, args.model)
    return 0


if __name__ == "__main__":
    sys.exit(main())
