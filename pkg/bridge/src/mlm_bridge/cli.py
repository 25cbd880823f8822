"""``mlm-bridge`` command line: serve the wire protocol or dump the vocabulary."""

from __future__ import annotations

import argparse
import sys

from .bridge import BridgeConfig, serve
from .vocab import vocab_dump


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlm-bridge",
        description="Masked-LM scorer process speaking the JSON-lines protocol on stdio.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="answer hello + score requests on stdio")
    p_serve.add_argument("--model", required=True, help="model id or local checkpoint path")
    p_serve.add_argument("--device", default="cpu")
    p_serve.add_argument("--batch-size", type=int, default=8)
    p_serve.add_argument("--scorer-id", default=None, help="override the advertised scorer name")

    p_vocab = sub.add_parser("vocab-dump", help="write single-token surface forms to stdout")
    p_vocab.add_argument("--model", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "vocab-dump":
        try:
            vocab_dump(args.model)
        except Exception as exc:
            print(f"error: cannot load tokenizer: {exc}", file=sys.stderr)
            return 1
        return 0
    try:
        cfg = BridgeConfig(
            model=args.model,
            device=args.device,
            batch_size=args.batch_size,
            scorer_id=args.scorer_id,
        )
        return serve(cfg)
    except Exception as exc:
        # load failures must exit nonzero before the handshake is answered
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
