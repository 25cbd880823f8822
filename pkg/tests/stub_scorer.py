#!/usr/bin/env python3
"""Wire-protocol stub used by the transport tests.

Speaks the JSON-lines scorer protocol on stdio: answers the hello handshake,
then one response per request, optionally out of order, slow, or failing,
depending on the flags. Runs standalone; must not import the package under
test.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path


def respond(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def score(req: dict, args: argparse.Namespace) -> dict:
    candidates = req.get("candidates", [])
    if args.oov_form and args.oov_form in candidates:
        return {
            "id": req["id"],
            "error": {"kind": "oov", "detail": f"form {args.oov_form!r} not a single token"},
        }
    if args.internal_error_form and args.internal_error_form in candidates:
        return {"id": req["id"], "error": {"kind": "internal", "detail": "induced failure"}}
    if args.bad_response:
        return {"id": req["id"], "logprobs": "not-a-list"}
    return {"id": req["id"], "logprobs": [math.log(args.p_correct), math.log(args.p_wrong)]}


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--name", default="stub")
    ap.add_argument("--p-correct", type=float, default=0.9)
    ap.add_argument("--p-wrong", type=float, default=0.1)
    ap.add_argument("--oov-form", default=None)
    ap.add_argument("--internal-error-form", default=None)
    ap.add_argument("--bad-response", action="store_true")
    ap.add_argument("--window", type=int, default=1, help="answer requests in reversed chunks of this size")
    ap.add_argument("--fail-after", type=int, default=None, help="exit abruptly after this many score responses")
    ap.add_argument("--log", default=None, help="append scored ids to this file")
    ap.add_argument("--slow-once", default=None, help="flag file: sleep once on the first score request ever")
    ap.add_argument("--sleep-s", type=float, default=5.0)
    ap.add_argument("--steps", type=int, default=None)
    ap.add_argument("--fail-steps", type=int, default=None, help="exit immediately when --steps matches")
    args = ap.parse_args()

    if args.fail_steps is not None and args.steps == args.fail_steps:
        return 3

    buffered: list[dict] = []
    answered = 0

    def flush() -> None:
        nonlocal answered
        for req in reversed(buffered):
            respond(score(req, args))
            answered += 1
            if args.fail_after is not None and answered >= args.fail_after:
                raise SystemExit(9)
        buffered.clear()

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        if req.get("op") == "hello":
            respond({"name": args.name, "deterministic": True, "mask_token": "[MASK]"})
            continue
        if args.slow_once:
            flag = Path(args.slow_once)
            if not flag.exists():
                flag.write_text("seen")
                time.sleep(args.sleep_s)
        if args.log:
            with open(args.log, "a", encoding="utf-8") as fh:
                fh.write(req["id"] + "\n")
        buffered.append(req)
        if len(buffered) >= args.window:
            flush()
    flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
