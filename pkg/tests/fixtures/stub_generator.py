#!/usr/bin/env python3
"""Minimal external generator used by the wire-protocol tests.

Serves GEN requests on stdin/stdout. Modes select failure behaviors:

    fixed       (default) echo a small valid program built on the header
    unbalanced  emit unbalanced braces well past the word cap
    err         answer every request with an ERR frame
    exit1       exit 1 before answering
    garbage     emit a malformed frame
    slow        stall long enough to trip the request timeout
"""

import argparse
import base64
import sys
import time


def respond(payload: str):
    data = payload.encode("utf-8")
    sys.stdout.write(f"PROG {len(data)}\n")
    sys.stdout.flush()
    sys.stdout.buffer.write(data)
    sys.stdout.buffer.flush()


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--mode", default="fixed")
    args = parser.parse_args()

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "GEN" or len(parts) != 4:
            sys.stdout.write("ERR malformed request\n")
            sys.stdout.flush()
            continue
        max_words = int(parts[1])
        header = base64.b64decode(parts[3]).decode("utf-8")

        if args.mode == "exit1":
            sys.exit(1)
        if args.mode == "err":
            sys.stdout.write("ERR stub refuses to generate\n")
            sys.stdout.flush()
            continue
        if args.mode == "garbage":
            sys.stdout.write("BOGUS frame here\n")
            sys.stdout.flush()
            continue
        if args.mode == "slow":
            time.sleep(120)
            continue
        if args.mode == "unbalanced":
            body = " ".join(["{ var x ="] * (max_words + 50))
            respond(header + "\n" + body)
            continue
        closer = "};" if header.lstrip().startswith("var ") else "}"
        respond(header + "\n  var n = 41;\n  return n + 1;\n" + closer + "\n")


if __name__ == "__main__":
    main()
