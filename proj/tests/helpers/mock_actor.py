#!/usr/bin/env python3
"""Protocol stub for external-actor tests.

Reads one JSON request per line from stdin and answers per role. Modes
(argv[1]) exercise failure paths:
  ok          well-behaved actor (default)
  multi       generator emits two statements in one string
  flaky       responds, then exits (next request needs a restart)
  crash       exits without responding
  malformed   writes a non-JSON line
"""
import json
import sys

MODE = sys.argv[1] if len(sys.argv) > 1 else "ok"


def respond(payload):
    sys.stdout.write(json.dumps(payload) + "\n")
    sys.stdout.flush()


def main():
    for line in sys.stdin:
        if not line.strip():
            continue
        if MODE == "crash":
            sys.exit(3)
        if MODE == "malformed":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        req = json.loads(line)
        role = req["role"]
        if role in ("reducer", "parser", "decomposer"):
            out = {role + "_by": "mock"}
        elif role == "generator":
            out = "SELECT 1; SELECT 2" if MODE == "multi" else "SELECT x, name FROM t"
        elif role == "scaler":
            out = ["SELECT x, name FROM t", "SELECT 999"]
        elif role == "optimizer":
            out = req["candidates"][0]
        elif role == "selector":
            out = 0
        else:
            respond({"error": "unknown role " + role})
            continue
        respond({"output": out, "elapsed_ms": 1})
        if MODE == "flaky":
            sys.exit(0)


if __name__ == "__main__":
    main()
