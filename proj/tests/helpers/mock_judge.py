#!/usr/bin/env python3
"""Judge protocol stub: verdict keyed off the candidate string."""
import json
import sys

MODE = sys.argv[1] if len(sys.argv) > 1 else "ok"

for line in sys.stdin:
    if not line.strip():
        continue
    if MODE == "malformed":
        sys.stdout.write("garbage\n")
        sys.stdout.flush()
        continue
    req = json.loads(line)
    better = "0|" in req["candidate"]  # prefer template-0 candidates
    payload = {
        "judgment": "BETTER" if better else "NOT_BETTER",
        "confidence_score": 0.9 if better else 0.2,
    }
    sys.stdout.write(json.dumps(payload) + "\n")
    sys.stdout.flush()
