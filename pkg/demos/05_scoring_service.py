"""
Batch scoring and the line-protocol service
===========================================

Scoring speaks newline-delimited JSON: one record in, one reply out, with
malformed lines reported in place rather than aborting the batch.  The TCP
service wraps the same scoring function, so both paths produce identical
replies; this script runs a small corpus through each and diffs them.
"""

import json
import socket
import threading

from entrl import RewardConfig, RewardService, score_lines, summarize

records = [
    {"id": "r0", "response": "<think> ok </think> munich",
     "gold_aliases": ["München", "Munich"], "ref_lengths": [6]},
    {"id": "r1", "response": "<think> unsure </think> berlin",
     "gold_aliases": ["München", "Munich"], "refs": ["Munich"]},
    {"id": "r2", "response": "no think block munich",
     "gold_aliases": ["München", "Munich"], "ref_lengths": [6]},
    {"id": "r3", "response": "<think> pad </think> munich " + "x" * 40,
     "gold_aliases": ["München", "Munich"], "ref_lengths": [6]},
]
lines = [json.dumps(r, ensure_ascii=False).encode() + b"\n" for r in records]
config = RewardConfig()

# Library path.
replies, breakdowns = score_lines(lines, config)
print("batch replies:")
for reply in replies:
    print(" ", reply)
print("summary:", summarize(breakdowns).to_dict())

# Service path: same records over a real socket.
server = RewardService(("127.0.0.1", 0), config)
thread = threading.Thread(target=server.serve_forever, daemon=True)
thread.start()
try:
    with socket.create_connection(server.server_address, timeout=10) as sock:
        with sock.makefile("rwb") as f:
            f.writelines(lines)
            f.flush()
            sock.shutdown(socket.SHUT_WR)
            served = [json.loads(reply) for reply in f]
finally:
    server.shutdown()
    server.server_close()

print("\nservice replies match batch replies:", served == replies)
