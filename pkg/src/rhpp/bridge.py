"""Lockstep NDJSON bridge exposing the environment to an external policy.

One JSON object per LF-terminated line. Per episode: Reset, then strictly
alternating Obs -> Act pairs with a Feedback after each executed step, and a
final Metrics message. A malformed Act gets an Error reply and one re-sent
Obs; a second failure aborts the episode.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import socketserver
import sys
import threading

from .policies import OrderPolicy
from .sim import PolicyFailure, observation_cap, run_episode

PROTOCOL_VERSION = 1


class BridgeClosed(PolicyFailure):
    """Transport closed mid-episode."""


def validate_action(orders, n, k):
    """Return None if orders is a list of K permutations of 0..n-1, else
    (code, detail)."""
    if not isinstance(orders, list):
        return ("malformed", "orders must be a list")
    if len(orders) != k:
        return ("wrong_k", f"expected {k} orders, got {len(orders)}")
    for idx, order in enumerate(orders):
        if not isinstance(order, list) or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in order
        ):
            return ("malformed", f"order {idx} must be a list of integers")
        if len(order) != n:
            return ("wrong_n", f"order {idx} has {len(order)} entries, expected {n}")
        seen = set()
        for x in order:
            if x < 0 or x >= n:
                return ("out_of_range", f"order {idx} contains {x}")
            if x in seen:
                return ("duplicate_id", f"order {idx} repeats agent {x}")
            seen.add(x)
        missing = set(range(n)) - seen
        if missing:
            return ("missing_id", f"order {idx} lacks agents {sorted(missing)}")
    return None


class LineTransport:
    """NDJSON over a pair of text streams."""

    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer
        self._lock = threading.Lock()

    def send(self, obj):
        with self._lock:
            self.writer.write(json.dumps(obj, separators=(",", ":")) + "\n")
            self.writer.flush()

    def recv(self):
        line = self.reader.readline()
        if not line:
            return None
        return json.loads(line)


def config_digest(config, map_text):
    payload = json.dumps(dataclasses.asdict(config), sort_keys=True).encode()
    digest = hashlib.sha256()
    digest.update(payload)
    digest.update(map_text.encode())
    return digest.hexdigest()[:16]


class ExternalPolicy(OrderPolicy):
    """Order proposals supplied by a remote process over a LineTransport."""

    def __init__(self, transport, map_text):
        self.transport = transport
        self.map_text = map_text
        self.config = None

    def reset(self, config, grid):
        self.config = config
        self.transport.send(
            {
                "type": "reset",
                "v": PROTOCOL_VERSION,
                "config_digest": config_digest(config, self.map_text),
                "seed": config.seed,
                "n": config.n_agents,
                "k": config.k,
                "r": observation_cap(grid, config.w),
                "map_width": grid.width,
                "map_height": grid.height,
            }
        )

    def propose(self, state, obs, step):
        obs_msg = {"type": "obs", "step": step, "paths": obs.paths}
        for attempt in range(2):
            self.transport.send(obs_msg)
            msg = self.transport.recv()
            if msg is None:
                raise BridgeClosed("transport closed while awaiting act")
            violation = None
            if not isinstance(msg, dict) or msg.get("type") != "act":
                violation = ("malformed", "expected an act message")
            else:
                violation = validate_action(
                    msg.get("orders"), self.config.n_agents, self.config.k
                )
            if violation is None:
                return msg["orders"]
            self.transport.send(
                {"type": "error", "code": violation[0], "detail": violation[1]}
            )
            if attempt == 1:
                raise PolicyFailure(f"repeated invalid act: {violation[0]}")
        raise AssertionError("unreachable")

    def feedback(self, terms, done):
        self.transport.send(
            {
                "type": "feedback",
                "reward": terms.reward,
                "terms": {
                    "d_sum": sum(terms.d),
                    "c_sum": sum(terms.c),
                    "s_sum": sum(terms.s),
                },
                "done": done,
            }
        )

    def sample_for_heatmap(self, state, obs, step, samples):
        raise PolicyFailure("external policy does not support heatmap resampling")


def serve_connection(base_config, grid, map_text, transport, seeds):
    """Drive one episode per seed over the transport; stops on client EOF."""
    policy = ExternalPolicy(transport, map_text)
    for seed in seeds:
        config = dataclasses.replace(base_config, seed=seed)
        try:
            metrics, _ = run_episode(config, grid, policy)
        except BridgeClosed:
            print(f"bridge: client disconnected during seed {seed}", file=sys.stderr)
            return
        if not metrics.valid:
            transport.send(
                {"type": "error", "code": "aborted", "detail": "episode aborted"}
            )
            continue
        transport.send(
            {
                "type": "metrics",
                "total_throughput": metrics.total_throughput,
                "tpa": metrics.tpa,
                "mean_solve_s": metrics.mean_solve_s,
                "max_solve_s": metrics.max_solve_s,
                "infeasibility_rate": metrics.infeasibility_rate,
            }
        )


def serve_stdio(base_config, grid, map_text, seeds):
    transport = LineTransport(sys.stdin, sys.stdout)
    serve_connection(base_config, grid, map_text, transport, seeds)


def serve_tcp(base_config, grid, map_text, port, episodes_per_connection, base_seed):
    """TCP server; each connection gets an independent environment whose
    episode seeds come from a shared counter."""
    counter = itertools.count(base_seed)
    lock = threading.Lock()

    def next_seeds(n):
        with lock:
            return [next(counter) for _ in range(n)]

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            transport = LineTransport(
                _TextReader(self.rfile), _TextWriter(self.wfile)
            )
            serve_connection(
                base_config, grid, map_text, transport, next_seeds(episodes_per_connection)
            )

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    server = Server(("127.0.0.1", port), Handler)
    return server  # caller runs serve_forever / shutdown


class _TextReader:
    def __init__(self, raw):
        self.raw = raw

    def readline(self):
        return self.raw.readline().decode()


class _TextWriter:
    def __init__(self, raw):
        self.raw = raw

    def write(self, text):
        self.raw.write(text.encode())

    def flush(self):
        self.raw.flush()
