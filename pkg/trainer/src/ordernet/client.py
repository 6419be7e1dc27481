"""Client side of the planner's lockstep NDJSON bridge (protocol v:1).

The environment process is the planner CLI run with `--bridge stdio` (one
subprocess per connection) or a TCP endpoint. Per episode the server sends
Reset, then alternating Obs/Feedback around our Act replies, and a final
Metrics message.
"""

from __future__ import annotations

import json
import socket
import subprocess

PROTOCOL_VERSION = 1


class BridgeProtocolError(RuntimeError):
    """The environment sent something the protocol does not allow here."""


class StdioEnv:
    """Planner CLI subprocess serving episodes over stdin/stdout."""

    def __init__(self, cli_args, executable="rhpp"):
        self.proc = subprocess.Popen(
            [executable, *cli_args, "--bridge", "stdio"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )

    def send(self, obj):
        self.proc.stdin.write(json.dumps(obj) + "\n")
        self.proc.stdin.flush()

    def recv(self):
        line = self.proc.stdout.readline()
        if not line:
            return None
        return json.loads(line)

    def close(self):
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.wait(timeout=30)


class TcpEnv:
    def __init__(self, host, port):
        self.sock = socket.create_connection((host, port))
        self.rfile = self.sock.makefile("r")
        self.wfile = self.sock.makefile("w")

    def send(self, obj):
        self.wfile.write(json.dumps(obj) + "\n")
        self.wfile.flush()

    def recv(self):
        line = self.rfile.readline()
        if not line:
            return None
        return json.loads(line)

    def close(self):
        self.sock.close()


def _expect(env, kind):
    msg = env.recv()
    if msg is None:
        raise BridgeProtocolError(f"connection closed while awaiting {kind}")
    if msg.get("type") == "error":
        raise BridgeProtocolError(f"environment error: {msg}")
    if msg.get("type") != kind:
        raise BridgeProtocolError(f"expected {kind}, got {msg}")
    return msg


def run_episode(env, act_fn, on_step=None):
    """Drive one episode.

    act_fn(paths: list[list[int]], reset_info) -> (orders, extra); orders is
    the list of K permutations to send; extra is passed to on_step along with
    the observation and the feedback. Returns (reset_info, metrics dict).
    """
    reset = _expect(env, "reset")
    if reset["v"] != PROTOCOL_VERSION:
        raise BridgeProtocolError(f"unsupported protocol version {reset['v']}")
    while True:
        msg = env.recv()
        if msg is None:
            raise BridgeProtocolError("connection closed mid-episode")
        kind = msg.get("type")
        if kind == "metrics":
            return reset, msg
        if kind == "error":
            raise BridgeProtocolError(f"environment error: {msg}")
        if kind != "obs":
            raise BridgeProtocolError(f"unexpected message {msg}")
        orders, extra = act_fn(msg["paths"], reset)
        env.send({"type": "act", "orders": orders})
        feedback = _expect(env, "feedback")
        if on_step is not None:
            on_step(msg, orders, extra, feedback)
        if feedback["done"]:
            reply = env.recv()
            if reply is None or reply.get("type") != "metrics":
                raise BridgeProtocolError(f"expected metrics, got {reply}")
            return reset, reply
