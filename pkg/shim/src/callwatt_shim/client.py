"""Line-oriented client for the measurement daemon's control socket.

Protocol, one request per line:

    STABLE?                     -> STABLE | UNSTABLE
    SLICE <component> <t0> <t1> -> JSON sample per line, then END
    STABLE_STATE                -> stable-state JSON
    NET <t0> <t1>               -> per-component {"gross_j","net_j"} JSON
    CONFIG                      -> experiment settings JSON

The socket path comes from the CALLWATT_SOCKET environment variable
(set by the experiment runner) or falls back to ./out/daemon.sock.
"""

from __future__ import annotations

import json
import os
import socket

DEFAULT_SOCKET_PATH = "out/daemon.sock"
SOCKET_ENV = "CALLWATT_SOCKET"


class ShimError(Exception):
    """Base error for breakpoint failures; aborts the experiment."""


class DaemonUnreachable(ShimError):
    pass


class StabilityTimeout(ShimError):
    pass


def socket_path_from_env() -> str:
    return os.environ.get(SOCKET_ENV, DEFAULT_SOCKET_PATH)


class DaemonClient:
    def __init__(self, socket_path: str | None = None, timeout: float = 30.0):
        self.socket_path = socket_path or socket_path_from_env()
        self.timeout = timeout

    def _request(self, line: str, multiline: bool = False) -> list[str]:
        try:
            conn = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            conn.settimeout(self.timeout)
            conn.connect(self.socket_path)
        except OSError as exc:
            raise DaemonUnreachable(
                f"measurement daemon unreachable at {self.socket_path}: {exc}"
            ) from exc
        # separate read/write streams; a shared rw file object drops its
        # read-ahead buffer when written to
        with conn, conn.makefile("r", encoding="utf-8", newline="\n") as reader, \
                conn.makefile("w", encoding="utf-8", newline="\n") as writer:
            writer.write(line + "\n")
            writer.flush()
            replies: list[str] = []
            for reply in reader:
                reply = reply.rstrip("\n")
                if reply.startswith("ERR"):
                    raise ShimError(f"daemon rejected {line!r}: {reply}")
                if multiline and reply == "END":
                    return replies
                replies.append(reply)
                if not multiline:
                    return replies
        raise ShimError(f"truncated reply to {line!r}")

    def is_stable(self) -> bool:
        return self._request("STABLE?")[0] == "STABLE"

    def config(self) -> dict:
        return json.loads(self._request("CONFIG")[0])

    def stable_state(self) -> dict:
        return json.loads(self._request("STABLE_STATE")[0])

    def slice(self, component: str, t0: int, t1: int) -> list[dict]:
        lines = self._request(f"SLICE {component} {t0} {t1}", multiline=True)
        return [json.loads(line) for line in lines]

    def net(self, t0: int, t1: int) -> dict:
        return json.loads(self._request(f"NET {t0} {t1}")[0])
