"""NDJSON wire endpoint over a local unix stream socket.

One JSON Request per line in, one JSON Response per line out. A line
that is not valid JSON gets a BadRequest response and the stream keeps
going; the protocol itself never kills a connection.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import threading

from .broker import BrokerConfig, BrokerCore
from .canonical import canonical_json
from .clock import LOGICAL, WALL


class BrokerServer:
    """Accept loop plus one thread per connection, all over one core."""

    def __init__(self, core: BrokerCore, endpoint: str):
        self.core = core
        self.endpoint = endpoint
        self._sock: socket.socket | None = None
        self._thread: threading.Thread | None = None
        self._running = False

    def start(self):
        if os.path.exists(self.endpoint):
            os.unlink(self.endpoint)
        self._sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        self._sock.bind(self.endpoint)
        self._sock.listen(16)
        self._running = True
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()
        return self

    def _accept_loop(self):
        while self._running:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_connection, args=(conn,), daemon=True).start()

    def _serve_connection(self, conn: socket.socket):
        with conn:
            reader = conn.makefile("r", encoding="utf-8", newline="\n")
            for line in reader:
                if not line.strip():
                    continue
                try:
                    request = json.loads(line)
                except json.JSONDecodeError as exc:
                    response = {
                        "id": None,
                        "ok": False,
                        "error": {"code": "BadRequest", "message": f"bad JSON: {exc}"},
                    }
                else:
                    response = self.core.handle(request)
                try:
                    conn.sendall(canonical_json(response).encode("utf-8") + b"\n")
                except OSError:
                    return

    def stop(self):
        self._running = False
        if self._sock is not None:
            self._sock.close()
        if os.path.exists(self.endpoint):
            os.unlink(self.endpoint)
        self.core.close()

    def wait(self):
        if self._thread is not None:
            self._thread.join()


def serve(config: BrokerConfig, endpoint: str) -> BrokerServer:
    """Build a core from config and start listening on `endpoint`."""
    return BrokerServer(BrokerCore(config), endpoint).start()


def _parse_table_arg(arg: str) -> tuple[str, str]:
    if "=" not in arg:
        raise argparse.ArgumentTypeError(f"expected NAMESPACE.TABLE=CSVPATH, got {arg!r}")
    name, path = arg.split("=", 1)
    return name, path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="enclave-brokerd", description="Run the data access broker."
    )
    parser.add_argument("--endpoint", required=True, help="unix socket path to listen on")
    parser.add_argument("--data-dir", required=True, help="directory for contracts and the audit log")
    parser.add_argument(
        "--table",
        action="append",
        default=[],
        type=_parse_table_arg,
        metavar="NAMESPACE.TABLE=CSV",
        help="register a source table from a CSV file (repeatable)",
    )
    parser.add_argument("--clock", choices=["logical", "wall"], default="logical")
    parser.add_argument("--volume-threshold", type=int, default=10000)
    parser.add_argument("--probing-threshold", type=int, default=5)
    parser.add_argument("--probing-window", type=int, default=300)
    parser.add_argument("--bg-quorum", type=int, default=2)
    parser.add_argument("--bg-window", type=int, default=900)
    parser.add_argument(
        "--bg-account", action="append", default=[], help="register a break-glass account (repeatable)"
    )
    args = parser.parse_args(argv)
    config = BrokerConfig(
        data_dir=args.data_dir,
        tables=dict(args.table),
        volume_threshold=args.volume_threshold,
        probing_threshold=args.probing_threshold,
        probing_window=args.probing_window,
        bg_quorum=args.bg_quorum,
        bg_window=args.bg_window,
        bg_accounts=tuple(args.bg_account),
        clock_mode=WALL if args.clock == "wall" else LOGICAL,
    )
    server = serve(config, args.endpoint)
    print(f"listening on {args.endpoint}")
    try:
        server.wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
