"""Echo simplifier for exercising the external adapter.

Line mode reads ``{"id", "input"}`` JSON lines on stdin and answers
``{"id", "output"}`` with ``output == input``. ``--shuffle`` buffers
responses and releases them in random order. Inputs containing these markers
misbehave on purpose:

``__hang__``     never answered
``__wrongid__``  answered under a different id
``__garbage__``  answered with a non-JSON line
``__exit__``     the server exits with status 3

``--http PORT`` serves the same contract on ``POST /simplify`` instead.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def respond(obj: dict) -> str | None:
    text = obj.get("input", "")
    if "__hang__" in text:
        return None
    if "__garbage__" in text:
        return "this is not json"
    rid = obj.get("id")
    if "__wrongid__" in text:
        rid = f"{rid}-wrong"
    return json.dumps({"id": rid, "output": text}, ensure_ascii=False)


def serve_lines(shuffle: bool, window: float, seed: int) -> int:
    rng = random.Random(seed)
    buffer: list[str] = []
    lock = threading.Lock()
    done = threading.Event()

    def flush():
        with lock:
            batch = buffer[:]
            buffer.clear()
        if shuffle:
            rng.shuffle(batch)
        for line in batch:
            sys.stdout.write(line + "\n")
        sys.stdout.flush()

    def pump():
        while not done.wait(window):
            flush()

    flusher = threading.Thread(target=pump, daemon=True)
    flusher.start()
    for raw in sys.stdin:
        if not raw.strip():
            continue
        obj = json.loads(raw)
        if "__exit__" in obj.get("input", ""):
            flush()
            os._exit(3)
        line = respond(obj)
        if line is not None:
            with lock:
                buffer.append(line)
    done.set()
    flusher.join()
    flush()
    return 0


class _Handler(BaseHTTPRequestHandler):
    delay = 0.0

    def do_POST(self):  # noqa: N802
        if self.path.rstrip("/") != "/simplify":
            self.send_error(404)
            return
        body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
        obj = json.loads(body)
        line = respond(obj)
        if line is None:
            time.sleep(3600)
            return
        if self.delay:
            time.sleep(self.delay)
        data = line.encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


def make_http_server(port: int = 0, delay: float = 0.0) -> ThreadingHTTPServer:
    handler = type("EchoHandler", (_Handler,), {"delay": delay})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.daemon_threads = True
    return server


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--shuffle", action="store_true")
    parser.add_argument("--window", type=float, default=0.005, help="seconds between response flushes")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--http", type=int, metavar="PORT")
    args = parser.parse_args(argv)
    if args.http is not None:
        server = make_http_server(args.http)
        print(f"listening on http://127.0.0.1:{server.server_address[1]}", flush=True)
        server.serve_forever()
        return 0
    return serve_lines(args.shuffle, args.window, args.seed)


if __name__ == "__main__":
    sys.exit(main())
