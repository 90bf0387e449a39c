"""Programmable in-process chat-completion server for integration tests.

The server replays a script of behaviors, one per request:
  {"status": 429}                          -> error status with JSON body
  {"status": 200, "text": "..."}           -> well-formed completion
  {"status": 200, "raw": b"not json"}      -> malformed payload
  {"delay": 5.0, ...}                      -> sleep before answering
The last script entry repeats for any further requests.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class MockChatServer:
    def __init__(self, script: list[dict]):
        if not script:
            raise ValueError("script must have at least one entry")
        self.script = script
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
                with server._lock:
                    index = len(server.requests)
                    try:
                        server.requests.append(json.loads(body))
                    except ValueError:
                        server.requests.append({})
                entry = server.script[min(index, len(server.script) - 1)]
                if entry.get("delay"):
                    time.sleep(entry["delay"])
                status = entry.get("status", 200)
                if "raw" in entry:
                    payload = entry["raw"]
                elif status == 200:
                    payload = json.dumps({
                        "choices": [{
                            "message": {"role": "assistant", "content": entry.get("text", "")},
                            "finish_reason": "stop",
                        }],
                        "usage": {"prompt_tokens": 10, "completion_tokens": 20},
                    }).encode()
                else:
                    payload = json.dumps({"error": {"message": f"status {status}"}}).encode()
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                except (BrokenPipeError, ConnectionResetError):
                    pass  # client timed out and hung up

            def log_message(self, *args):  # silence request logging
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    @property
    def request_count(self) -> int:
        with self._lock:
            return len(self.requests)

    def __enter__(self) -> "MockChatServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
