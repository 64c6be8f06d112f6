"""Local HTTP endpoint: upload a rainy PNG, fetch the derained results.

The server computes the model-based estimate and the refined image once
per upload; α blending is intentionally left to clients (it is pointwise
linear), which keeps interactive α tuning free of round trips.

Routes:
  POST /derain                          PNG body → {"run_id": ...}
  GET  /runs                            → {"runs": [ids]}
  GET  /result/<run_id>/<name>.png      name ∈ input|bm|refined
  GET  /<static files>                  the viewer bundle (index.html at /)
"""

import io
import json
import logging
import os
import posixpath
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
from PIL import Image

from .images import save_image, to_float
from .pipeline import derain_arrays

logger = logging.getLogger("ampe.server")

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
RESULT_FILES = ("input.png", "bm.png", "refined.png")
_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".map": "application/json",
    ".json": "application/json",
}


def _decode_png(data):
    with Image.open(io.BytesIO(data)) as im:
        return to_float(np.asarray(im.convert("RGB")))


def process_upload(bundle, data, runs_root):
    """Derain an uploaded PNG and persist the three result images."""
    image = _decode_png(data)
    maps = derain_arrays(bundle, image)
    while True:
        run_id = uuid.uuid4().hex[:12]
        run_dir = os.path.join(runs_root, run_id)
        try:
            os.makedirs(run_dir, exist_ok=False)
            break
        except FileExistsError:
            continue
    save_image(os.path.join(run_dir, "input.png"), image)
    save_image(os.path.join(run_dir, "bm.png"), np.clip(maps["b_m"], 0.0, 1.0))
    save_image(os.path.join(run_dir, "refined.png"), np.clip(maps["refined"], 0.0, 1.0))
    return run_id


def create_server(bundle, port, runs_root, static_dir=None):
    """Build (without starting) the threaded HTTP server."""
    os.makedirs(runs_root, exist_ok=True)
    lock = threading.Lock()

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("%s - %s", self.address_string(), fmt % args)

        def _send(self, status, body, content_type="application/json"):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, status, obj):
            self._send(status, json.dumps(obj).encode("utf-8"))

        def do_POST(self):
            if self.path.rstrip("/") != "/derain":
                self._send_json(404, {"error": "unknown endpoint"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            data = self.rfile.read(length) if length else b""
            if not data.startswith(PNG_MAGIC):
                self._send_json(400, {"error": "body must be a PNG image"})
                return
            try:
                run_id = process_upload(bundle, data, runs_root)
            except Exception as exc:  # surface as a client-readable error
                logger.exception("derain upload failed")
                self._send_json(400, {"error": str(exc)})
                return
            self._send_json(200, {"run_id": run_id})

        def do_GET(self):
            path = self.path.split("?", 1)[0]
            if path == "/runs":
                with lock:
                    runs = sorted(
                        d for d in os.listdir(runs_root)
                        if os.path.isdir(os.path.join(runs_root, d))
                    )
                self._send_json(200, {"runs": runs})
                return
            if path.startswith("/result/"):
                parts = path.split("/")
                if len(parts) == 4 and parts[3] in RESULT_FILES:
                    fpath = os.path.join(runs_root, parts[2], parts[3])
                    if os.path.isfile(fpath):
                        with open(fpath, "rb") as fh:
                            self._send(200, fh.read(), "image/png")
                        return
                self._send_json(404, {"error": "unknown run or file"})
                return
            self._serve_static(path)

        def _serve_static(self, path):
            if static_dir is None:
                self._send_json(404, {"error": "no static bundle configured"})
                return
            rel = posixpath.normpath(path.lstrip("/")) or "index.html"
            if rel in (".", ""):
                rel = "index.html"
            fpath = os.path.normpath(os.path.join(static_dir, rel))
            if not fpath.startswith(os.path.normpath(static_dir) + os.sep) and fpath != os.path.normpath(
                os.path.join(static_dir, "index.html")
            ):
                self._send_json(404, {"error": "not found"})
                return
            if os.path.isdir(fpath):
                fpath = os.path.join(fpath, "index.html")
            if not os.path.isfile(fpath):
                self._send_json(404, {"error": "not found"})
                return
            ext = os.path.splitext(fpath)[1].lower()
            with open(fpath, "rb") as fh:
                self._send(200, fh.read(), _CONTENT_TYPES.get(ext, "application/octet-stream"))

    return ThreadingHTTPServer(("127.0.0.1", port), Handler)


def serve_forever(bundle, port, runs_root, static_dir=None):
    httpd = create_server(bundle, port, runs_root, static_dir)
    logger.info("serving on http://127.0.0.1:%d (runs under %s)", httpd.server_address[1], runs_root)
    try:
        httpd.serve_forever()
    finally:
        httpd.server_close()
