#!/usr/bin/env python3
"""Sentence encoder sidecar for the `command` and `http` encoder kinds.

Reads {"sentences": [...]} and answers {"embeddings": [[...], ...]}.
Without --serve one request is read from stdin and answered on stdout;
with --serve the same exchange runs over HTTP POST.
"""

import argparse
import json
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer

DEFAULT_MODEL = "sentence-transformers/stsb-distilbert-base"


def load(name):
    from sentence_transformers import SentenceTransformer

    return SentenceTransformer(name)


def encode(model, request):
    sentences = request["sentences"]
    if not sentences:
        return {"embeddings": []}
    vectors = model.encode(sentences, convert_to_numpy=True, show_progress_bar=False)
    return {"embeddings": vectors.astype("float32").tolist()}


def serve(model, host, port):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            try:
                body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                reply = json.dumps(encode(model, json.loads(body))).encode()
                status = 200
            except (KeyError, ValueError) as e:
                reply = json.dumps({"error": str(e)}).encode()
                status = 400
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(reply)))
            self.end_headers()
            self.wfile.write(reply)

        def log_message(self, fmt, *args):
            sys.stderr.write("sbert_encoder: " + fmt % args + "\n")

    HTTPServer((host, port), Handler).serve_forever()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default=DEFAULT_MODEL)
    ap.add_argument("--serve", action="store_true", help="run an HTTP server instead of one stdin request")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8765)
    args = ap.parse_args()
    model = load(args.model)
    if args.serve:
        serve(model, args.host, args.port)
    else:
        json.dump(encode(model, json.load(sys.stdin)), sys.stdout)


if __name__ == "__main__":
    main()
