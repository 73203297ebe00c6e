"""Newline-delimited JSON client for model-backend subprocesses.

Request:  {"id": uint, "method": <name>, "params": {...}}
Response: {"id": uint, "result": {...}} or
          {"id": uint, "error": {"code": int, "message": str}}

Methods: generate_tags, detect_boxes, compute_heatmap, segment. Images are
referenced by filesystem path; heatmaps travel as base64 float32 payloads,
masks as RLE JSON. Error codes: 1 unknown method, 2 bad params, 3 model
failure, 4 resource exhausted. One request is in flight at a time.
"""
from __future__ import annotations

import base64
import binascii
import json
import queue
import shlex
import subprocess
import threading

from ..core import BinaryMask, BoxSet, Heatmap, ImageRef, RleMask, rle_decode
from ..errors import FixtureCorrupt, ProtocolError, RemoteError, TransportError, WireTimeout
from ..io import heatmap_from_body
from .base import Backend, PromptTriplet, TagBundle, TagRequest
from .fixture import boxes_from_json_obj

DEFAULT_TIMEOUT = 300.0

ERR_UNKNOWN_METHOD = 1
ERR_BAD_PARAMS = 2
ERR_MODEL_FAILURE = 3
ERR_RESOURCE_EXHAUSTED = 4

_EOF = object()


class SubprocessBackend(Backend):
    """Talks the wire protocol to one child process over its stdio pipes."""

    def __init__(self, command: str, timeout: float = DEFAULT_TIMEOUT):
        self.command = command
        self.timeout = timeout
        self._lock = threading.Lock()  # single in-flight request
        self._next_id = 0
        self._closed = False
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot start backend process {command!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self):
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        except ValueError:
            pass  # stdout closed while reading
        finally:
            self._lines.put(_EOF)

    def close(self):
        with self._lock:
            if self._closed:
                return
            self._closed = True
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _call(self, method: str, params: dict) -> dict:
        with self._lock:
            if self._closed:
                raise TransportError("backend process already closed")
            request_id = self._next_id
            self._next_id += 1
            frame = json.dumps(
                {"id": request_id, "method": method, "params": params}, sort_keys=True
            )
            try:
                self._proc.stdin.write(frame + "\n")
                self._proc.stdin.flush()
            except (OSError, ValueError) as exc:
                raise TransportError(f"{method}: backend pipe broken: {exc}") from exc
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                self._proc.kill()
                self._closed = True
                raise WireTimeout(f"{method}: no response within {self.timeout}s")
            if line is _EOF:
                code = self._proc.poll()
                raise TransportError(f"{method}: backend process exited (code {code})")
            return self._parse_response(line, request_id, method)

    @staticmethod
    def _parse_response(line: str, request_id: int, method: str) -> dict:
        try:
            msg = json.loads(line)
        except ValueError as exc:
            raise ProtocolError(f"{method}: response is not JSON: {line[:200]!r}") from exc
        if not isinstance(msg, dict):
            raise ProtocolError(f"{method}: response is not an object")
        if msg.get("id") != request_id:
            raise ProtocolError(
                f"{method}: response id {msg.get('id')!r} does not match request {request_id}"
            )
        if "error" in msg:
            err = msg["error"]
            if (
                not isinstance(err, dict)
                or not isinstance(err.get("code"), int)
                or not isinstance(err.get("message"), str)
            ):
                raise ProtocolError(f"{method}: malformed error payload {err!r}")
            raise RemoteError(err["code"], err["message"])
        if "result" not in msg:
            raise ProtocolError(f"{method}: response carries neither result nor error")
        return msg["result"]

    @staticmethod
    def _image_params(image: ImageRef) -> dict:
        return {
            "image_id": image.id,
            "image_path": image.pixel_source,
            "width": image.width,
            "height": image.height,
        }

    def generate_tags(self, image: ImageRef, request: TagRequest) -> TagBundle:
        result = self._call(
            "generate_tags",
            {
                **self._image_params(image),
                "prompt": request.prompt,
                "fg_query": request.fg_query(),
                "bg_query": request.bg_query(),
            },
        )
        try:
            return TagBundle(
                caption=result["caption"],
                fg_tags=result["fg_tags"],
                bg_tags=result.get("bg_tags", []),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"generate_tags: invalid tag bundle: {exc}") from exc

    def detect_boxes(self, image: ImageRef, tag: str) -> BoxSet:
        result = self._call("detect_boxes", {**self._image_params(image), "tag": tag})
        if not isinstance(result, dict) or "boxes" not in result:
            raise ProtocolError("detect_boxes: result must carry a boxes array")
        try:
            return boxes_from_json_obj(result["boxes"], tag, "<wire>")
        except FixtureCorrupt as exc:
            raise ProtocolError(f"detect_boxes: {exc.reason}") from exc

    def compute_heatmap(self, image: ImageRef, tag: str) -> Heatmap:
        result = self._call("compute_heatmap", {**self._image_params(image), "tag": tag})
        try:
            h, w = int(result["h"]), int(result["w"])
            body = base64.b64decode(result["data_b64"], validate=True)
        except (KeyError, TypeError, ValueError, binascii.Error) as exc:
            raise ProtocolError(f"compute_heatmap: malformed payload: {exc}") from exc
        if (h, w) != (image.height, image.width):
            raise ProtocolError(
                f"compute_heatmap: heatmap {h}x{w} does not match image "
                f"{image.height}x{image.width}"
            )
        try:
            return heatmap_from_body(body, h, w)
        except FixtureCorrupt as exc:
            raise ProtocolError(f"compute_heatmap: {exc.reason}") from exc

    def segment(self, image: ImageRef, triplet: PromptTriplet) -> BinaryMask:
        box = triplet.box
        result = self._call(
            "segment",
            {
                **self._image_params(image),
                "box": {"x0": box.x0, "y0": box.y0, "x1": box.x1, "y1": box.y1,
                        "score": box.score},
                "fg_points": [[p.x, p.y] for p in triplet.fg_points],
                "bg_points": [[p.x, p.y] for p in triplet.bg_points],
            },
        )
        try:
            mask = rle_decode(RleMask.from_json_obj(result))
        except Exception as exc:
            raise ProtocolError(f"segment: invalid RLE mask: {exc}") from exc
        if (mask.height, mask.width) != (image.height, image.width):
            raise ProtocolError(
                f"segment: mask {mask.height}x{mask.width} does not match image "
                f"{image.height}x{image.width}"
            )
        return mask


def subprocess_backend(command: str, timeout: float = DEFAULT_TIMEOUT) -> SubprocessBackend:
    return SubprocessBackend(command, timeout=timeout)
