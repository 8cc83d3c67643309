"""Client side of the feature-extraction bridge protocol.

A bridge worker is a subprocess that owns image decoding and a trained
network; this client only moves tensors. Framing: a little-endian u32
payload length, then the payload, whose first byte is the opcode. The
worker announces a HELLO frame (JSON: protocol, grid_size, channels,
classes, model) on startup. EXTRACT carries a JSON request and answers
with an FMAP1 tensor; SCORE carries an FMAP1 tensor and answers with
``classes`` float32 scores; ERROR carries JSON {code, message}; BYE shuts
the worker down. One request is in flight per connection; parallelism
comes from opening more connections.
"""

from __future__ import annotations

import json
import os
import selectors
import shlex
import struct
import subprocess
import threading
import time

import numpy as np

from .errors import (
    BridgeDimensionError,
    BridgeProtocolError,
    BridgeRemoteError,
    BridgeTimeoutError,
)
from .tensors import FeatureMap, PixelRect, read_fmap1, write_fmap1

OP_HELLO = 0
OP_EXTRACT = 1
OP_SCORE = 2
OP_ERROR = 3
OP_BYE = 4

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 64 * 1024 * 1024

_LEN = struct.Struct("<I")


def pack_frame(opcode: int, payload: bytes = b"") -> bytes:
    return _LEN.pack(len(payload) + 1) + bytes([opcode]) + payload


class BridgeHandshake:
    def __init__(self, payload: dict):
        try:
            self.protocol = int(payload["protocol"])
            self.grid_size = int(payload["grid_size"])
            self.channels = int(payload["channels"])
            self.classes = int(payload["classes"])
            self.model = str(payload.get("model", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise BridgeProtocolError(f"malformed handshake payload: {payload!r}") from exc
        if self.protocol != PROTOCOL_VERSION:
            raise BridgeProtocolError(f"unsupported protocol version {self.protocol}")


class BridgeClient:
    """Spawns and talks to one bridge worker over its stdio."""

    def __init__(self, command: list[str] | str, timeout: float = 30.0):
        if isinstance(command, str):
            command = shlex.split(command)
        self.timeout = timeout
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        os.set_blocking(self._proc.stdout.fileno(), False)
        self._selector = selectors.DefaultSelector()
        self._selector.register(self._proc.stdout, selectors.EVENT_READ)
        self._buffer = bytearray()
        opcode, payload = self._read_frame()
        if opcode != OP_HELLO:
            raise BridgeProtocolError(f"expected HELLO, got opcode {opcode}")
        try:
            self.handshake = BridgeHandshake(json.loads(payload.decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BridgeProtocolError("handshake payload is not valid JSON") from exc

    # -- framing ---------------------------------------------------------

    def _read_exact(self, count: int, deadline: float) -> bytes:
        while len(self._buffer) < count:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeTimeoutError(f"no reply within {self.timeout}s")
            if self._proc.poll() is not None and not self._selector.select(0):
                raise BridgeProtocolError("bridge process exited mid-conversation")
            if self._selector.select(min(remaining, 0.25)):
                chunk = self._proc.stdout.read(65536)
                if chunk:
                    self._buffer.extend(chunk)
                elif chunk == b"" and self._proc.poll() is not None:
                    raise BridgeProtocolError("bridge closed its pipe")
        out = bytes(self._buffer[:count])
        del self._buffer[:count]
        return out

    def _read_frame(self) -> tuple[int, bytes]:
        deadline = time.monotonic() + self.timeout
        (length,) = _LEN.unpack(self._read_exact(4, deadline))
        if not 1 <= length <= MAX_FRAME_BYTES:
            raise BridgeProtocolError(f"frame length {length} out of range")
        body = self._read_exact(length, deadline)
        return body[0], body[1:]

    def _send(self, opcode: int, payload: bytes = b"") -> None:
        try:
            self._proc.stdin.write(pack_frame(opcode, payload))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeProtocolError("bridge pipe is closed") from exc

    def _request(self, opcode: int, payload: bytes) -> tuple[int, bytes]:
        self._send(opcode, payload)
        reply_op, reply = self._read_frame()
        if reply_op == OP_ERROR:
            try:
                info = json.loads(reply.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                info = {"code": "unparseable-error", "message": repr(reply[:80])}
            raise BridgeRemoteError(str(info.get("code", "error")), str(info.get("message", "")))
        if reply_op != opcode:
            raise BridgeProtocolError(f"request opcode {opcode} answered with {reply_op}")
        return reply_op, reply

    # -- requests --------------------------------------------------------

    def extract(self, image_ref: str, crop: PixelRect) -> FeatureMap:
        request = json.dumps(
            {"image": str(image_ref), "x": crop.x, "y": crop.y, "w": crop.w, "h": crop.h},
            sort_keys=True,
        ).encode("utf-8")
        _, payload = self._request(OP_EXTRACT, request)
        fmap = read_fmap1(payload)
        if fmap.grid_size != self.handshake.grid_size or fmap.channels != self.handshake.channels:
            raise BridgeDimensionError(
                f"worker sent {fmap.grid_size}x{fmap.grid_size}x{fmap.channels}, handshake "
                f"promised {self.handshake.grid_size}x{self.handshake.grid_size}"
                f"x{self.handshake.channels}"
            )
        return fmap

    def score(self, fmap: FeatureMap) -> np.ndarray:
        _, payload = self._request(OP_SCORE, write_fmap1(fmap))
        if len(payload) != 4 * self.handshake.classes:
            raise BridgeDimensionError(
                f"score payload is {len(payload)} bytes, expected "
                f"{4 * self.handshake.classes}"
            )
        return np.frombuffer(payload, dtype="<f4").astype(np.float64)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._send(OP_BYE)
            except BridgeProtocolError:
                pass
            try:
                self._proc.wait(timeout=self.timeout)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._selector.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BridgeProvider:
    """FeatureProvider backed by bridge workers, one per calling thread."""

    def __init__(self, command: list[str] | str, timeout: float = 30.0):
        self._command = command
        self._timeout = timeout
        self._local = threading.local()
        self._clients: list[BridgeClient] = []
        self._lock = threading.Lock()
        probe = self._client()
        self.grid_size = probe.handshake.grid_size
        self.channels = probe.handshake.channels
        self.class_count = probe.handshake.classes

    def _client(self) -> BridgeClient:
        client = getattr(self._local, "client", None)
        if client is None:
            client = BridgeClient(self._command, timeout=self._timeout)
            self._local.client = client
            with self._lock:
                self._clients.append(client)
        return client

    def extract(self, image_ref, crop: PixelRect) -> FeatureMap:
        return self._client().extract(image_ref, crop)

    def score(self, fmap: FeatureMap) -> np.ndarray:
        return self._client().score(fmap)

    def close(self) -> None:
        with self._lock:
            clients, self._clients = self._clients, []
        for client in clients:
            client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BridgeHead:
    """ScoringHead delegating to the worker's fully connected layers."""

    def __init__(self, provider: BridgeProvider):
        self._provider = provider
        self.class_count = provider.class_count

    def score(self, fmap: FeatureMap) -> np.ndarray:
        return self._provider.score(fmap)
