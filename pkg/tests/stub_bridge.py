"""Minimal bridge worker used by the client tests.

Speaks the length-prefixed stdio protocol and can be bent into various
misbehaviors via flags, so the client's error paths can be exercised
without a real worker.
"""

import argparse
import json
import struct
import sys

OP_HELLO, OP_EXTRACT, OP_SCORE, OP_ERROR, OP_BYE = range(5)


def read_exact(stream, count):
    data = b""
    while len(data) < count:
        chunk = stream.read(count - len(data))
        if not chunk:
            return None
        data += chunk
    return data


def write_frame(stream, opcode, payload=b""):
    stream.write(struct.pack("<I", len(payload) + 1) + bytes([opcode]) + payload)
    stream.flush()


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--tensor", help="FMAP1 file served for EXTRACT")
    parser.add_argument("--scores", help="raw float32 file served for SCORE")
    parser.add_argument("--grid-size", type=int, default=7)
    parser.add_argument("--channels", type=int, default=512)
    parser.add_argument("--classes", type=int, default=4)
    parser.add_argument("--image-w", type=int, default=224)
    parser.add_argument("--image-h", type=int, default=224)
    parser.add_argument("--misbehave", default="none",
                        choices=["none", "wrong-opcode", "close-early", "slow", "garbage"])
    args = parser.parse_args()

    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    hello = {
        "protocol": 1,
        "grid_size": args.grid_size,
        "channels": args.channels,
        "classes": args.classes,
        "model": "stub",
    }
    write_frame(stdout, OP_HELLO, json.dumps(hello).encode())

    if args.misbehave == "close-early":
        return 0

    while True:
        header = read_exact(stdin, 4)
        if header is None:
            return 0
        (length,) = struct.unpack("<I", header)
        body = read_exact(stdin, length)
        if body is None:
            return 0
        opcode, payload = body[0], body[1:]

        if opcode == OP_BYE:
            return 0
        if args.misbehave == "slow":
            import time

            time.sleep(3600)
        if args.misbehave == "garbage":
            stdout.write(b"\xff" * 12)
            stdout.flush()
            return 0
        if args.misbehave == "wrong-opcode":
            write_frame(stdout, OP_BYE, b"")
            continue

        if opcode == OP_EXTRACT:
            request = json.loads(payload.decode())
            inside = (
                0 <= request["x"]
                and 0 <= request["y"]
                and request["x"] + request["w"] <= args.image_w
                and request["y"] + request["h"] <= args.image_h
                and request["w"] >= 1
                and request["h"] >= 1
            )
            if not inside:
                write_frame(
                    stdout, OP_ERROR,
                    json.dumps({"code": "bad-rect", "message": "crop outside image"}).encode(),
                )
                continue
            with open(args.tensor, "rb") as fh:
                write_frame(stdout, OP_EXTRACT, fh.read())
        elif opcode == OP_SCORE:
            with open(args.scores, "rb") as fh:
                write_frame(stdout, OP_SCORE, fh.read())
        elif opcode == OP_HELLO:
            write_frame(stdout, OP_HELLO, json.dumps(hello).encode())
        else:
            write_frame(
                stdout, OP_ERROR,
                json.dumps({"code": "bad-opcode", "message": str(opcode)}).encode(),
            )


if __name__ == "__main__":
    sys.exit(main())
