/**
 * Single-threaded request loop: announce a HELLO frame, then answer
 * EXTRACT and SCORE requests until a BYE frame (clean exit 0).
 *
 * Content-level problems (unknown opcode, unparseable payload, a rect
 * outside the image) answer with an ERROR frame and keep the session
 * alive. A corrupt length prefix leaves no way to find the next frame
 * boundary, so it answers a final `bad-frame` error and exits nonzero.
 */

import { FrameReader, writeFrame } from "./frames";
import { errorPayload, Handshake, Opcode, parseExtractRequest } from "./protocol";

export class RequestError extends Error {
  constructor(
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface Backend {
  hello(): Handshake;
  /** Answers an EXTRACT request with a complete FMAP1 blob. */
  extract(image: string, x: number, y: number, w: number, h: number): Promise<Buffer>;
  /** Answers a SCORE request (payload: FMAP1 blob) with K float32 LE bytes. */
  score(tensorBlob: Buffer): Promise<Buffer>;
}

export function serve(backend: Backend): void {
  const stdin = process.stdin;
  const stdout = process.stdout;
  const reader = new FrameReader();
  let busy = Promise.resolve();

  writeFrame(stdout, Opcode.Hello, Buffer.from(JSON.stringify(backend.hello()), "utf8"));

  const handle = async (opcode: number, payload: Buffer): Promise<void> => {
    try {
      switch (opcode) {
        case Opcode.Hello:
          writeFrame(stdout, Opcode.Hello, Buffer.from(JSON.stringify(backend.hello()), "utf8"));
          return;
        case Opcode.Extract: {
          let request;
          try {
            request = parseExtractRequest(payload);
          } catch (err) {
            throw new RequestError("bad-payload", String(err));
          }
          const blob = await backend.extract(
            request.image,
            request.x,
            request.y,
            request.w,
            request.h,
          );
          writeFrame(stdout, Opcode.Extract, blob);
          return;
        }
        case Opcode.Score: {
          const scores = await backend.score(payload);
          writeFrame(stdout, Opcode.Score, scores);
          return;
        }
        case Opcode.Bye:
          process.exit(0);
          return;
        default:
          throw new RequestError("bad-opcode", `unknown opcode ${opcode}`);
      }
    } catch (err) {
      if (err instanceof RequestError) {
        writeFrame(stdout, Opcode.Error, errorPayload(err.code, err.message));
      } else {
        writeFrame(stdout, Opcode.Error, errorPayload("model-error", String(err)));
      }
    }
  };

  stdin.on("data", (chunk: Buffer) => {
    let frames;
    try {
      frames = reader.push(chunk);
    } catch (err) {
      writeFrame(stdout, Opcode.Error, errorPayload("bad-frame", String(err)));
      stdout.write(Buffer.alloc(0), () => process.exit(1));
      stdin.pause();
      return;
    }
    for (const frame of frames) {
      // serialize request handling: one reply per request, in order
      busy = busy.then(() => handle(frame.opcode, frame.payload));
    }
  });

  stdin.on("end", () => {
    busy.then(() => process.exit(0));
  });
}
