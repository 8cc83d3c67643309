/**
 * Incremental frame parsing for the length-prefixed stdio link.
 */

import { MAX_FRAME_BYTES, Opcode } from "./protocol";

export interface Frame {
  opcode: number;
  payload: Buffer;
}

export function packFrame(opcode: number, payload: Buffer = Buffer.alloc(0)): Buffer {
  const header = Buffer.alloc(5);
  header.writeUInt32LE(payload.length + 1, 0);
  header.writeUInt8(opcode, 4);
  return Buffer.concat([header, payload]);
}

/**
 * Buffers incoming chunks and yields complete frames. A length outside
 * (0, MAX_FRAME_BYTES] leaves the stream unrecoverable and throws.
 */
export class FrameReader {
  private buffer: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): Frame[] {
    this.buffer = this.buffer.length === 0 ? chunk : Buffer.concat([this.buffer, chunk]);
    const frames: Frame[] = [];
    for (;;) {
      if (this.buffer.length < 4) {
        break;
      }
      const length = this.buffer.readUInt32LE(0);
      if (length < 1 || length > MAX_FRAME_BYTES) {
        throw new Error(`frame length ${length} out of range`);
      }
      if (this.buffer.length < 4 + length) {
        break;
      }
      const body = this.buffer.subarray(4, 4 + length);
      frames.push({ opcode: body[0], payload: Buffer.from(body.subarray(1)) });
      this.buffer = Buffer.from(this.buffer.subarray(4 + length));
    }
    return frames;
  }
}

export function writeFrame(
  stream: NodeJS.WritableStream,
  opcode: Opcode,
  payload: Buffer = Buffer.alloc(0),
): void {
  stream.write(packFrame(opcode, payload));
}
