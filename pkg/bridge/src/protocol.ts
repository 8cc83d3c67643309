/**
 * Wire protocol constants shared by every frame on the stdio link.
 *
 * A frame is a little-endian u32 payload length followed by the payload,
 * whose first byte is the opcode. HELLO and ERROR carry JSON; EXTRACT
 * requests carry JSON and answer with an FMAP1 tensor; SCORE requests
 * carry an FMAP1 tensor and answer with float32 class scores; BYE shuts
 * the worker down.
 */

export const PROTOCOL_VERSION = 1;
export const MAX_FRAME_BYTES = 64 * 1024 * 1024;

export enum Opcode {
  Hello = 0,
  Extract = 1,
  Score = 2,
  Error = 3,
  Bye = 4,
}

export interface Handshake {
  protocol: number;
  grid_size: number;
  channels: number;
  classes: number;
  model: string;
}

export interface ExtractRequest {
  image: string;
  x: number;
  y: number;
  w: number;
  h: number;
}

export function errorPayload(code: string, message: string): Buffer {
  return Buffer.from(JSON.stringify({ code, message }), "utf8");
}

export function parseExtractRequest(payload: Buffer): ExtractRequest {
  const parsed = JSON.parse(payload.toString("utf8"));
  const { image, x, y, w, h } = parsed;
  if (
    typeof image !== "string" ||
    ![x, y, w, h].every((v) => Number.isInteger(v))
  ) {
    throw new Error("extract request must carry {image, x, y, w, h}");
  }
  return { image, x, y, w, h };
}
