/**
 * FMAP1 tensor blobs: 16-byte header (magic "FMAP", version, L, T as
 * little-endian u32) followed by L*L*T float32 values in (row, col,
 * channel) order.
 */

export const FMAP_MAGIC = "FMAP";
export const FMAP_VERSION = 1;
export const FMAP_HEADER_BYTES = 16;

export interface FmapTensor {
  gridSize: number;
  channels: number;
  /** length gridSize * gridSize * channels, (row, col, channel) order */
  values: Float32Array;
}

export function encodeFmap(tensor: FmapTensor): Buffer {
  const { gridSize, channels, values } = tensor;
  if (values.length !== gridSize * gridSize * channels) {
    throw new Error(
      `tensor has ${values.length} values, expected ${gridSize * gridSize * channels}`,
    );
  }
  const out = Buffer.alloc(FMAP_HEADER_BYTES + values.length * 4);
  out.write(FMAP_MAGIC, 0, "ascii");
  out.writeUInt32LE(FMAP_VERSION, 4);
  out.writeUInt32LE(gridSize, 8);
  out.writeUInt32LE(channels, 12);
  for (let i = 0; i < values.length; i++) {
    out.writeFloatLE(values[i], FMAP_HEADER_BYTES + i * 4);
  }
  return out;
}

export function decodeFmap(blob: Buffer): FmapTensor {
  if (blob.length < FMAP_HEADER_BYTES) {
    throw new Error(`FMAP1 blob truncated at ${blob.length} bytes`);
  }
  if (blob.toString("ascii", 0, 4) !== FMAP_MAGIC) {
    throw new Error("bad FMAP1 magic");
  }
  const version = blob.readUInt32LE(4);
  if (version !== FMAP_VERSION) {
    throw new Error(`unsupported FMAP1 version ${version}`);
  }
  const gridSize = blob.readUInt32LE(8);
  const channels = blob.readUInt32LE(12);
  const count = gridSize * gridSize * channels;
  if (blob.length !== FMAP_HEADER_BYTES + count * 4) {
    throw new Error(
      `FMAP1 payload is ${blob.length} bytes, expected ${FMAP_HEADER_BYTES + count * 4}`,
    );
  }
  const values = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    values[i] = blob.readFloatLE(FMAP_HEADER_BYTES + i * 4);
  }
  return { gridSize, channels, values };
}

/** Header-only peek, used to advertise dimensions without decoding values. */
export function peekFmapDims(blob: Buffer): { gridSize: number; channels: number } {
  const { gridSize, channels } = decodeFmapHeader(blob);
  return { gridSize, channels };
}

function decodeFmapHeader(blob: Buffer): { gridSize: number; channels: number } {
  if (blob.length < FMAP_HEADER_BYTES || blob.toString("ascii", 0, 4) !== FMAP_MAGIC) {
    throw new Error("bad FMAP1 header");
  }
  if (blob.readUInt32LE(4) !== FMAP_VERSION) {
    throw new Error("unsupported FMAP1 version");
  }
  return { gridSize: blob.readUInt32LE(8), channels: blob.readUInt32LE(12) };
}
