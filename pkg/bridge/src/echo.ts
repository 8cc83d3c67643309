/**
 * Echo backend: replays canned fixture files byte-for-byte.
 *
 * Serves the protocol without any model so the client side can be tested
 * in isolation: EXTRACT answers with the configured FMAP1 blob, SCORE
 * with the configured float32 blob. Rects are validated against a
 * configured virtual image size.
 */

import * as fs from "fs";

import { peekFmapDims, FMAP_HEADER_BYTES, FMAP_MAGIC, FMAP_VERSION } from "./fmap";
import { Handshake, PROTOCOL_VERSION } from "./protocol";
import { Backend, RequestError } from "./server";

export interface EchoOptions {
  tensorPath: string;
  scoresPath: string;
  imageW: number;
  imageH: number;
}

export class EchoBackend implements Backend {
  private readonly tensor: Buffer;
  private readonly scores: Buffer;

  constructor(private readonly options: EchoOptions) {
    this.tensor = readFixture(options.tensorPath);
    this.scores = readFixture(options.scoresPath);
    if (this.scores.length === 0 || this.scores.length % 4 !== 0) {
      throw new Error(`scores fixture must be non-empty float32 LE, got ${this.scores.length} bytes`);
    }
  }

  hello(): Handshake {
    const dims = peekFmapDims(this.tensor);
    return {
      protocol: PROTOCOL_VERSION,
      grid_size: dims.gridSize,
      channels: dims.channels,
      classes: this.scores.length / 4,
      model: "echo-stub",
    };
  }

  async extract(image: string, x: number, y: number, w: number, h: number): Promise<Buffer> {
    const { imageW, imageH } = this.options;
    const inside = x >= 0 && y >= 0 && w >= 1 && h >= 1 && x + w <= imageW && y + h <= imageH;
    if (!inside) {
      throw new RequestError(
        "bad-rect",
        `rect [${x}, ${y}, ${w}, ${h}] outside ${imageW}x${imageH} image ${image}`,
      );
    }
    return this.tensor;
  }

  async score(tensorBlob: Buffer): Promise<Buffer> {
    if (
      tensorBlob.length < FMAP_HEADER_BYTES ||
      tensorBlob.toString("ascii", 0, 4) !== FMAP_MAGIC ||
      tensorBlob.readUInt32LE(4) !== FMAP_VERSION
    ) {
      throw new RequestError("bad-payload", "SCORE payload is not an FMAP1 tensor");
    }
    return this.scores;
  }
}

function readFixture(path: string): Buffer {
  try {
    return fs.readFileSync(path);
  } catch (err) {
    throw new Error(`missing-fixture: cannot read ${path}: ${String(err)}`);
  }
}
