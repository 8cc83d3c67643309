/**
 * Model backend: runs a saved tfjs layers model split at its last spatial
 * layer.
 *
 * EXTRACT decodes the PNG, crops the requested rect, resizes it to the
 * network's input resolution, and forward-propagates up to the feature
 * layer (the last layer with a square 4-d output, or the one named with
 * --layer). SCORE feeds a reconstructed feature tensor through the
 * remaining layers to the class scores. Sequential topologies only, which
 * covers the classic conv-stack classifiers this worker is meant to host.
 */

import * as fs from "fs";
import * as path from "path";

import { decodeFmap, encodeFmap } from "./fmap";
import { Handshake, PROTOCOL_VERSION } from "./protocol";
import { Backend, RequestError } from "./server";
import { loadHandler } from "./tfio";

type Tf = typeof import("@tensorflow/tfjs");

export interface ModelOptions {
  modelDir: string;
  featureLayer?: string;
}

export class TfjsBackend implements Backend {
  private constructor(
    private readonly tf: Tf,
    private readonly trunk: any,
    private readonly head: any,
    private readonly inputSize: number,
    private readonly gridSize: number,
    private readonly channels: number,
    private readonly classes: number,
    private readonly modelId: string,
  ) {}

  static async create(options: ModelOptions): Promise<TfjsBackend> {
    const tf: Tf = require("@tensorflow/tfjs");
    await tf.setBackend("cpu");
    await tf.ready();

    const model = (await tf.loadLayersModel(loadHandler(options.modelDir) as any)) as any;
    const layers: any[] = model.layers;

    let featureIndex = -1;
    if (options.featureLayer) {
      featureIndex = layers.findIndex((l) => l.name === options.featureLayer);
      if (featureIndex < 0) {
        throw new Error(`no layer named ${options.featureLayer}`);
      }
    } else {
      for (let i = layers.length - 1; i >= 0; i--) {
        const shape = layers[i].outputShape;
        if (Array.isArray(shape) && shape.length === 4) {
          featureIndex = i;
          break;
        }
      }
      if (featureIndex < 0) {
        throw new Error("model has no spatial (4-d) layer output to extract");
      }
    }

    const featureShape = layers[featureIndex].outputShape as number[];
    const [, rows, cols, channels] = featureShape;
    if (rows !== cols) {
      throw new Error(`feature layer output ${rows}x${cols} is not square`);
    }

    const inputShape = model.inputs[0].shape as number[];
    const [, inH, inW] = inputShape;
    if (inH !== inW) {
      throw new Error(`model input ${inH}x${inW} is not square`);
    }

    const trunk = tf.model({
      inputs: model.inputs,
      outputs: layers[featureIndex].output,
    });
    // rebuild the tail functionally so it accepts reconstructed tensors
    const headInput = tf.input({ shape: [rows, cols, channels] });
    let flow: any = headInput;
    for (let i = featureIndex + 1; i < layers.length; i++) {
      flow = layers[i].apply(flow);
    }
    const head = tf.model({ inputs: headInput, outputs: flow });

    const outputShape = model.outputs[0].shape as number[];
    const classes = outputShape[outputShape.length - 1];

    return new TfjsBackend(
      tf,
      trunk,
      head,
      inH,
      rows,
      channels,
      classes,
      path.basename(path.resolve(options.modelDir)),
    );
  }

  hello(): Handshake {
    return {
      protocol: PROTOCOL_VERSION,
      grid_size: this.gridSize,
      channels: this.channels,
      classes: this.classes,
      model: this.modelId,
    };
  }

  async extract(image: string, x: number, y: number, w: number, h: number): Promise<Buffer> {
    const decoded = this.readPng(image);
    const inside =
      x >= 0 && y >= 0 && w >= 1 && h >= 1 && x + w <= decoded.width && y + h <= decoded.height;
    if (!inside) {
      throw new RequestError(
        "bad-rect",
        `rect [${x}, ${y}, ${w}, ${h}] outside ${decoded.width}x${decoded.height} image`,
      );
    }
    const tf = this.tf;
    const values = tf.tidy(() => {
      const full = tf.tensor3d(decoded.rgb, [decoded.height, decoded.width, 3]);
      const crop = tf.slice(full, [y, x, 0], [h, w, 3]).expandDims(0) as any;
      const resized = tf.image.resizeBilinear(crop, [this.inputSize, this.inputSize]);
      const features = this.trunk.predict(resized.div(255)) as any;
      return features.dataSync() as Float32Array;
    });
    return encodeFmap({
      gridSize: this.gridSize,
      channels: this.channels,
      values: Float32Array.from(values),
    });
  }

  async score(tensorBlob: Buffer): Promise<Buffer> {
    let tensor;
    try {
      tensor = decodeFmap(tensorBlob);
    } catch (err) {
      throw new RequestError("bad-payload", String(err));
    }
    if (tensor.gridSize !== this.gridSize || tensor.channels !== this.channels) {
      throw new RequestError(
        "bad-payload",
        `tensor is ${tensor.gridSize}x${tensor.gridSize}x${tensor.channels}, model expects ` +
          `${this.gridSize}x${this.gridSize}x${this.channels}`,
      );
    }
    const tf = this.tf;
    const scores = tf.tidy(() => {
      const input = tf
        .tensor(tensor.values, [1, this.gridSize, this.gridSize, this.channels]);
      return (this.head.predict(input) as any).dataSync() as Float32Array;
    });
    const out = Buffer.alloc(scores.length * 4);
    for (let i = 0; i < scores.length; i++) {
      out.writeFloatLE(scores[i], i * 4);
    }
    return out;
  }

  private readPng(image: string): { width: number; height: number; rgb: Float32Array } {
    let blob: Buffer;
    try {
      blob = fs.readFileSync(image);
    } catch (err) {
      throw new RequestError("bad-payload", `cannot read image ${image}: ${String(err)}`);
    }
    let png;
    try {
      const { PNG } = require("pngjs");
      png = PNG.sync.read(blob);
    } catch (err) {
      throw new RequestError("bad-payload", `cannot decode PNG ${image}: ${String(err)}`);
    }
    const rgb = new Float32Array(png.width * png.height * 3);
    for (let p = 0; p < png.width * png.height; p++) {
      rgb[p * 3] = png.data[p * 4];
      rgb[p * 3 + 1] = png.data[p * 4 + 1];
      rgb[p * 3 + 2] = png.data[p * 4 + 2];
    }
    return { width: png.width, height: png.height, rgb };
  }
}
