/**
 * File-system save/load handlers for tfjs layers models.
 *
 * The pure-JS tfjs build has no `file://` IO handlers (those live in
 * tfjs-node), so this provides the minimal pair: `model.json` with the
 * topology and weights manifest, plus a single `weights.bin` blob.
 */

import * as fs from "fs";
import * as path from "path";

type IOHandlerLike = {
  save?: (artifacts: unknown) => Promise<unknown>;
  load?: () => Promise<unknown>;
};

export function saveHandler(directory: string): IOHandlerLike {
  return {
    async save(artifacts: any) {
      fs.mkdirSync(directory, { recursive: true });
      const weightData: ArrayBuffer = artifacts.weightData;
      const manifest = [
        {
          paths: ["weights.bin"],
          weights: artifacts.weightSpecs,
        },
      ];
      const modelJson = {
        modelTopology: artifacts.modelTopology,
        format: artifacts.format,
        generatedBy: artifacts.generatedBy,
        convertedBy: artifacts.convertedBy ?? null,
        weightsManifest: manifest,
      };
      fs.writeFileSync(path.join(directory, "model.json"), JSON.stringify(modelJson));
      fs.writeFileSync(path.join(directory, "weights.bin"), Buffer.from(weightData));
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: "JSON",
        },
      };
    },
  };
}

export function loadHandler(directory: string): IOHandlerLike {
  return {
    async load() {
      const modelJson = JSON.parse(
        fs.readFileSync(path.join(directory, "model.json"), "utf8"),
      );
      const manifest = modelJson.weightsManifest ?? [];
      const weightSpecs = manifest.flatMap((group: any) => group.weights);
      const blobs = manifest.flatMap((group: any) =>
        group.paths.map((p: string) => fs.readFileSync(path.join(directory, p))),
      );
      const total = blobs.reduce((n: number, b: Buffer) => n + b.length, 0);
      const weightData = new Uint8Array(total);
      let offset = 0;
      for (const blob of blobs) {
        weightData.set(blob, offset);
        offset += blob.length;
      }
      return {
        modelTopology: modelJson.modelTopology,
        format: modelJson.format,
        generatedBy: modelJson.generatedBy,
        convertedBy: modelJson.convertedBy,
        weightSpecs,
        weightData: weightData.buffer,
      };
    },
  };
}
