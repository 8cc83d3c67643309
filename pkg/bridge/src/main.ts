#!/usr/bin/env node
/**
 * Entry point. Two modes:
 *
 *   fmap-bridge --echo-tensor t.fmap --echo-scores s.f32 [--image-w N --image-h N]
 *   fmap-bridge --model dir [--layer name]
 *
 * stdout carries only protocol frames; all logging goes to stderr, and
 * console.log is redirected there so library banners cannot corrupt the
 * stream.
 */

import { EchoBackend } from "./echo";
import { serve } from "./server";

// stdout is the wire; anything that logs must land on stderr
console.log = console.error.bind(console);
console.info = console.error.bind(console);
console.warn = console.error.bind(console);

interface Args {
  [key: string]: string;
}

function parseArgs(argv: string[]): Args {
  const args: Args = {};
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) {
      throw new Error(`unexpected argument ${arg}`);
    }
    const key = arg.slice(2);
    const value = argv[i + 1];
    if (value === undefined || value.startsWith("--")) {
      throw new Error(`flag --${key} needs a value`);
    }
    args[key] = value;
    i++;
  }
  return args;
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));

  if (args["echo-tensor"] || args["echo-scores"]) {
    if (!args["echo-tensor"] || !args["echo-scores"]) {
      throw new Error("echo mode needs both --echo-tensor and --echo-scores");
    }
    const backend = new EchoBackend({
      tensorPath: args["echo-tensor"],
      scoresPath: args["echo-scores"],
      imageW: parseInt(args["image-w"] ?? "224", 10),
      imageH: parseInt(args["image-h"] ?? "224", 10),
    });
    serve(backend);
    return;
  }

  if (args["model"]) {
    const { TfjsBackend } = require("./model") as typeof import("./model");
    const backend = await TfjsBackend.create({
      modelDir: args["model"],
      featureLayer: args["layer"],
    });
    serve(backend);
    return;
  }

  throw new Error(
    "usage: fmap-bridge --echo-tensor FILE --echo-scores FILE | --model DIR [--layer NAME]",
  );
}

main().catch((err) => {
  console.error(`fmap-bridge: ${err instanceof Error ? err.message : String(err)}`);
  process.exit(1);
});
