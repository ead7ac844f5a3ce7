#!/usr/bin/env node
/** Generator adapter: serves GEN requests over stdin/stdout.
 *
 * Backends: `stub` (fixed template, for protocol tests) and `ngram`
 * (seeded word-level sampler with real top-k/temperature semantics). One
 * request is in flight per process; scale by process count.
 */

import readline from "node:readline";
import { AdapterConfig, Backend, makeBackend } from "./backends.js";
import { errFrame, parseRequest, progFrame } from "./protocol.js";

function parseArgs(argv: string[]): AdapterConfig {
  const cfg: AdapterConfig = {
    model: "stub",
    topK: 10,
    maxTokens: 5000,
    temperature: 1.0,
    device: "cpu",
    seed: 0,
  };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      i++;
      if (i >= argv.length) throw new Error(`missing value for ${arg}`);
      return argv[i];
    };
    switch (arg) {
      case "--backend":
      case "--model":
        cfg.model = next();
        break;
      case "--top-k":
        cfg.topK = Number(next());
        break;
      case "--max-tokens":
        cfg.maxTokens = Number(next());
        break;
      case "--temperature":
        cfg.temperature = Number(next());
        break;
      case "--device":
        cfg.device = next();
        break;
      case "--seed":
        cfg.seed = Number(next());
        break;
      default:
        throw new Error(`unknown flag: ${arg}`);
    }
  }
  return cfg;
}

function main(): void {
  let backend: Backend;
  try {
    backend = makeBackend(parseArgs(process.argv.slice(2)));
  } catch (err) {
    // model load failure: one ERR frame, then give up
    process.stdout.write(errFrame(String(err)));
    process.exit(1);
  }

  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    if (!line.trim()) return;
    try {
      const req = parseRequest(line);
      // request values take precedence over the process-level config
      const source = backend.generate(req.header, req.maxWords, req.topK);
      process.stdout.write(progFrame(source));
    } catch (err) {
      // per-request failure: report and keep serving
      process.stdout.write(errFrame(String(err)));
    }
  });
  rl.on("close", () => process.exit(0));
}

main();
