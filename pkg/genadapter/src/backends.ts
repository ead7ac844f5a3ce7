import { mulberry32, weightedPick } from "./rng.js";

export const END_TOKEN = "<EOF>";

export interface AdapterConfig {
  /** backend identifier ("stub" or "ngram"); a real model would slot in here */
  model: string;
  /** fallback sampling width; the per-request value takes precedence */
  topK: number;
  /** hard ceiling on emitted tokens regardless of the request's word cap */
  maxTokens: number;
  /** scaling of successor weights; 1 = table weights as-is */
  temperature: number;
  /** placement hint (cpu/gpu); advisory only for the bundled backends */
  device: string;
  seed: number;
}

export interface Backend {
  /** Produce one program starting with the seed header, stop rules applied. */
  generate(header: string, maxWords: number, topK: number): string;
}

function wordCount(text: string): number {
  return text.split(/\s+/).filter(Boolean).length;
}

function braceDelta(text: string): number {
  let depth = 0;
  for (const ch of text) {
    if (ch === "{") depth++;
    else if (ch === "}") depth--;
  }
  return depth;
}

/** Fixed-template backend: deterministic output, used by protocol tests. */
export class StubBackend implements Backend {
  generate(header: string, maxWords: number, _topK: number): string {
    const closer = header.trimStart().startsWith("var ") ? "};" : "}";
    const body = [
      header,
      "  var left = 41;",
      "  var right = 1;",
      "  var sum = left + right;",
      "  return sum;",
      closer,
    ].join("\n") + "\n";
    if (wordCount(body) <= maxWords) return body;
    // degenerate caps: emit the smallest closed form that still fits
    return header + "\n" + closer + "\n";
  }
}

// Tiny training corpus for the n-gram chain; token transitions learned at
// startup. Statements are flattened to whitespace-separated tokens.
const CORPUS = `
var a = 1 ; var b = 2 ; var c = a + b ; var s = "hello" ; var t = s + "!" ;
var n = 7 ; n = n * 2 ; var m = n - b ; var flag = true ; var list = [ 1 , 2 ] ;
if ( a > b ) { a = a - 1 ; } if ( n > 4 ) { n = n - 2 ; }
for ( var i = 0 ; i < 4 ; i = i + 1 ) { b = b + i ; }
var r = s . substr ( a , b ) ; var w = s . charAt ( a ) ; var q = t . indexOf ( s ) ;
var f = n . toFixed ( b ) ; var g = Math . max ( a , n ) ; var h = parseInt ( s , 10 ) ;
return r ; return n ; return s ;
`;

type Table = Map<string, Array<[string, number]>>;

function buildTable(): Table {
  const tokens = CORPUS.split(/\s+/).filter(Boolean);
  const counts = new Map<string, Map<string, number>>();
  for (let i = 0; i < tokens.length - 1; i++) {
    const cur = tokens[i];
    const next = tokens[i + 1];
    if (!counts.has(cur)) counts.set(cur, new Map());
    const row = counts.get(cur)!;
    row.set(next, (row.get(next) ?? 0) + 1);
  }
  // statement ends may also finish the program
  const semis = counts.get(";") ?? new Map<string, number>();
  semis.set(END_TOKEN, 1);
  counts.set(";", semis);
  const table: Table = new Map();
  for (const [cur, row] of counts) {
    const entries = [...row.entries()].sort((x, y) =>
      y[1] - x[1] || (x[0] < y[0] ? -1 : 1));
    table.set(cur, entries);
  }
  return table;
}

/**
 * Seeded word-level n-gram sampler with top-k truncation and temperature.
 * Not a pretrained network, but it exercises exactly the sampling contract a
 * real model backend would implement behind the same interface.
 */
export class NgramBackend implements Backend {
  private table: Table;
  private rng: () => number;
  private cfg: AdapterConfig;

  constructor(cfg: AdapterConfig) {
    this.cfg = cfg;
    this.table = buildTable();
    this.rng = mulberry32(cfg.seed);
  }

  private sampleNext(current: string, topK: number): string {
    const successors = this.table.get(current) ?? this.table.get(";")!;
    const k = Math.max(1, Math.min(topK, successors.length));
    const truncated = successors.slice(0, k);
    const invTemp = 1 / Math.max(this.cfg.temperature, 1e-6);
    const weighted: Array<[string, number]> = truncated.map(
      ([token, count]) => [token, Math.pow(count, invTemp)]);
    return weightedPick(weighted, this.rng);
  }

  generate(header: string, maxWords: number, topK: number): string {
    const k = topK > 0 ? topK : this.cfg.topK;
    const cap = Math.min(maxWords, this.cfg.maxTokens);
    const headerWords = wordCount(header);
    let depth = Math.max(braceDelta(header), 1);
    const out: string[] = [];
    let current = "var";
    let produced = headerWords;
    while (produced < cap) {
      const next = this.sampleNext(current, k);
      if (next === END_TOKEN) break; // the model chose to stop
      if (next === "}" && depth <= 1) {
        out.push(header.trimStart().startsWith("var ") ? "};" : "}");
        depth = 0;
        break; // brackets balanced closes the program
      }
      if (next === "{") depth++;
      else if (next === "}") depth--;
      out.push(next);
      produced++;
      current = next;
    }
    let body = out.join(" ");
    // close whatever is still open so well-behaved callers see balance
    while (depth > 0) {
      body += depth === 1 && header.trimStart().startsWith("var ")
        ? "\n};" : "\n}";
      depth--;
    }
    const source = header + "\n" + body + "\n";
    if (wordCount(source) > maxWords) {
      return source.split(/\s+/).filter(Boolean).slice(0, maxWords).join(" ");
    }
    return source;
  }
}

export function makeBackend(cfg: AdapterConfig): Backend {
  if (cfg.model === "stub") return new StubBackend();
  if (cfg.model === "ngram") return new NgramBackend(cfg);
  throw new Error(`unknown model backend: ${cfg.model}`);
}
