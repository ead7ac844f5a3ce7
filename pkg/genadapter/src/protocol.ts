/** Wire protocol framing: `GEN <max_words> <top_k> <base64(header)>` in,
 *  `PROG <byte_count>\n<payload>` or `ERR <message>\n` out. */

export interface GenRequest {
  maxWords: number;
  topK: number;
  header: string;
}

export function parseRequest(line: string): GenRequest {
  const parts = line.trim().split(/\s+/);
  if (parts.length !== 4 || parts[0] !== "GEN") {
    throw new Error(`malformed request: ${line.slice(0, 80)}`);
  }
  const maxWords = Number(parts[1]);
  const topK = Number(parts[2]);
  if (!Number.isInteger(maxWords) || maxWords <= 0 ||
      !Number.isInteger(topK) || topK <= 0) {
    throw new Error(`bad numeric fields in request: ${line.slice(0, 80)}`);
  }
  let header: string;
  try {
    header = Buffer.from(parts[3], "base64").toString("utf8");
  } catch (err) {
    throw new Error(`undecodable header: ${err}`);
  }
  return { maxWords, topK, header };
}

export function progFrame(source: string): Buffer {
  const payload = Buffer.from(source, "utf8");
  const head = Buffer.from(`PROG ${payload.length}\n`, "utf8");
  return Buffer.concat([head, payload]);
}

export function errFrame(message: string): Buffer {
  return Buffer.from(`ERR ${message.replace(/\n/g, " ")}\n`, "utf8");
}
