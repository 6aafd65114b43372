/**
 * Deterministic byte encoding of JSON-shaped values.
 *
 * This must produce exactly the bytes the gateway hashes when it verifies a
 * detached signature: object keys sorted by Unicode code point, integers in
 * plain decimal, strings JSON-escaped with non-ASCII characters kept raw,
 * no whitespace. Divergence by a single byte makes every signature invalid,
 * so the encoder is pinned by cross-language fixtures rather than trusted.
 */

export class EncodingError extends Error {}

export type Encodable =
  | null
  | boolean
  | number
  | bigint
  | string
  | Encodable[]
  | { [key: string]: Encodable };

/** A surrogate half without its partner; such strings have no UTF-8 form. */
const LONE_SURROGATE =
  /[\uD800-\uDBFF](?![\uDC00-\uDFFF])|(?<![\uD800-\uDBFF])[\uDC00-\uDFFF]/;

/**
 * Order strings by code point. The default string comparison orders by
 * UTF-16 code unit, which puts astral-plane characters *before* U+E000..FFFF
 * — the opposite of the byte order the chain uses for object keys.
 */
export function codePointCompare(a: string, b: string): number {
  const as = Array.from(a);
  const bs = Array.from(b);
  const n = Math.min(as.length, bs.length);
  for (let i = 0; i < n; i++) {
    const d = (as[i] as string).codePointAt(0)! - (bs[i] as string).codePointAt(0)!;
    if (d !== 0) return d;
  }
  return as.length - bs.length;
}

function encodeString(value: string, out: string[]): void {
  if (LONE_SURROGATE.test(value)) {
    throw new EncodingError("string contains a lone surrogate");
  }
  // JSON.stringify escapes exactly what the wire format escapes (quote,
  // backslash, C0 controls) and leaves everything else raw.
  out.push(JSON.stringify(value));
}

function encodeValue(value: unknown, out: string[]): void {
  if (value === null) {
    out.push("null");
  } else if (value === true) {
    out.push("true");
  } else if (value === false) {
    out.push("false");
  } else if (typeof value === "bigint") {
    out.push(value.toString(10));
  } else if (typeof value === "number") {
    if (!Number.isSafeInteger(value)) {
      throw new EncodingError(
        `only integers within the safe range are representable: ${value}`,
      );
    }
    out.push(String(value));
  } else if (typeof value === "string") {
    encodeString(value, out);
  } else if (Array.isArray(value)) {
    out.push("[");
    value.forEach((item, i) => {
      if (i) out.push(",");
      encodeValue(item, out);
    });
    out.push("]");
  } else if (typeof value === "object") {
    const record = value as Record<string, unknown>;
    out.push("{");
    Object.keys(record)
      .sort(codePointCompare)
      .forEach((key, i) => {
        if (i) out.push(",");
        encodeString(key, out);
        out.push(":");
        encodeValue(record[key], out);
      });
    out.push("}");
  } else {
    throw new EncodingError(`unrepresentable value of type ${typeof value}`);
  }
}

export function canonicalEncode(value: Encodable): Buffer {
  const out: string[] = [];
  encodeValue(value, out);
  return Buffer.from(out.join(""), "utf8");
}

/** The exact bytes a client signs for one transaction. */
export function signingPreimage(
  payload: Record<string, Encodable>,
  stateTag: string,
  timestamp: number,
  txId: string,
): Buffer {
  if (!Number.isSafeInteger(timestamp)) {
    throw new EncodingError(`timestamp must be an integer, got ${timestamp}`);
  }
  return canonicalEncode({ payload, stateTag, timestamp, txId });
}
