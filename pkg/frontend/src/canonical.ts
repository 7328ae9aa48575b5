// Canonical JSON, byte-compatible with the node's encoder: object keys
// sorted by UTF-8 byte order (== code point order), no whitespace,
// integers only. Signatures and digests on both sides depend on this.

export type CanonicalValue =
  | null
  | boolean
  | number
  | string
  | CanonicalValue[]
  | { [key: string]: CanonicalValue };

function compareCodePoints(a: string, b: string): number {
  // UTF-16 comparison misorders non-BMP vs BMP; compare real code points
  const ai = [...a];
  const bi = [...b];
  const n = Math.min(ai.length, bi.length);
  for (let i = 0; i < n; i++) {
    const ca = ai[i].codePointAt(0)!;
    const cb = bi[i].codePointAt(0)!;
    if (ca !== cb) return ca - cb;
  }
  return ai.length - bi.length;
}

export function canonicalStringify(value: CanonicalValue): string {
  if (value === null) return "null";
  if (value === true) return "true";
  if (value === false) return "false";
  if (typeof value === "number") {
    if (!Number.isInteger(value) || !Number.isSafeInteger(value)) {
      throw new Error(`only safe integers are canonically encodable, got ${value}`);
    }
    return String(value);
  }
  if (typeof value === "string") {
    return JSON.stringify(value); // same escaping rules as the node side
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalStringify).join(",") + "]";
  }
  if (typeof value === "object") {
    const keys = Object.keys(value).sort(compareCodePoints);
    const parts = keys.map(
      (k) => JSON.stringify(k) + ":" + canonicalStringify(value[k])
    );
    return "{" + parts.join(",") + "}";
  }
  throw new Error(`unsupported type ${typeof value}`);
}

export function canonicalBytes(value: CanonicalValue): Uint8Array {
  return new TextEncoder().encode(canonicalStringify(value));
}
