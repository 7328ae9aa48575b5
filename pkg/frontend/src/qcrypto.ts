// Ed25519 + SHA-256 over WebCrypto. Works in the browser and under Node
// (vitest); Node's webcrypto is only imported when the global is missing.

const PKCS8_ED25519_PREFIX = "302e020100300506032b657004220420";

let subtlePromise: Promise<SubtleCrypto> | null = null;

async function getSubtle(): Promise<SubtleCrypto> {
  if (!subtlePromise) {
    subtlePromise = (async () => {
      if (globalThis.crypto?.subtle) return globalThis.crypto.subtle;
      const nodeCrypto = await import("node:crypto");
      return nodeCrypto.webcrypto.subtle as unknown as SubtleCrypto;
    })();
  }
  return subtlePromise;
}

export function bytesToHex(bytes: Uint8Array): string {
  return [...bytes].map((b) => b.toString(16).padStart(2, "0")).join("");
}

export function hexToBytes(hex: string): Uint8Array {
  if (hex.length % 2 !== 0 || /[^0-9a-f]/.test(hex)) {
    throw new Error("bad hex string");
  }
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

export function randomBytes(length: number): Uint8Array {
  const out = new Uint8Array(length);
  globalThis.crypto.getRandomValues(out);
  return out;
}

export async function sha256Hex(data: Uint8Array): Promise<string> {
  const subtle = await getSubtle();
  const digest = await subtle.digest("SHA-256", data as BufferSource);
  return bytesToHex(new Uint8Array(digest));
}

export interface KeyPair {
  seedHex: string;
  publicHex: string;
}

async function importSigningKey(seedHex: string, extractable = false) {
  const subtle = await getSubtle();
  const pkcs8 = hexToBytes(PKCS8_ED25519_PREFIX + seedHex);
  return subtle.importKey("pkcs8", pkcs8 as BufferSource, { name: "Ed25519" },
    extractable, ["sign"]);
}

function base64urlToBytes(b64url: string): Uint8Array {
  const b64 = b64url.replace(/-/g, "+").replace(/_/g, "/");
  const padded = b64 + "=".repeat((4 - (b64.length % 4)) % 4);
  const raw = atob(padded);
  return Uint8Array.from(raw, (c) => c.charCodeAt(0));
}

export async function publicKeyHex(seedHex: string): Promise<string> {
  const subtle = await getSubtle();
  const key = await importSigningKey(seedHex, true);
  const jwk = await subtle.exportKey("jwk", key);
  if (!jwk.x) throw new Error("key export yielded no public part");
  return bytesToHex(base64urlToBytes(jwk.x));
}

export async function generateKeyPair(): Promise<KeyPair> {
  const seedHex = bytesToHex(randomBytes(32));
  return { seedHex, publicHex: await publicKeyHex(seedHex) };
}

export async function signHex(seedHex: string, message: Uint8Array): Promise<string> {
  const subtle = await getSubtle();
  const key = await importSigningKey(seedHex);
  const signature = await subtle.sign("Ed25519", key, message as BufferSource);
  return bytesToHex(new Uint8Array(signature));
}

export async function verifySignature(
  publicHex: string,
  message: Uint8Array,
  signatureHex: string
): Promise<boolean> {
  const subtle = await getSubtle();
  try {
    const key = await subtle.importKey(
      "raw", hexToBytes(publicHex) as BufferSource, { name: "Ed25519" },
      false, ["verify"]
    );
    return await subtle.verify(
      "Ed25519", key, hexToBytes(signatureHex) as BufferSource,
      message as BufferSource
    );
  } catch {
    return false;
  }
}
