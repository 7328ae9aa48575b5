// Credential and presentation primitives, byte-compatible with the node:
// digest[attr] = SHA-256(attr || 0x00 || salt || 0x00 || value), issuer
// signature over {credDefId, credId, digests, holderDid}, holder
// signature over {credId, disclosedAttrNames, nonce}.

import { canonicalBytes, CanonicalValue } from "./canonical.js";
import { bytesToHex, hexToBytes, randomBytes, sha256Hex, signHex } from "./qcrypto.js";

export interface Credential {
  credId: string;
  credDefId: string;
  holderDid: string;
  attrs: Record<string, string>;
  salts: Record<string, string>;
  issuerSignature: string;
}

export interface Presentation {
  credId: string;
  credDefId: string;
  holderDid: string;
  disclosed: Record<string, { value: string; salt: string }>;
  digests: Record<string, string>;
  issuerSignature: string;
  nonce: string;
  holderSignature: string;
}

export async function attributeDigest(
  attr: string,
  saltHex: string,
  value: string
): Promise<string> {
  const encoder = new TextEncoder();
  const attrBytes = encoder.encode(attr);
  const valueBytes = encoder.encode(value);
  const salt = hexToBytes(saltHex);
  const preimage = new Uint8Array(attrBytes.length + salt.length + valueBytes.length + 2);
  preimage.set(attrBytes, 0);
  preimage[attrBytes.length] = 0;
  preimage.set(salt, attrBytes.length + 1);
  preimage[attrBytes.length + 1 + salt.length] = 0;
  preimage.set(valueBytes, attrBytes.length + salt.length + 2);
  return sha256Hex(preimage);
}

async function digestMap(
  attrs: Record<string, string>,
  salts: Record<string, string>
): Promise<Record<string, string>> {
  const digests: Record<string, string> = {};
  for (const attr of Object.keys(attrs)) {
    digests[attr] = await attributeDigest(attr, salts[attr], attrs[attr]);
  }
  return digests;
}

function credentialSigningDoc(
  credId: string,
  credDefId: string,
  holderDid: string,
  digests: Record<string, string>
): CanonicalValue {
  return { credDefId, credId, digests, holderDid };
}

function presentationSigningDoc(
  credId: string,
  nonce: string,
  disclosedNames: string[]
): CanonicalValue {
  return { credId, disclosedAttrNames: [...disclosedNames].sort(), nonce };
}

/** Issue a credential (issuer-side; used by admin tooling and tests). */
export async function issueCredential(
  issuerSeedHex: string,
  credDefId: string,
  holderDid: string,
  attrs: Record<string, string>,
  credId?: string
): Promise<Credential> {
  const salts: Record<string, string> = {};
  for (const attr of Object.keys(attrs)) {
    salts[attr] = bytesToHex(randomBytes(16));
  }
  const digests = await digestMap(attrs, salts);
  const id = credId ?? `cred:${bytesToHex(randomBytes(8))}`;
  const issuerSignature = await signHex(
    issuerSeedHex,
    canonicalBytes(credentialSigningDoc(id, credDefId, holderDid, digests))
  );
  return { credId: id, credDefId, holderDid, attrs, salts, issuerSignature };
}

/** Build a selective-disclosure presentation; empty disclosure proves
 * possession only, which is all the write paths ever need. */
export async function createPresentation(
  credential: Credential,
  discloseNames: string[],
  nonce: string,
  holderSeedHex: string
): Promise<Presentation> {
  for (const name of discloseNames) {
    if (!(name in credential.attrs)) throw new Error(`unknown attribute ${name}`);
  }
  const digests = await digestMap(credential.attrs, credential.salts);
  const disclosed: Presentation["disclosed"] = {};
  for (const name of discloseNames) {
    disclosed[name] = { value: credential.attrs[name], salt: credential.salts[name] };
  }
  const holderSignature = await signHex(
    holderSeedHex,
    canonicalBytes(presentationSigningDoc(credential.credId, nonce, discloseNames))
  );
  return {
    credId: credential.credId,
    credDefId: credential.credDefId,
    holderDid: credential.holderDid,
    disclosed,
    digests,
    issuerSignature: credential.issuerSignature,
    nonce,
    holderSignature,
  };
}

export interface SignedProposal {
  txId: string;
  function: string;
  args: string[];
  submitterDid: string;
  clientSignature: string;
}

/** Sign a chaincode proposal (issuer-gated gateway endpoints take these). */
export async function signProposal(
  functionName: string,
  payload: CanonicalValue,
  submitterDid: string,
  seedHex: string,
  txId?: string
): Promise<SignedProposal> {
  const id = txId ?? `tx-${bytesToHex(randomBytes(12))}`;
  const args = [new TextDecoder().decode(canonicalBytes(payload))];
  const unsigned: CanonicalValue = {
    args,
    function: functionName,
    submitterDid,
    txId: id,
  };
  const clientSignature = await signHex(seedHex, canonicalBytes(unsigned));
  return { txId: id, function: functionName, args, submitterDid, clientSignature };
}
