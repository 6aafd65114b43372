/**
 * Client-side signing. The private key is loaded from a local PEM file and
 * never leaves the process: mutating API calls carry only a detached
 * signature over the canonical transaction preimage.
 */
import {
  createHash,
  createPrivateKey,
  createPublicKey,
  sign as cryptoSign,
  type KeyObject,
} from "node:crypto";

export const RSA_SHA256 = "rsa-sha256";
export const ED25519 = "ed25519";
export type Scheme = typeof RSA_SHA256 | typeof ED25519;

const ENTITY_ID_HEX_CHARS = 32;

export class KeyError extends Error {}

/** Entity ids are a truncated digest of the public key PEM file. */
export function entityIdForPublicPem(publicPem: string): string {
  return createHash("sha256")
    .update(publicPem, "utf8")
    .digest("hex")
    .slice(0, ENTITY_ID_HEX_CHARS);
}

/**
 * A keeper's vote and a later revocation of it are two states of one
 * logical item and share this derived transaction id.
 */
export function voteTxId(requestId: string, keeper: string): string {
  return createHash("sha256")
    .update(`auth:${requestId}:${keeper}`, "utf8")
    .digest("hex")
    .slice(0, ENTITY_ID_HEX_CHARS);
}

export class SigningKey {
  private constructor(
    readonly scheme: Scheme,
    private readonly key: KeyObject,
    readonly publicPem: string,
  ) {}

  static fromPem(pem: string | Buffer): SigningKey {
    let key: KeyObject;
    try {
      key = createPrivateKey(pem);
    } catch (err) {
      throw new KeyError(`cannot load private key: ${(err as Error).message}`);
    }
    const type = key.asymmetricKeyType;
    const scheme =
      type === "rsa" ? RSA_SHA256 : type === "ed25519" ? ED25519 : null;
    if (scheme === null) {
      throw new KeyError(`unsupported private key type: ${type}`);
    }
    const publicPem = createPublicKey(key)
      .export({ type: "spki", format: "pem" })
      .toString();
    return new SigningKey(scheme, key, publicPem);
  }

  get entityId(): string {
    return entityIdForPublicPem(this.publicPem);
  }

  sign(message: Buffer): Buffer {
    if (this.scheme === RSA_SHA256) {
      // RSASSA-PKCS1-v1_5 over SHA-256 (node's default RSA padding)
      return cryptoSign("sha256", message, this.key);
    }
    // the wire scheme is Ed25519 over the SHA-256 digest of the message
    const digest = createHash("sha256").update(message).digest();
    return cryptoSign(null, digest, this.key);
  }
}
