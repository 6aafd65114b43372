/**
 * A keeper's console session: who they are, which gateway they talk to, and
 * the local key that signs every action. The key object stays in memory on
 * this side of the wire for the whole session.
 */
import { signingPreimage } from "./canonical.js";
import { Gateway, type FetchLike } from "./api.js";
import type { AuditTrail, PendingItem, RecordDetail, VoteAck } from "./api.js";
import { SigningKey, voteTxId } from "./signing.js";

export const DEFAULT_POLL_INTERVAL_MS = 2_000;

export interface ConsoleSession {
  keeper: string;
  key: SigningKey;
  gatewayBase: string;
  pollIntervalMs: number;
}

export function makeSession(
  keeper: string,
  key: SigningKey,
  gatewayBase: string,
  pollIntervalMs: number = DEFAULT_POLL_INTERVAL_MS,
): ConsoleSession {
  return { keeper, key, gatewayBase, pollIntervalMs };
}

/** The keeper-facing slice of the gateway API, with signing attached. */
export class KeeperClient {
  readonly gateway: Gateway;

  constructor(
    readonly session: ConsoleSession,
    fetchFn?: FetchLike,
    readonly now: () => number = Date.now,
  ) {
    this.gateway = new Gateway(session.gatewayBase, fetchFn);
  }

  pending(): Promise<PendingItem[]> {
    return this.gateway.pending(this.session.keeper);
  }

  record(recordId: string): Promise<RecordDetail> {
    return this.gateway.record(recordId);
  }

  audit(recordId: string): Promise<AuditTrail> {
    return this.gateway.audit(recordId);
  }

  grant(requestId: string): Promise<VoteAck> {
    return this.vote(requestId, "GRANT");
  }

  deny(requestId: string): Promise<VoteAck> {
    return this.vote(requestId, "DENY");
  }

  private vote(requestId: string, verdict: "GRANT" | "DENY"): Promise<VoteAck> {
    const { keeper, key } = this.session;
    const timestamp = this.now();
    const stateTag = verdict === "GRANT" ? "AUTH_GRANT" : "AUTH_DENY";
    const signature = key.sign(
      signingPreimage({ requestId }, stateTag, timestamp, voteTxId(requestId, keeper)),
    );
    return this.gateway.authorize({ requestId, keeper, verdict, timestamp }, signature);
  }

  revoke(requestId: string): Promise<VoteAck> {
    const { keeper, key } = this.session;
    const timestamp = this.now();
    const signature = key.sign(
      signingPreimage({ requestId }, "AUTH_REVOKE", timestamp, voteTxId(requestId, keeper)),
    );
    return this.gateway.revoke({ requestId, keeper, timestamp }, signature);
  }
}
