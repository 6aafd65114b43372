/**
 * Typed client for the node gateway's HTTP/JSON API.
 *
 * Every response is validated against a schema before use, and every status
 * string the UI later shows is carried through verbatim — the console never
 * computes policy state, it displays what the gateway said.
 */
import { z } from "zod";

export const InfoSchema = z.object({
  node: z.string(),
  height: z.number().int(),
  mempool: z.number().int(),
  records: z.number().int(),
  readOnly: z.boolean(),
  scheme: z.string(),
  difficulty: z.number().int(),
});
export type NodeInfo = z.infer<typeof InfoSchema>;

export const PendingItemSchema = z.object({
  requestId: z.string(),
  record: z.string(),
  party: z.string(),
  level: z.string(),
  keeper: z.string(),
  since: z.number().int(),
});
export type PendingItem = z.infer<typeof PendingItemSchema>;

export const PendingListSchema = z.object({
  keeper: z.string(),
  pending: z.array(PendingItemSchema),
});

export const PolicyRowSchema = z.object({
  requestId: z.string(),
  party: z.string(),
  level: z.string(),
  status: z.string(),
  expiry: z.number().int().nullable(),
  since: z.number().int(),
});
export type PolicyRow = z.infer<typeof PolicyRowSchema>;

export const RecordSummarySchema = z.object({
  record: z.string(),
  keepers: z.array(z.string()),
  agreement: z.string(),
  location: z.string(),
  status: z.string(),
});
export type RecordSummary = z.infer<typeof RecordSummarySchema>;

export const RecordDetailSchema = RecordSummarySchema.extend({
  policies: z.array(PolicyRowSchema),
});
export type RecordDetail = z.infer<typeof RecordDetailSchema>;

export const AuditEntrySchema = z.object({
  blockIndex: z.number().int(),
  tx: z.record(z.unknown()),
});
export type AuditEntry = z.infer<typeof AuditEntrySchema>;

export const AuditTrailSchema = z.object({
  record: z.string(),
  entries: z.array(AuditEntrySchema),
});
export type AuditTrail = z.infer<typeof AuditTrailSchema>;

export const DecisionSchema = z.object({
  outcome: z.enum(["GRANT", "DENY"]),
  reason: z.string().nullable(),
  policyRef: z.string().nullable(),
  location: z.string().optional(),
});
export type AccessDecision = z.infer<typeof DecisionSchema>;

export const PendingAckSchema = z.object({
  requestId: z.string(),
  status: z.literal("PENDING"),
});
export type PendingAck = z.infer<typeof PendingAckSchema>;

export const VoteAckSchema = z.object({
  requestId: z.string(),
  status: z.string(),
  provisional: z.boolean(),
});
export type VoteAck = z.infer<typeof VoteAckSchema>;

export const SubmitAckSchema = z.object({ txId: z.string() });

export const ErrorBodySchema = z.object({
  code: z.string(),
  message: z.string(),
});

export const ChainVerdictSchema = z.object({
  valid: z.boolean(),
  index: z.number().int().nullable(),
  reason: z.string().nullable(),
});

/** A rejection from the gateway, carrying its stable error code. */
export class GatewayError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(`${code}: ${detail}`);
    this.name = "GatewayError";
  }
}

export type FetchLike = (
  url: string,
  init: {
    method: string;
    headers: Record<string, string>;
    body?: string;
  },
) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}>;

export interface AccessRequestBody {
  party: string;
  record: string;
  level: string;
  requestId: string;
  timestamp: number;
  expiry?: number;
}

export interface VoteBody {
  requestId: string;
  keeper: string;
  verdict: "GRANT" | "DENY";
  timestamp: number;
}

export interface RevokeBody {
  requestId: string;
  keeper: string;
  timestamp: number;
}

export interface RecordCreateBody {
  record: string;
  author: string;
  keepers: string[];
  agreement: string;
  location: string;
  txId: string;
  timestamp: number;
}

export class Gateway {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly base: string,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? (fetch as unknown as FetchLike);
  }

  private async call(
    method: string,
    path: string,
    body?: unknown,
    signature?: Buffer,
  ): Promise<{ status: number; json: unknown }> {
    const headers: Record<string, string> = {};
    const init: Parameters<FetchLike>[1] = { method, headers };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    if (signature !== undefined) {
      headers["X-Signature"] = signature.toString("base64");
    }
    const res = await this.fetchFn(new URL(path, this.base).toString(), init);
    const json: unknown = await res.json();
    if (!res.ok) {
      const parsed = ErrorBodySchema.safeParse(json);
      if (parsed.success) {
        throw new GatewayError(res.status, parsed.data.code, parsed.data.message);
      }
      throw new GatewayError(res.status, `HTTP_${res.status}`, JSON.stringify(json));
    }
    return { status: res.status, json };
  }

  async info(): Promise<NodeInfo> {
    return InfoSchema.parse((await this.call("GET", "/")).json);
  }

  async pending(keeper: string): Promise<PendingItem[]> {
    const path = `/pending?keeper=${encodeURIComponent(keeper)}`;
    return PendingListSchema.parse((await this.call("GET", path)).json).pending;
  }

  async records(): Promise<RecordSummary[]> {
    const json = (await this.call("GET", "/records")).json;
    return z.object({ records: z.array(RecordSummarySchema) }).parse(json).records;
  }

  async record(recordId: string): Promise<RecordDetail> {
    const path = `/records/${encodeURIComponent(recordId)}`;
    return RecordDetailSchema.parse((await this.call("GET", path)).json);
  }

  async audit(recordId: string): Promise<AuditTrail> {
    const path = `/audit?record=${encodeURIComponent(recordId)}`;
    return AuditTrailSchema.parse((await this.call("GET", path)).json);
  }

  async validateChain(): Promise<z.infer<typeof ChainVerdictSchema>> {
    return ChainVerdictSchema.parse((await this.call("GET", "/chain/validate")).json);
  }

  /** 202 means queued for keeper review; 200 carries a decision from chain. */
  async requestAccess(
    body: AccessRequestBody,
    signature: Buffer,
  ): Promise<{ decided: false; ack: PendingAck } | { decided: true; decision: AccessDecision }> {
    const res = await this.call("POST", "/access-requests", body, signature);
    if (res.status === 202) {
      return { decided: false, ack: PendingAckSchema.parse(res.json) };
    }
    return { decided: true, decision: DecisionSchema.parse(res.json) };
  }

  async authorize(body: VoteBody, signature: Buffer): Promise<VoteAck> {
    const res = await this.call("POST", "/authorizations", body, signature);
    return VoteAckSchema.parse(res.json);
  }

  async revoke(body: RevokeBody, signature: Buffer): Promise<VoteAck> {
    const res = await this.call("POST", "/revocations", body, signature);
    return VoteAckSchema.parse(res.json);
  }

  async createRecord(body: RecordCreateBody, signature: Buffer): Promise<string> {
    const res = await this.call("POST", "/records", body, signature);
    return SubmitAckSchema.parse(res.json).txId;
  }
}
