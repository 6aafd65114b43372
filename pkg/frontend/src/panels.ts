/**
 * One-shot record panels: fetch, render. A 404 renders as a not-found state
 * rather than throwing at the caller.
 */
import { GatewayError, type AuditTrail, type RecordDetail } from "./api.js";
import { renderAudit, renderNotFound, renderPolicies } from "./views.js";

/** What the panels need from a client; KeeperClient provides it. */
export interface RecordReads {
  record(recordId: string): Promise<RecordDetail>;
  audit(recordId: string): Promise<AuditTrail>;
}

export async function policyView(client: RecordReads, recordId: string): Promise<string> {
  try {
    return renderPolicies(await client.record(recordId));
  } catch (err) {
    if (err instanceof GatewayError && err.status === 404) {
      return renderNotFound(recordId);
    }
    throw err;
  }
}

export async function auditView(client: RecordReads, recordId: string): Promise<string> {
  try {
    return renderAudit(await client.audit(recordId));
  } catch (err) {
    if (err instanceof GatewayError && err.status === 404) {
      return renderNotFound(recordId);
    }
    throw err;
  }
}
