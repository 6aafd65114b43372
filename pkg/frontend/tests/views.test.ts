import { describe, expect, it } from "vitest";

import {
  AuditTrailSchema,
  DecisionSchema,
  ErrorBodySchema,
  InfoSchema,
  PendingAckSchema,
  PendingListSchema,
  RecordDetailSchema,
  type AuditTrail,
  type RecordDetail,
} from "../src/api.js";
import {
  escapeHtml,
  renderAudit,
  renderNotFound,
  renderPending,
  renderPolicies,
} from "../src/views.js";
import { loadFixture } from "./fixtures.js";

const recordDetail = RecordDetailSchema.parse(loadFixture("api/record.json"));
const pendingList = PendingListSchema.parse(loadFixture("api/pending.json"));
const pendingEmpty = PendingListSchema.parse(loadFixture("api/pending_empty.json"));
const auditTrail = AuditTrailSchema.parse(loadFixture("api/audit.json"));

describe("recorded responses parse under the client schemas", () => {
  it("info", () => {
    const info = InfoSchema.parse(loadFixture("api/info.json"));
    expect(info.readOnly).toBe(false);
  });

  it("decisions and error bodies", () => {
    const d = loadFixture<Record<string, unknown>>("api/decisions.json");
    expect(DecisionSchema.parse(d.grant).outcome).toBe("GRANT");
    expect(DecisionSchema.parse(d.grant).location).toBeDefined();
    expect(DecisionSchema.parse(d.deny).outcome).toBe("DENY");
    expect(PendingAckSchema.parse(d.pendingAck).status).toBe("PENDING");
    expect(ErrorBodySchema.parse(d.duplicateTx).code).toBe("DUPLICATE_TX");
    expect(ErrorBodySchema.parse(d.duplicateVote).code).toBe("DUPLICATE_VOTE");
  });
});

describe("policy view", () => {
  const html = renderPolicies(recordDetail);

  it("shows a Revoke control on GRANTED rows only", () => {
    const granted = recordDetail.policies.find((p) => p.status === "GRANTED")!;
    const denied = recordDetail.policies.find((p) => p.status === "DENIED")!;
    const rowOf = (id: string) =>
      html.split("<tr").find((part) => part.includes(`data-request-id="${id}"`))!;
    expect(rowOf(granted.requestId)).toContain('data-action="revoke"');
    expect(rowOf(denied.requestId)).not.toContain('data-action="revoke"');
  });

  it("copies every status string from the response verbatim", () => {
    // rename the statuses to nonsense: the page must follow the response,
    // proving no status is computed or normalized on this side
    const mutated: RecordDetail = {
      ...recordDetail,
      status: "STATE_A",
      policies: recordDetail.policies.map((p, i) => ({
        ...p,
        status: `STATE_B${i}`,
      })),
    };
    const page = renderPolicies(mutated);
    expect(page).toContain("STATE_A");
    recordDetail.policies.forEach((_, i) => expect(page).toContain(`STATE_B${i}`));
    for (const original of ["ACTIVE", "GRANTED", "DENIED"]) {
      expect(page).not.toContain(original);
    }
  });

  it("renders an empty state when a record has no policies", () => {
    const page = renderPolicies({ ...recordDetail, policies: [] });
    expect(page).toContain("empty-state");
    expect(page).not.toContain("<table");
  });
});

describe("pending view", () => {
  it("renders one item with Grant and Deny controls", () => {
    const html = renderPending({
      keeper: pendingList.keeper,
      items: pendingList.pending,
    });
    const item = pendingList.pending[0]!;
    expect(html).toContain(`data-request-id="${item.requestId}"`);
    expect(html).toContain('data-action="grant"');
    expect(html).toContain('data-action="deny"');
    expect(html).toContain(item.party);
    expect(html).toContain(item.level);
  });

  it("renders the empty state for an empty pending set", () => {
    const html = renderPending({
      keeper: pendingEmpty.keeper,
      items: pendingEmpty.pending,
    });
    expect(html).toContain("No pending access requests.");
    expect(html).not.toContain("<ul");
  });

  it("shows inline errors on their item", () => {
    const item = { ...pendingList.pending[0]!, error: "NOT_KEEPER: nope" };
    const html = renderPending({ keeper: "k", items: [item] });
    expect(html).toContain('<span class="error">NOT_KEEPER: nope</span>');
  });
});

describe("audit view", () => {
  it("renders entries in exactly the order the gateway sent", () => {
    const order = (trail: AuditTrail) =>
      [...renderAudit(trail).matchAll(/data-tx-id="([^"]*)"/g)].map((m) => m[1]);
    const sent = auditTrail.entries.map((e) => String(e.tx.txId));
    expect(order(auditTrail)).toEqual(sent);
    const reversed: AuditTrail = {
      ...auditTrail,
      entries: [...auditTrail.entries].reverse(),
    };
    expect(order(reversed)).toEqual([...sent].reverse());
  });

  it("labels entries with block index and state tag", () => {
    const html = renderAudit(auditTrail);
    const first = auditTrail.entries[0]!;
    expect(html).toContain(`#${first.blockIndex}`);
    expect(html).toContain(String(first.tx.stateTag));
  });
});

describe("escaping", () => {
  it("neutralizes markup in interpolated fields", () => {
    expect(escapeHtml(`<img src=x onerror="x('a')">&`)).toBe(
      "&lt;img src=x onerror=&quot;x(&#39;a&#39;)&quot;&gt;&amp;",
    );
    const html = renderPending({
      keeper: "k",
      items: [
        {
          ...pendingList.pending[0]!,
          party: "<script>alert(1)</script>",
        },
      ],
    });
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });

  it("renders a not-found state", () => {
    expect(renderNotFound("ehr9")).toContain("Unknown record: ehr9");
  });
});
