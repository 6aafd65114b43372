export {
  canonicalEncode,
  codePointCompare,
  signingPreimage,
  EncodingError,
  type Encodable,
} from "./canonical.js";
export {
  SigningKey,
  entityIdForPublicPem,
  voteTxId,
  KeyError,
  RSA_SHA256,
  ED25519,
  type Scheme,
} from "./signing.js";
export * from "./api.js";
export {
  KeeperClient,
  makeSession,
  DEFAULT_POLL_INTERVAL_MS,
  type ConsoleSession,
} from "./session.js";
export {
  escapeHtml,
  renderPending,
  renderPolicies,
  renderAudit,
  renderNotFound,
  type PendingEntry,
  type PendingViewModel,
} from "./views.js";
export { PendingConsole, type PendingActions } from "./console.js";
export { policyView, auditView, type RecordReads } from "./panels.js";
