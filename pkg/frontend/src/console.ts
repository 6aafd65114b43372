/**
 * The pending-approvals controller: holds the list a keeper is looking at,
 * applies their grant/deny actions optimistically, and reconciles with the
 * gateway on a poll loop. One mutation may be in flight per item at a time.
 */
import { GatewayError, type PendingItem } from "./api.js";
import type { ConsoleSession } from "./session.js";
import { renderPending, type PendingEntry } from "./views.js";

/** What the controller needs from a client; KeeperClient provides it. */
export interface PendingActions {
  readonly session: ConsoleSession;
  pending(): Promise<PendingItem[]>;
  grant(requestId: string): Promise<unknown>;
  deny(requestId: string): Promise<unknown>;
}

/**
 * Both codes mean "this keeper's vote already exists": the node dedups an
 * identical re-vote as a duplicate transaction, and the lifecycle rejects a
 * conflicting verdict as a duplicate vote. Either way the shown list was
 * stale, not wrong — drop it and re-fetch.
 */
const STALE_VOTE_CODES = new Set(["DUPLICATE_VOTE", "DUPLICATE_TX"]);

export class PendingConsole {
  private items: PendingEntry[] = [];
  private errors = new Map<string, string>();
  private inFlight = new Set<string>();
  private offline: string | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private readonly client: PendingActions) {}

  /** Server truth replaces the list; inline errors survive for items still shown. */
  async refresh(): Promise<void> {
    const fresh = await this.client.pending();
    this.offline = null;
    const still = new Set(fresh.map((i) => i.requestId));
    for (const id of this.errors.keys()) {
      if (!still.has(id)) this.errors.delete(id);
    }
    this.items = fresh;
  }

  grant(requestId: string): Promise<void> {
    return this.act(requestId, () => this.client.grant(requestId));
  }

  deny(requestId: string): Promise<void> {
    return this.act(requestId, () => this.client.deny(requestId));
  }

  private async act(requestId: string, send: () => Promise<unknown>): Promise<void> {
    if (this.inFlight.has(requestId)) {
      return; // a click while the first action is still in flight
    }
    this.inFlight.add(requestId);
    try {
      await send();
      // optimistic removal; the next poll confirms or resurrects it
      this.items = this.items.filter((i) => i.requestId !== requestId);
      this.errors.delete(requestId);
    } catch (err) {
      if (err instanceof GatewayError && STALE_VOTE_CODES.has(err.code)) {
        // already voted (other tab, earlier session): the list is stale
        await this.refresh();
      } else if (err instanceof GatewayError) {
        this.errors.set(requestId, `${err.code}: ${err.detail}`);
      } else {
        throw err;
      }
    } finally {
      this.inFlight.delete(requestId);
    }
  }

  /** Start the poll loop; a failed poll marks the view stale and keeps going. */
  start(): void {
    if (this.timer !== null) return;
    const interval = this.client.session.pollIntervalMs;
    const tick = async () => {
      try {
        await this.refresh();
      } catch (err) {
        this.offline = `gateway unreachable: ${(err as Error).message}`;
      }
      this.timer = setTimeout(tick, interval);
    };
    this.timer = setTimeout(tick, interval);
  }

  stop(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  snapshot(): PendingEntry[] {
    return this.items.map((item) => ({
      ...item,
      error: this.errors.get(item.requestId),
    }));
  }

  render(): string {
    return renderPending({
      keeper: this.client.session.keeper,
      items: this.snapshot(),
      offline: this.offline,
    });
  }
}
