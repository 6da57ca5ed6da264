/** Review app controller: fetch a ticket, capture a choice, advance.
 *
 * Keyboard works end to end: ArrowLeft / ArrowRight / "=" answer the visible
 * ticket. One submit is in flight at most; a conflict (someone already
 * answered for this reviewer) skips forward; a failed POST lands in the
 * offline queue and retries in the background.
 */

import { ApiClient, type Choice, type TicketView } from "./api";
import { OfflineQueue } from "./queue";
import { Screen } from "./view";

const KEY_TO_CHOICE: Record<string, Choice> = {
  ArrowLeft: "left",
  ArrowRight: "right",
  "=": "tie",
};

export class ReviewApp {
  private readonly api: ApiClient;
  private readonly screen: Screen;
  private readonly queue: OfflineQueue;
  private readonly reviewerId: string;
  private current: TicketView | null = null;
  private submitting = false;

  constructor(api: ApiClient, screen: Screen, queue: OfflineQueue, reviewerId: string) {
    this.api = api;
    this.screen = screen;
    this.queue = queue;
    this.reviewerId = reviewerId;
  }

  async start(): Promise<void> {
    this.screen.setPendingCount(this.queue.size());
    await this.advance();
  }

  async advance(): Promise<void> {
    this.current = null;
    const result = await this.api.fetchNext(this.reviewerId);
    if (result.kind === "ticket") {
      this.current = result.ticket;
      this.screen.renderTicket(result.ticket, this.handlers());
    } else if (result.kind === "empty") {
      this.screen.renderEmpty();
    } else {
      this.screen.renderError(result.message, this.handlers());
    }
  }

  private handlers() {
    return {
      onChoice: (choice: Choice) => void this.submit(choice),
      onRetry: () => void this.advance(),
    };
  }

  async submit(choice: Choice): Promise<void> {
    if (this.current === null || this.submitting) return;
    const ticket = this.current;
    this.submitting = true;
    try {
      const result = await this.api.submitChoice(ticket.ticket_id, this.reviewerId, choice);
      if (result.kind === "offline") {
        this.queue.enqueue({
          ticket_id: ticket.ticket_id,
          reviewer_id: this.reviewerId,
          choice,
        });
        this.screen.setPendingCount(this.queue.size());
        this.screen.toast("offline - verdict queued locally");
      } else if (result.kind === "conflict") {
        this.screen.toast("already answered - skipping forward");
      } else if (result.kind === "rejected") {
        this.screen.toast(`submit rejected: ${result.message}`);
      }
    } finally {
      this.submitting = false;
    }
    await this.advance();
  }

  async flushPending(): Promise<void> {
    const remaining = await this.queue.flush(this.api);
    this.screen.setPendingCount(remaining);
  }

  handleKey(event: KeyboardEvent): void {
    const choice = KEY_TO_CHOICE[event.key];
    if (choice === undefined) return;
    event.preventDefault();
    void this.submit(choice);
  }
}

function reviewerIdFrom(location: Location, storage: Storage): string {
  const fromUrl = new URLSearchParams(location.search).get("reviewer");
  if (fromUrl) {
    storage.setItem("ckpt-arbiter-reviewer", fromUrl);
    return fromUrl;
  }
  const stored = storage.getItem("ckpt-arbiter-reviewer");
  if (stored) return stored;
  const generated = `reviewer-${Math.random().toString(36).slice(2, 8)}`;
  storage.setItem("ckpt-arbiter-reviewer", generated);
  return generated;
}

export function boot(): ReviewApp {
  const base = (import.meta as { env?: Record<string, string> }).env?.VITE_API_BASE ?? "";
  const api = new ApiClient(base);
  const screen = new Screen(
    document.getElementById("app")!,
    document.getElementById("status")!,
    document.getElementById("pending")!,
    document.getElementById("toast") ?? undefined,
  );
  const queue = new OfflineQueue(window.localStorage);
  const app = new ReviewApp(api, screen, queue, reviewerIdFrom(window.location, window.localStorage));

  document.addEventListener("keydown", (event) => app.handleKey(event));
  window.addEventListener("online", () => void app.flushPending());
  window.setInterval(() => void app.flushPending(), 15000);
  void app.start();
  return app;
}

if (typeof document !== "undefined" && document.getElementById("app") !== null) {
  boot();
}
