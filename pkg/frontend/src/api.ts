/** Typed client for the adjudication queue API.
 *
 * Ticket views are blinded by the server: they never contain checkpoint
 * identities, only left/right response texts.
 */

export interface TicketView {
  ticket_id: string;
  image_url: string;
  query: string;
  left_text: string;
  right_text: string;
  queue_depth: number;
}

export type Choice = "left" | "right" | "tie";

export type NextResult =
  | { kind: "ticket"; ticket: TicketView }
  | { kind: "empty" }
  | { kind: "error"; message: string };

export type SubmitResult =
  | { kind: "accepted" }
  | { kind: "conflict" }
  | { kind: "rejected"; message: string }
  | { kind: "offline" };

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(base = "", fetchFn: FetchLike = (...args) => fetch(...args)) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  async fetchNext(reviewerId: string): Promise<NextResult> {
    let response: Response;
    try {
      response = await this.fetchFn(
        `${this.base}/api/queue/next?reviewer=${encodeURIComponent(reviewerId)}`,
      );
    } catch {
      return { kind: "error", message: "network unreachable" };
    }
    if (response.status === 204) return { kind: "empty" };
    if (!response.ok) {
      return { kind: "error", message: `server returned ${response.status}` };
    }
    const body = await response.json();
    return { kind: "ticket", ticket: body.ticket as TicketView };
  }

  async submitChoice(
    ticketId: string,
    reviewerId: string,
    choice: Choice,
  ): Promise<SubmitResult> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.base}/api/verdicts`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          ticket_id: ticketId,
          reviewer_id: reviewerId,
          choice,
        }),
      });
    } catch {
      return { kind: "offline" };
    }
    if (response.ok) return { kind: "accepted" };
    if (response.status === 409) return { kind: "conflict" };
    return { kind: "rejected", message: `server returned ${response.status}` };
  }
}
