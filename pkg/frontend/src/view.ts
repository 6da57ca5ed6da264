/** DOM rendering for the review screen.
 *
 * Response texts are always assigned through textContent so nothing in a
 * model response is ever interpreted as markup.
 */

import type { TicketView } from "./api";

export interface ViewHandlers {
  onChoice(choice: "left" | "right" | "tie"): void;
  onRetry(): void;
}

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class Screen {
  private readonly root: HTMLElement;
  private readonly status: HTMLElement;
  private readonly pendingBadge: HTMLElement;
  private readonly toastBox: HTMLElement;
  private toastTimer: number | undefined;

  constructor(
    root: HTMLElement,
    status: HTMLElement,
    pendingBadge: HTMLElement,
    toastBox?: HTMLElement,
  ) {
    this.root = root;
    this.status = status;
    this.pendingBadge = pendingBadge;
    this.toastBox = toastBox ?? status;
  }

  renderTicket(ticket: TicketView, handlers: ViewHandlers): void {
    this.root.replaceChildren();

    const figure = el("div", "image-pane");
    const image = document.createElement("img");
    image.src = ticket.image_url;
    image.alt = "sample image";
    image.addEventListener("error", () => {
      figure.replaceChildren(el("div", "image-missing", "image unavailable"));
    });
    figure.appendChild(image);
    this.root.appendChild(figure);

    this.root.appendChild(el("p", "query", ticket.query));

    const columns = el("div", "responses");
    for (const side of ["left", "right"] as const) {
      const pane = el("section", `response ${side}`);
      pane.appendChild(el("h2", undefined, side === "left" ? "Response 1" : "Response 2"));
      const text = el("pre", "response-text");
      text.textContent = side === "left" ? ticket.left_text : ticket.right_text;
      pane.appendChild(text);
      columns.appendChild(pane);
    }
    this.root.appendChild(columns);

    const buttons = el("div", "choices");
    const actions: [string, "left" | "right" | "tie", string][] = [
      ["Left is better", "left", "←"],
      ["Tie", "tie", "="],
      ["Right is better", "right", "→"],
    ];
    for (const [label, choice, key] of actions) {
      const button = document.createElement("button");
      button.textContent = `${label} (${key})`;
      button.dataset.choice = choice;
      button.addEventListener("click", () => handlers.onChoice(choice));
      buttons.appendChild(button);
    }
    this.root.appendChild(buttons);
    this.setStatus(`${ticket.queue_depth} ticket(s) in queue`);
    const first = buttons.querySelector("button");
    if (first) (first as HTMLButtonElement).focus();
  }

  renderEmpty(): void {
    this.root.replaceChildren(el("div", "empty-state", "All done - no tickets waiting."));
    this.setStatus("queue empty");
  }

  renderError(message: string, handlers: ViewHandlers): void {
    const box = el("div", "error-state");
    box.appendChild(el("p", undefined, `Could not reach the queue: ${message}`));
    const retry = document.createElement("button");
    retry.textContent = "Retry";
    retry.addEventListener("click", () => handlers.onRetry());
    box.appendChild(retry);
    this.root.replaceChildren(box);
    retry.focus();
    this.setStatus("disconnected");
  }

  setStatus(text: string): void {
    this.status.textContent = text;
  }

  setPendingCount(count: number): void {
    this.pendingBadge.textContent = count > 0 ? `${count} pending sync` : "";
  }

  toast(message: string): void {
    this.toastBox.textContent = message;
    if (this.toastTimer !== undefined) window.clearTimeout(this.toastTimer);
    this.toastTimer = window.setTimeout(() => {
      this.toastBox.textContent = "";
    }, 4000);
  }
}
