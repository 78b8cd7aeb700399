import { ApiClient } from "./api.js";
import type { FetchLike } from "./api.js";
import { QueueView } from "./queue.js";
import { ReviewStation } from "./review.js";

export interface AppHandles {
  queue?: QueueView;
  station?: ReviewStation;
}

/**
 * Wires the two panels to a shared client once the operator enters an
 * id.  The id is asked for exactly once per session and travels on
 * every request as a header.
 */
export function bootstrap(
  doc: Document,
  baseUrl: string,
  fetchFn?: FetchLike,
): AppHandles {
  const form = doc.querySelector<HTMLFormElement>("#operator-form");
  const input = doc.querySelector<HTMLInputElement>("#operator-id");
  const queueRoot = doc.querySelector<HTMLElement>("#queue");
  const reviewRoot = doc.querySelector<HTMLElement>("#review");
  if (!form || !input || !queueRoot || !reviewRoot) {
    throw new Error("page is missing required elements");
  }
  const handles: AppHandles = {};
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const operatorId = input.value.trim();
    if (!operatorId) return;
    form.hidden = true;
    const client = new ApiClient(baseUrl, operatorId, fetchFn);
    handles.queue = new QueueView(queueRoot, client);
    handles.station = new ReviewStation(reviewRoot, client);
    handles.queue.start();
    handles.station.attach(doc);
  });
  return handles;
}

