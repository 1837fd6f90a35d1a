/**
 * Long-poll loop over GET /api/events.
 *
 * The server parks each request until a record lands past `since` (or the
 * hold expires), so the loop normally sits in exactly one open request.
 * Records are deduplicated by sequence number: whatever the server returns,
 * a record is handed to the caller at most once and in order.
 */

import type { ApiClient } from "./api.js";
import type { EventRecord } from "./types.js";

export type FeedOptions = {
  since: number;
  // how long the server may hold an empty poll, seconds
  wait?: number;
  // pause before retrying after a transport or HTTP error
  retryMs?: number;
  onBatch: (events: EventRecord[]) => void;
  onError?: (err: unknown) => void;
};

export type FeedHandle = {
  stop: () => void;
  cursor: () => number;
  running: () => boolean;
};

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export function startEventFeed(client: ApiClient, opts: FeedOptions): FeedHandle {
  let cursor = opts.since;
  let stopped = false;
  const wait = opts.wait ?? 25;
  const retryMs = opts.retryMs ?? 2000;
  const controller = new AbortController();

  const loop = async () => {
    while (!stopped) {
      try {
        const res = await client.events(cursor, wait, controller.signal);
        if (stopped) return;
        const fresh = res.events.filter((e) => e.seq > cursor);
        for (const e of fresh) {
          if (e.seq > cursor) cursor = e.seq;
        }
        // `next` echoes `since` on an empty poll, so it can never move back
        if (res.next > cursor) cursor = res.next;
        if (fresh.length > 0) opts.onBatch(fresh);
      } catch (err) {
        if (stopped) return;
        opts.onError?.(err);
        await sleep(retryMs);
      }
    }
  };
  const done = loop();

  return {
    stop: () => {
      stopped = true;
      controller.abort();
      void done;
    },
    cursor: () => cursor,
    running: () => !stopped,
  };
}
