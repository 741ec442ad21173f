/**
 * Long-poll subscription over the event stream.
 *
 * One subscription per open workflow view; the cursor only moves forward,
 * and a reconnect after an error resumes from the last seen sequence_no,
 * so ordering is preserved and nothing is delivered twice.
 */

import type { ApiClient, WorkflowEvent } from "./api.js";

export type EventBatchHandler = (events: WorkflowEvent[]) => void;

export class EventStream {
  private cursor: number;
  private stopped = false;
  private loop: Promise<void> | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly workflowId: string,
    private readonly onBatch: EventBatchHandler,
    startFrom = 0,
    private readonly waitSeconds = 20,
  ) {
    this.cursor = startFrom;
  }

  get position(): number {
    return this.cursor;
  }

  start(): void {
    if (this.loop) return;
    this.loop = this.run();
  }

  stop(): void {
    this.stopped = true;
  }

  private async run(): Promise<void> {
    while (!this.stopped) {
      try {
        const events = await this.client.getEvents(
          this.workflowId,
          this.cursor,
          this.waitSeconds,
        );
        if (this.stopped) return;
        if (events.length > 0) {
          this.cursor = events[events.length - 1].sequence_no + 1;
          this.onBatch(events);
        }
      } catch {
        // transient failure: back off, then resume from the same cursor
        await sleep(1000);
      }
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
