/** Latest-wins preview refresh: at most one request in flight at a time. */

export class PreviewLoop {
  private inFlight = false;
  private pending = false;

  constructor(private readonly refresh: () => Promise<void>) {}

  /** Ask for a refresh; coalesces bursts into the next single request. */
  request(): void {
    if (this.inFlight) {
      this.pending = true;
      return;
    }
    this.inFlight = true;
    void this.refresh()
      .catch(() => { /* surfaced by the refresh callback itself */ })
      .finally(() => {
        this.inFlight = false;
        if (this.pending) {
          this.pending = false;
          this.request();
        }
      });
  }
}

/** Poll a job every `intervalMs` until it reaches done/failed. */
export async function pollJob<T extends { state: string }>(
    fetchStatus: () => Promise<T>,
    onUpdate: (status: T) => void,
    intervalMs = 1000): Promise<T> {
  for (;;) {
    const status = await fetchStatus();
    onUpdate(status);
    if (status.state === "done" || status.state === "failed") {
      return status;
    }
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
}
