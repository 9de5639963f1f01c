// Debounced latest-only request scheduler: at most one request in flight,
// trailing-edge debounce, and stale responses are discarded so the rendered
// result always corresponds to the most recently issued request.

export interface ScheduledResult<T> {
    value: T;
    requestId: number;
}

export class DebouncedScheduler<A, T> {
    private timer: ReturnType<typeof setTimeout> | null = null;
    private nextId = 0;
    private latestIssued = 0;
    private inFlight = 0;
    private pendingArgs: A | null = null;
    private running = false;

    constructor(
        private run: (args: A) => Promise<T>,
        private onResult: (value: T) => void,
        private onError: (err: unknown) => void,
        private delayMs: number = 300,
    ) {}

    get inFlightCount(): number {
        return this.inFlight;
    }

    request(args: A): void {
        this.pendingArgs = args;
        if (this.timer !== null) clearTimeout(this.timer);
        this.timer = setTimeout(() => {
            this.timer = null;
            void this.fire();
        }, this.delayMs);
    }

    flush(): void {
        if (this.timer !== null) {
            clearTimeout(this.timer);
            this.timer = null;
            void this.fire();
        }
    }

    private async fire(): Promise<void> {
        if (this.pendingArgs === null) return;
        if (this.running) {
            // A request is already in flight; re-arm so the newest args go out
            // once it settles.
            this.request(this.pendingArgs);
            return;
        }
        const args = this.pendingArgs;
        this.pendingArgs = null;
        const id = ++this.nextId;
        this.latestIssued = id;
        this.running = true;
        this.inFlight += 1;
        try {
            const value = await this.run(args);
            if (id === this.latestIssued) {
                this.onResult(value);
            }
        } catch (err) {
            if (id === this.latestIssued) {
                this.onError(err);
            }
        } finally {
            this.inFlight -= 1;
            this.running = false;
        }
    }
}
