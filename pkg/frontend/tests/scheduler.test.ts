import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { DebouncedScheduler } from "../src/scheduler.js";

function deferred<T>() {
    let resolve!: (v: T) => void;
    let reject!: (e: unknown) => void;
    const promise = new Promise<T>((res, rej) => { resolve = res; reject = rej; });
    return { promise, resolve, reject };
}

describe("DebouncedScheduler", () => {
    beforeEach(() => vi.useFakeTimers());
    afterEach(() => vi.useRealTimers());

    it("debounces a burst into a single request", async () => {
        const calls: string[] = [];
        const sched = new DebouncedScheduler<string, string>(
            async (a) => { calls.push(a); return a; },
            () => {}, () => {}, 300);
        sched.request("a");
        sched.request("b");
        sched.request("c");
        await vi.advanceTimersByTimeAsync(299);
        expect(calls).toEqual([]);
        await vi.advanceTimersByTimeAsync(1);
        expect(calls).toEqual(["c"]);
    });

    it("keeps at most one request in flight during continuous dragging", async () => {
        const gates: ReturnType<typeof deferred<string>>[] = [];
        let maxInFlight = 0;
        const sched = new DebouncedScheduler<string, string>(
            (a) => {
                const gate = deferred<string>();
                gates.push(gate);
                return gate.promise;
            },
            () => {}, () => {}, 300);
        const probe = () => { maxInFlight = Math.max(maxInFlight, sched.inFlightCount); };

        sched.request("a");
        await vi.advanceTimersByTimeAsync(300);
        probe();
        // drag continues while the first request is in flight
        for (let i = 0; i < 5; i++) {
            sched.request(`b${i}`);
            await vi.advanceTimersByTimeAsync(300);
            probe();
        }
        expect(gates.length).toBe(1);
        expect(maxInFlight).toBe(1);
        gates[0].resolve("a");
        await vi.advanceTimersByTimeAsync(300);
        probe();
        expect(gates.length).toBe(2);
        expect(maxInFlight).toBe(1);
        gates[1].resolve("b4");
        await vi.advanceTimersByTimeAsync(0);
    });

    it("delivers the result of the most recent request", async () => {
        const seen: string[] = [];
        const sched = new DebouncedScheduler<string, string>(
            async (a) => a,
            (v) => seen.push(v),
            () => {}, 300);
        sched.request("first");
        await vi.advanceTimersByTimeAsync(300);
        sched.request("second");
        await vi.advanceTimersByTimeAsync(300);
        expect(seen).toEqual(["first", "second"]);
    });

    it("reports errors only for the latest request", async () => {
        const errors: unknown[] = [];
        const sched = new DebouncedScheduler<string, string>(
            async (a) => { throw new Error(a); },
            () => {},
            (e) => errors.push(e),
            300);
        sched.request("x");
        await vi.advanceTimersByTimeAsync(300);
        expect(errors.length).toBe(1);
        expect((errors[0] as Error).message).toBe("x");
    });
});
