import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounce } from "../src/debounce";

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("runs once per burst, with the last arguments", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 150);
    for (const v of [1, 2, 3, 4, 5]) {
      fn(v);
      vi.advanceTimersByTime(30);
    }
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(150);
    expect(calls).toEqual([5]);
  });

  it("separate bursts each fire", () => {
    const calls: string[] = [];
    const fn = debounce((v: string) => calls.push(v), 150);
    fn("a");
    vi.advanceTimersByTime(200);
    fn("b");
    vi.advanceTimersByTime(200);
    expect(calls).toEqual(["a", "b"]);
  });

  it("a call inside the window resets the timer", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 150);
    fn(1);
    vi.advanceTimersByTime(140);
    fn(2);
    vi.advanceTimersByTime(140);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(10);
    expect(calls).toEqual([2]);
  });
});
