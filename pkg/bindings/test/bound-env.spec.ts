import { describe, expect, it } from "vitest";

import {
  BoundEnv,
  EpisodeDoneError,
  OBS_SIZE,
  TerminalState,
  make,
} from "../src/index.js";

describe("environment handle lifecycle", () => {
  it("exposes the observation and action contracts", async () => {
    const env = await make();
    try {
      expect(env.observationSpace).toEqual({ length: 266, low: -1, high: 1 });
      expect(env.actionSpace).toEqual({ length: 2, low: -1, high: 1 });
      const obs = await env.reset(0);
      expect(obs).toBeInstanceOf(Float32Array);
      expect(obs.length).toBe(OBS_SIZE);
      for (const value of obs) {
        expect(value).toBeGreaterThanOrEqual(-1);
        expect(value).toBeLessThanOrEqual(1);
      }
    } finally {
      await env.close();
    }
  });

  it("steps and reports motion in the outcome", async () => {
    const env = await make({ traffic_density: 0, max_steps: 50 });
    try {
      await env.reset(1);
      let speed = 0;
      for (let t = 0; t < 10; t++) {
        const out = await env.step([0, 1]);
        expect(out.obs.length).toBe(OBS_SIZE);
        expect(Number.isFinite(out.reward)).toBe(true);
        expect(out.steps).toBe(t + 1);
        speed = out.speed;
      }
      expect(speed).toBeGreaterThan(0);
    } finally {
      await env.close();
    }
  });

  it("is deterministic across independent handles", async () => {
    const options = { traffic_density: 0.1, max_steps: 20 };
    const a = await make(options);
    const b = await make(options);
    try {
      const obsA = await a.reset(7);
      const obsB = await b.reset(7);
      expect(Array.from(obsA)).toEqual(Array.from(obsB));
      for (let t = 0; t < 5; t++) {
        const action: [number, number] = [0.05 * t, 0.4];
        const outA = await a.step(action);
        const outB = await b.step(action);
        expect(outA.reward).toBe(outB.reward);
        expect(outA.x).toBe(outB.x);
        expect(outA.y).toBe(outB.y);
        expect(Array.from(outA.obs)).toEqual(Array.from(outB.obs));
      }
    } finally {
      await a.close();
      await b.close();
    }
  });

  it("throws EpisodeDoneError when stepping a finished episode", async () => {
    const env = await make({ traffic_density: 0, max_steps: 3 });
    try {
      await env.reset(0);
      for (let t = 0; t < 2; t++) {
        const out = await env.step([0, 0]);
        expect(out.done).toBe(false);
      }
      const last = await env.step([0, 0]);
      expect(last.done).toBe(true);
      expect(last.terminal).toBe(TerminalState.MAX_STEP);
      await expect(env.step([0, 0])).rejects.toBeInstanceOf(EpisodeDoneError);
      // The handle survives the error; a reset starts a fresh episode.
      const obs = await env.reset(0);
      expect(obs.length).toBe(OBS_SIZE);
    } finally {
      await env.close();
    }
  });

  it("rejects mistyped and unknown config keys with the engine's message", async () => {
    await expect(
      make({ map_seed: "abc" } as unknown as Record<string, number>),
    ).rejects.toThrow(/map_seed/);
    await expect(
      make({ lane_count: 2 } as unknown as Record<string, number>),
    ).rejects.toThrow(/unknown config key/);
  });

  it("fails cleanly on a closed handle", async () => {
    const env = await make({ traffic_density: 0 });
    await env.close();
    await env.close(); // idempotent
    await expect(env.reset(0)).rejects.toThrow(/closed/);
    await expect(env.step([0, 0])).rejects.toThrow(/closed/);
  });

  it("surfaces a dead server as an error instead of hanging", async () => {
    await expect(
      BoundEnv.make({}, ["python3", "-c", "raise SystemExit(3)"]),
    ).rejects.toThrow(/exited/);
  });
});
