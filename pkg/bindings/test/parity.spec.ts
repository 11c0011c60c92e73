import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, describe, expect, it } from "vitest";

import { TerminalState, make } from "../src/index.js";

// Small deterministic PRNG so the "random" rollout is reproducible here
// without depending on the engine's own random policy.
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let z = state;
    z = Math.imul(z ^ (z >>> 15), z | 1);
    z ^= z + Math.imul(z ^ (z >>> 7), z | 61);
    return ((z ^ (z >>> 14)) >>> 0) / 4294967296;
  };
}

const MAP_SEED = 5;
const STEPS = 100;

const rand = mulberry32(2024);
const actions: [number, number][] = [];
for (let t = 0; t < STEPS; t++) {
  actions.push([(rand() * 2 - 1) * 0.08, rand() * 0.8 - 0.5]);
}

interface TraceStep {
  t: number;
  x: number;
  y: number;
  heading: number;
  speed: number;
  action: [number, number];
  reward: number;
  terminal: number;
}

const workDir = mkdtempSync(join(tmpdir(), "drive2d-parity-"));

afterAll(() => {
  rmSync(workDir, { recursive: true, force: true });
});

function coreTrace(): { header: Record<string, number>; steps: TraceStep[] } {
  const actionsPath = join(workDir, "actions.json");
  const tracePath = join(workDir, "trace.jsonl");
  writeFileSync(actionsPath, JSON.stringify(actions));
  execFileSync(
    "python3",
    [
      "-m",
      "drive2d.cli",
      "run",
      "--map-seed",
      String(MAP_SEED),
      "--actions",
      actionsPath,
      "--trace",
      tracePath,
      "--max-steps",
      String(STEPS),
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  const lines = readFileSync(tracePath, "utf8").trim().split("\n");
  return {
    header: JSON.parse(lines[0]) as Record<string, number>,
    steps: lines.slice(1).map((line) => JSON.parse(line) as TraceStep),
  };
}

describe("cross-language parity with the core harness", () => {
  it("matches a 100-step random rollout number-for-number", async () => {
    const { header, steps } = coreTrace();
    expect(header.seed).toBe(MAP_SEED);
    expect(steps.length).toBe(STEPS);
    expect(steps[STEPS - 1].terminal).toBe(TerminalState.MAX_STEP);

    const env = await make({ map_seed: MAP_SEED, max_steps: STEPS });
    try {
      const obs = await env.reset(MAP_SEED);
      expect(obs.length).toBe(266);
      for (let t = 0; t < STEPS; t++) {
        const out = await env.step(actions[t]);
        const want = steps[t];
        // Strict equality: both sides serialize IEEE doubles losslessly,
        // so any detectable drift means the simulations diverged.
        expect(out.x).toBe(want.x);
        expect(out.y).toBe(want.y);
        expect(out.heading).toBe(want.heading);
        expect(out.speed).toBe(want.speed);
        expect(out.reward).toBe(want.reward);
        expect(out.terminal).toBe(want.terminal);
        expect(out.done).toBe(t === STEPS - 1);
      }
    } finally {
      await env.close();
    }
  }, 60_000);
});
