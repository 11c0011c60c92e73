// Node bindings for the drive2d driving environment.
//
// The engine ships a line-protocol server (`drive2d serve`): one JSON request
// per stdin line, one JSON response per stdout line. This module spawns that
// server as a child process and wraps it in the conventional environment
// shape: make / reset / step / close. All simulation semantics live on the
// Python side; everything here is marshalling, so the numbers coming back are
// byte-for-byte the ones the core harness would produce for the same seed and
// action sequence.

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface } from "node:readline";

export const OBS_SIZE = 266;

/** Episode terminal codes, matching the engine's enumeration. */
export const TerminalState = {
  NONE: 0,
  MAX_STEP: 1,
  OUT_OF_ROAD: 2,
  CRASH: 3,
  SUCCESS: 4,
} as const;

export type TerminalCode = (typeof TerminalState)[keyof typeof TerminalState];

/** Thrown when step() is called on an episode that already ended. */
export class EpisodeDoneError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "EpisodeDoneError";
  }
}

/**
 * Environment construction options. Keys mirror the server's flat config
 * mapping; unknown keys and mistyped values are rejected by the engine with
 * a descriptive error rather than silently ignored.
 */
export interface EnvOptions {
  map_seed?: number;
  map_blocks?: number;
  map_lanes?: number;
  map_tries?: number;
  lane_width?: number;
  traffic_density?: number;
  aggressive_fraction?: number;
  max_steps?: number;
  safety_mode?: boolean;
  obstacle_density?: number;
}

export interface SpaceDescriptor {
  readonly length: number;
  readonly low: number;
  readonly high: number;
}

export interface StepOutcome {
  /** Observation as a contiguous 32-bit float buffer of length 266. */
  obs: Float32Array;
  reward: number;
  done: boolean;
  terminal: TerminalCode;
  cost: number;
  steps: number;
  x: number;
  y: number;
  heading: number;
  speed: number;
}

interface Reply {
  ok: boolean;
  error?: string;
  [key: string]: unknown;
}

interface PendingReply {
  resolve: (reply: Reply) => void;
  reject: (err: Error) => void;
}

function defaultServeCommand(): string[] {
  const override = process.env.DRIVE2D_SERVE;
  if (override) {
    return override.split(" ").filter((part) => part.length > 0);
  }
  return ["python3", "-m", "drive2d.cli", "serve"];
}

function toError(message: string): Error {
  if (message.startsWith("EpisodeDoneError")) {
    return new EpisodeDoneError(message);
  }
  return new Error(message);
}

/**
 * One handle to one environment instance, backed by one server process.
 * A handle must not be used from two callers concurrently; distinct handles
 * are fully independent. Operations on a closed handle reject cleanly.
 */
export class BoundEnv {
  readonly observationSpace: SpaceDescriptor = {
    length: OBS_SIZE,
    low: -1,
    high: 1,
  };
  readonly actionSpace: SpaceDescriptor = { length: 2, low: -1, high: 1 };

  private readonly proc: ChildProcessWithoutNullStreams;
  private readonly pending: PendingReply[] = [];
  private readonly exited: Promise<void>;
  private stderrTail = "";
  private closed = false;

  private constructor(command: string[]) {
    this.proc = spawn(command[0], command.slice(1), {
      stdio: ["pipe", "pipe", "pipe"],
    });
    this.proc.stderr.setEncoding("utf8");
    this.proc.stderr.on("data", (chunk: string) => {
      this.stderrTail = (this.stderrTail + chunk).slice(-2000);
    });
    const lines = createInterface({ input: this.proc.stdout });
    lines.on("line", (line) => this.onLine(line));
    this.exited = new Promise((resolve) => {
      this.proc.on("exit", (code) => {
        this.closed = true;
        this.failPending(
          new Error(
            `environment server exited (code ${code})` +
              (this.stderrTail ? `: ${this.stderrTail.trim()}` : ""),
          ),
        );
        resolve();
      });
    });
    this.proc.on("error", (err) => {
      this.closed = true;
      this.failPending(new Error(`cannot start environment server: ${err.message}`));
    });
  }

  /** Spawn a server and construct one environment from the given options. */
  static async make(
    options: EnvOptions = {},
    serveCommand?: string[],
  ): Promise<BoundEnv> {
    const env = new BoundEnv(serveCommand ?? defaultServeCommand());
    try {
      await env.request({ op: "make", config: options });
    } catch (err) {
      await env.close().catch(() => undefined);
      throw err;
    }
    return env;
  }

  /** Reset to the given map seed; returns the initial observation. */
  async reset(seed?: number): Promise<Float32Array> {
    const req = seed === undefined ? { op: "reset" } : { op: "reset", seed };
    const reply = await this.request(req);
    return Float32Array.from(reply.obs as number[]);
  }

  /** Advance one 0.1 s step with normalized [steering, throttle/brake]. */
  async step(action: readonly [number, number]): Promise<StepOutcome> {
    const reply = await this.request({
      op: "step",
      action: [action[0], action[1]],
    });
    return {
      obs: Float32Array.from(reply.obs as number[]),
      reward: reply.reward as number,
      done: reply.done as boolean,
      terminal: reply.terminal as TerminalCode,
      cost: reply.cost as number,
      steps: reply.steps as number,
      x: reply.x as number,
      y: reply.y as number,
      heading: reply.heading as number,
      speed: reply.speed as number,
    };
  }

  /** Release the instance and stop the server process. Idempotent. */
  async close(): Promise<void> {
    if (this.closed) {
      return;
    }
    const ack = this.request({ op: "close" });
    this.closed = true;
    await ack.catch(() => undefined);
    this.proc.stdin.end();
    await this.exited;
  }

  private request(payload: object): Promise<Reply> {
    if (this.closed) {
      return Promise.reject(new Error("environment handle is closed"));
    }
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.proc.stdin.write(JSON.stringify(payload) + "\n", (err) => {
        if (err) {
          this.dropPending({ resolve, reject });
          reject(new Error(`cannot reach environment server: ${err.message}`));
        }
      });
    });
  }

  private onLine(line: string): void {
    const waiter = this.pending.shift();
    if (waiter === undefined) {
      return; // unsolicited output; nothing is waiting on it
    }
    let reply: Reply;
    try {
      reply = JSON.parse(line) as Reply;
    } catch {
      waiter.reject(new Error(`malformed server reply: ${line.slice(0, 200)}`));
      return;
    }
    if (reply.ok) {
      waiter.resolve(reply);
    } else {
      waiter.reject(toError(reply.error ?? "unknown server error"));
    }
  }

  private failPending(err: Error): void {
    while (this.pending.length > 0) {
      this.pending.shift()!.reject(err);
    }
  }

  private dropPending(entry: PendingReply): void {
    const at = this.pending.indexOf(entry);
    if (at >= 0) {
      this.pending.splice(at, 1);
    }
  }
}

/** Construct an environment with defaults overlaid by the given options. */
export async function make(
  options: EnvOptions = {},
  serveCommand?: string[],
): Promise<BoundEnv> {
  return BoundEnv.make(options, serveCommand);
}
