/**
 * User interactions mapped to service messages. The UI never composes
 * G-code itself (the raw console passthrough is the one exception, and even
 * that ships as an opaque line for the service to handle).
 */

import type { ClientMessage } from "./protocol.js";

export type SendFn = (msg: ClientMessage) => void;

export const JOG_STEPS = [10, 1, 0.1, 0.01] as const;
export type JogStep = (typeof JOG_STEPS)[number];
export type Axis = "x" | "y" | "z";

export class JogPad {
  step: JogStep = 1;

  constructor(private readonly send: SendFn, public speed?: number) {}

  selectStep(step: JogStep): void {
    if (!JOG_STEPS.includes(step)) {
      throw new Error(`jog step must be one of ${JOG_STEPS.join("/")}`);
    }
    this.step = step;
  }

  press(axis: Axis, direction: 1 | -1): void {
    const delta = this.step * direction;
    const msg: ClientMessage = {
      type: "jog",
      dx: axis === "x" ? delta : 0,
      dy: axis === "y" ? delta : 0,
      dz: axis === "z" ? delta : 0,
      ...(this.speed !== undefined ? { speed: this.speed } : {}),
    };
    this.send(msg);
  }
}

export class ConsolePanel {
  constructor(private readonly send: SendFn) {}

  submit(line: string): void {
    const trimmed = line.trim();
    if (!trimmed) return;
    this.send({ type: "inject", command: trimmed });
  }
}

export class StreamControls {
  /** Stop is destructive (clears the queue, parks the machine): confirm first. */
  constructor(
    private readonly send: SendFn,
    private readonly confirmStop: () => boolean = () => true,
  ) {}

  start(): void {
    this.send({ type: "start_stream" });
  }

  pause(): void {
    this.send({ type: "pause" });
  }

  resume(): void {
    this.send({ type: "resume" });
  }

  stop(): boolean {
    if (!this.confirmStop()) return false;
    this.send({ type: "stop" });
    return true;
  }
}

export class BoundsToggle {
  constructor(private readonly send: SendFn) {}

  set(mode: "strict" | "permissive"): void {
    this.send({ type: "set_bounds_mode", mode });
  }
}

export class ProgramLoader {
  constructor(private readonly send: SendFn) {}

  loadGcode(gcode: string): void {
    this.send({ type: "load_program", gcode });
  }

  loadRecipe(recipe: string, params: Record<string, unknown> = {}): void {
    this.send({ type: "load_program", recipe, params });
  }
}
