/**
 * Guided print-on-object calibration: jog the nozzle onto the first anchor
 * point, capture it, jog to the second, capture, then generate and preview
 * the overlay handle. Nothing is hard-coded: re-running replaces the probes
 * and regenerates cleanly.
 */

import type { ServiceClient } from "./client.js";
import type { Position, Segment } from "./protocol.js";
import type { ViewModel } from "./viewmodel.js";

export type WizardStep =
  | "idle"
  | "probe-first"
  | "probe-second"
  | "preview"
  | "printing";

export class CalibrationWizard {
  step: WizardStep = "idle";
  probes: { p1?: Position; p2?: Position } = {};
  previewSegments: Segment[] = [];
  hint = "";

  constructor(
    private readonly client: ServiceClient,
    private readonly vm: ViewModel,
  ) {}

  begin(): void {
    this.step = "probe-first";
    this.probes = {};
    this.previewSegments = [];
    this.vm.clearProbes();
    this.hint = "jog the nozzle to the first anchor point, then capture";
  }

  /** Capture is disabled until the machine has reported a position. */
  get captureEnabled(): boolean {
    if (this.vm.printhead === null) {
      return false;
    }
    return this.step === "probe-first" || this.step === "probe-second";
  }

  get captureDisabledHint(): string {
    return this.vm.printhead === null
      ? "waiting for a position report from the machine"
      : "";
  }

  async capture(): Promise<Position> {
    if (!this.captureEnabled) {
      throw new Error(this.captureDisabledHint || `cannot capture while ${this.step}`);
    }
    const label = this.step === "probe-first" ? "p1" : "p2";
    const reply = await this.client.request(
      { type: "probe_capture", label },
      ["probe_stored", "fault"],
    );
    if (reply.type !== "probe_stored") {
      throw new Error(`probe capture failed: ${(reply as { message: string }).message}`);
    }
    this.probes[label] = reply.position;
    if (label === "p1") {
      this.step = "probe-second";
      this.hint = "jog to the second anchor point, then capture";
    } else {
      this.step = "preview";
      this.hint = "generating the handle between the captured points";
      await this.generate();
    }
    return reply.position;
  }

  private async generate(): Promise<void> {
    const reply = await this.client.request(
      { type: "load_program", recipe: "handle", params: {} },
      ["program_loaded", "fault"],
    );
    if (reply.type !== "program_loaded") {
      throw new Error(`handle generation failed: ${(reply as { message: string }).message}`);
    }
    this.previewSegments = reply.segments;
    this.hint = "preview ready: start the print or re-run the calibration";
  }

  async startPrint(): Promise<void> {
    if (this.step !== "preview") {
      throw new Error("nothing to print yet");
    }
    const reply = await this.client.request({ type: "start_stream" }, ["ack", "fault"]);
    if (reply.type !== "ack") {
      throw new Error(`start failed: ${(reply as { message: string }).message}`);
    }
    this.step = "printing";
  }

  /** Start over: previous probes are replaced, nothing sticks. */
  rerun(): void {
    this.begin();
  }
}
