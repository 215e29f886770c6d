/**
 * Everything the UI draws, derived purely from the service's message stream.
 * Replaying the same messages into a fresh ViewModel reproduces the same
 * view: the UI holds no machine truth of its own.
 */

import type {
  ClientMessage,
  Position,
  PrinterState,
  ProgramStats,
  Segment,
  ServiceMessage,
} from "./protocol.js";

export interface ColoredSegment extends Segment {
  color: string;
  dashed: boolean;
}

export interface TranscriptEntry {
  kind: "sent" | "reply" | "tx" | "rx";
  text: string;
}

const SLOW_COLOR = [0x3b, 0x6f, 0xd4] as const;
const FAST_COLOR = [0xd4, 0x3b, 0x3b] as const;
const TRAVEL_COLOR = "#999999";
const RETRACT_COLOR = "#7a3bd4";

export function feedrateColor(feed: number, lo: number, hi: number): string {
  const t = hi > lo ? (feed - lo) / (hi - lo) : 0.5;
  const mix = (a: number, b: number) => Math.round(a + (b - a) * t);
  const channels = [0, 1, 2].map((i) => mix(SLOW_COLOR[i]!, FAST_COLOR[i]!));
  return "#" + channels.map((c) => c.toString(16).padStart(2, "0")).join("");
}

export class ViewModel {
  segments: ColoredSegment[] = [];
  stats: ProgramStats | null = null;
  printhead: Position | null = null;
  state: PrinterState | null = null;
  transcript: TranscriptEntry[] = [];
  probes = new Map<string, Position>();
  faults: string[] = [];
  feedRange: [number, number] = [0, 1];

  /** Count invariant: what we draw is exactly what the service reported. */
  get segmentCount(): number {
    return this.segments.length;
  }

  applyService(msg: ServiceMessage): void {
    switch (msg.type) {
      case "program_loaded": {
        const feeds = msg.segments
          .filter((s) => s.kind === "extrude")
          .map((s) => s.feedrate);
        const lo = feeds.length ? Math.min(...feeds) : 0;
        const hi = feeds.length ? Math.max(...feeds) : 1;
        this.feedRange = [lo, hi];
        this.segments = msg.segments.map((s) => ({
          ...s,
          color:
            s.kind === "extrude"
              ? feedrateColor(s.feedrate, lo, hi)
              : s.kind === "travel"
                ? TRAVEL_COLOR
                : RETRACT_COLOR,
          dashed: s.kind !== "extrude",
        }));
        this.stats = msg.stats;
        break;
      }
      case "state_update":
        this.state = msg.state;
        if (msg.state.position) {
          this.printhead = msg.state.position;
        }
        break;
      case "wire_event":
        this.transcript.push({ kind: msg.direction, text: msg.line });
        break;
      case "probe_stored":
        this.probes.set(msg.label, msg.position);
        this.transcript.push({
          kind: "reply",
          text: `probe ${msg.label} @ (${msg.position.x}, ${msg.position.y}, ${msg.position.z})`,
        });
        break;
      case "ack":
        this.transcript.push({ kind: "reply", text: `ok: ${msg.for}` });
        break;
      case "fault":
        this.faults.push(msg.message);
        this.transcript.push({ kind: "reply", text: `fault: ${msg.message}` });
        break;
    }
  }

  noteSent(msg: ClientMessage): void {
    this.transcript.push({ kind: "sent", text: JSON.stringify(msg) });
  }

  clearProbes(): void {
    this.probes.clear();
  }

  get progressText(): string {
    if (!this.state) return "no contact yet";
    const p = this.state.progress;
    return `${this.state.link_state}: ${p.acked}/${p.total} acked`;
  }

  /** Rebuild from scratch; proves the view is a pure function of the stream. */
  static replay(messages: ServiceMessage[]): ViewModel {
    const vm = new ViewModel();
    for (const msg of messages) vm.applyService(msg);
    return vm;
  }
}
