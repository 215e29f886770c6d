/**
 * The control-service message channel: line-delimited JSON over a local
 * socket. Schemas here mirror the service's documented grammar field by
 * field; every outbound message is validated before it leaves the UI.
 */

import { z } from "zod";

export const positionSchema = z
  .object({ x: z.number(), y: z.number(), z: z.number(), e: z.number() })
  .strict();
export type Position = z.infer<typeof positionSchema>;

export const segmentSchema = z
  .object({
    start: positionSchema,
    end: positionSchema,
    feedrate: z.number(),
    delta_e: z.number(),
    kind: z.enum(["extrude", "travel", "retract"]),
  })
  .strict();
export type Segment = z.infer<typeof segmentSchema>;

// ---- client -> service -----------------------------------------------------

const loadProgramSchema = z
  .object({
    type: z.literal("load_program"),
    gcode: z.string().optional(),
    recipe: z.string().optional(),
    params: z.record(z.unknown()).optional(),
  })
  .strict()
  .refine((m) => (m.gcode === undefined) !== (m.recipe === undefined), {
    message: "provide exactly one of gcode/recipe",
  });

const jogSchema = z
  .object({
    type: z.literal("jog"),
    dx: z.number(),
    dy: z.number(),
    dz: z.number(),
    speed: z.number().positive().optional(),
  })
  .strict();

export const clientMessageSchema = z.union([
  loadProgramSchema,
  z.object({ type: z.literal("start_stream") }).strict(),
  z.object({ type: z.literal("pause") }).strict(),
  z.object({ type: z.literal("resume") }).strict(),
  z.object({ type: z.literal("stop") }).strict(),
  z.object({ type: z.literal("inject"), command: z.string().min(1) }).strict(),
  jogSchema,
  z.object({ type: z.literal("probe_capture"), label: z.string().min(1) }).strict(),
  z
    .object({
      type: z.literal("set_bounds_mode"),
      mode: z.enum(["strict", "permissive"]),
    })
    .strict(),
]);
export type ClientMessage = z.infer<typeof clientMessageSchema>;

// ---- service -> client -----------------------------------------------------

export const statsSchema = z
  .object({
    segment_count: z.number(),
    total_extrude_length: z.number(),
    total_travel_length: z.number(),
    total_e: z.number(),
    command_count: z.number(),
  })
  .strict();
export type ProgramStats = z.infer<typeof statsSchema>;

export const printerStateSchema = z
  .object({
    position: positionSchema.nullable(),
    hotend: z.object({ actual: z.number(), target: z.number() }).strict().nullable(),
    bed: z.object({ actual: z.number(), target: z.number() }).strict().nullable(),
    link_state: z.enum(["disconnected", "idle", "streaming", "paused", "error"]),
    progress: z
      .object({
        sent: z.number(),
        acked: z.number(),
        errored: z.number(),
        timedout: z.number(),
        total: z.number(),
      })
      .strict(),
    last_error: z.string().nullable(),
  })
  .strict();
export type PrinterState = z.infer<typeof printerStateSchema>;

export const serviceMessageSchema = z.discriminatedUnion("type", [
  z
    .object({
      type: z.literal("program_loaded"),
      segments: z.array(segmentSchema),
      stats: statsSchema,
    })
    .strict(),
  z.object({ type: z.literal("state_update"), state: printerStateSchema }).strict(),
  z
    .object({
      type: z.literal("wire_event"),
      direction: z.enum(["tx", "rx"]),
      line: z.string(),
      t: z.number(),
    })
    .strict(),
  z
    .object({
      type: z.literal("probe_stored"),
      label: z.string(),
      position: positionSchema,
    })
    .strict(),
  z.object({ type: z.literal("ack"), for: z.string() }).strict(),
  z
    .object({
      type: z.literal("fault"),
      message: z.string(),
      for: z.string().optional(),
    })
    .strict(),
]);
export type ServiceMessage = z.infer<typeof serviceMessageSchema>;

// ---- wire helpers ------------------------------------------------------------

export function encodeClientMessage(msg: ClientMessage): string {
  const checked = clientMessageSchema.parse(msg);
  return JSON.stringify(checked);
}

export function decodeServiceMessage(line: string): ServiceMessage {
  return serviceMessageSchema.parse(JSON.parse(line));
}
