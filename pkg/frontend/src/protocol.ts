/**
 * Wire protocol spoken by the gesture service: newline-delimited JSON
 * messages, one object per line, versioned by the `v` field.
 */

export const PROTOCOL_VERSION = 1;

export interface GenerationAttributes {
  task: "narration" | "conversation";
  emotion: string; // lexicon term or explicit "v,a,d" triple
  gender: "female" | "male";
  handedness: "left" | "right";
}

export interface RequestMessage extends GenerationAttributes {
  v: number;
  type: "request";
  id: string;
  sentence: string;
  fps_out: number;
}

export interface FrameMessage {
  v: number;
  type: "frame";
  id: string;
  t: number;
  quats: number[][]; // J x [w, x, y, z]
  pos: number[][]; // J x [x, y, z]
  done: boolean;
}

export interface DoneMessage {
  v: number;
  type: "done";
  id: string;
  frames: number;
  mean_ms: number;
  p95_ms: number;
  done: true;
}

export interface ErrorMessage {
  v: number;
  type: "error";
  id: string | null;
  message: string;
}

export type ServerMessage = FrameMessage | DoneMessage | ErrorMessage;

export interface SkeletonInfo {
  name: string;
  joints: string[];
  parents: number[];
  offsets: number[][];
}

export function buildRequest(
  id: string,
  sentence: string,
  attrs: GenerationAttributes,
  fpsOut = 120,
): RequestMessage {
  return {
    v: PROTOCOL_VERSION,
    type: "request",
    id,
    sentence,
    task: attrs.task,
    emotion: attrs.emotion,
    gender: attrs.gender,
    handedness: attrs.handedness,
    fps_out: fpsOut,
  };
}

/** Parse one wire line; returns null for anything malformed. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const msg = doc as Record<string, unknown>;
  if (msg.type === "frame") {
    if (!Array.isArray(msg.quats) || !Array.isArray(msg.pos) || typeof msg.t !== "number") {
      return null;
    }
    return msg as unknown as FrameMessage;
  }
  if (msg.type === "done" || msg.type === "error") {
    return msg as unknown as ServerMessage;
  }
  return null;
}
