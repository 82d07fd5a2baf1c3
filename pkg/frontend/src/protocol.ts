/**
 * Newline-delimited JSON wire protocol (version "1.0").
 *
 * One message per line, UTF-8. Field names are part of the contract:
 * `kind`, `frame_no`, `sim_time`, `client_id`, `payload`, `control`.
 * Unknown JSON fields are ignored on decode, so the SDK tolerates newer
 * masters. Encoding uses sorted keys and no whitespace, mirroring the
 * canonical form the master emits.
 */

export const PROTOCOL_VERSION = "1.0";

export const MESSAGE_KINDS = [
  "HELLO",
  "WELCOME",
  "FRAME",
  "UPDATE",
  "ACK",
  "CONTROL",
  "BYE",
] as const;

export type MessageKind = (typeof MESSAGE_KINDS)[number];

export const PARTICIPANT_CLASSES = [
  "car",
  "truck",
  "bus",
  "tram",
  "bicycle",
  "pedestrian",
  "unknown",
] as const;

export type ParticipantClass = (typeof PARTICIPANT_CLASSES)[number];

export const PARTICIPANT_SOURCES = [
  "simulated",
  "recorded",
  "external_client",
  "v2x",
  "perception",
] as const;

export type ParticipantSource = (typeof PARTICIPANT_SOURCES)[number];

export interface ParticipantState {
  id: number;
  timestamp: number;
  class: ParticipantClass;
  /** ENU meters relative to the scenario's geo anchor. */
  position: [number, number, number];
  yaw: number;
  yaw_rate: number;
  speed: number;
  /** length, width, height in meters. */
  dimensions: [number, number, number];
  source: ParticipantSource;
}

export interface Message {
  kind: MessageKind;
  frame_no: number;
  sim_time: number;
  client_id: string | null;
  payload: ParticipantState[];
  control: Record<string, unknown>;
}

export class MalformedMessage extends Error {}

/** Build a message with protocol defaults filled in. */
export function message(kind: MessageKind, partial: Partial<Message> = {}): Message {
  return {
    kind,
    frame_no: partial.frame_no ?? 0,
    sim_time: partial.sim_time ?? 0.0,
    client_id: partial.client_id ?? null,
    payload: partial.payload ?? [],
    control: partial.control ?? {},
  };
}

/** JSON.stringify with recursively sorted object keys (canonical form). */
function canonicalJson(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => JSON.stringify(k) + ":" + canonicalJson(v));
  return "{" + entries.join(",") + "}";
}

/** Serialize to one newline-terminated JSON line. */
export function encodeMessage(msg: Message): string {
  const doc = {
    kind: msg.kind,
    frame_no: msg.frame_no,
    sim_time: msg.sim_time,
    client_id: msg.client_id,
    payload: msg.payload.map(stateToDoc),
    control: msg.control,
  };
  return canonicalJson(doc) + "\n";
}

function stateToDoc(p: ParticipantState): Record<string, unknown> {
  return {
    id: p.id,
    timestamp: p.timestamp,
    class: p.class,
    position: [...p.position],
    yaw: p.yaw,
    yaw_rate: p.yaw_rate,
    speed: p.speed,
    dimensions: [...p.dimensions],
    source: p.source,
  };
}

function asNumber(doc: Record<string, unknown>, key: string): number {
  const v = doc[key];
  if (typeof v !== "number" || Number.isNaN(v)) {
    throw new MalformedMessage(`bad field: ${key}`);
  }
  return v;
}

function asVec3(doc: Record<string, unknown>, key: string): [number, number, number] {
  const v = doc[key];
  if (!Array.isArray(v) || v.length !== 3 || v.some((x) => typeof x !== "number")) {
    throw new MalformedMessage(`bad field: ${key}`);
  }
  return [v[0], v[1], v[2]];
}

export function parseParticipant(raw: unknown): ParticipantState {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new MalformedMessage("participant is not a JSON object");
  }
  const doc = raw as Record<string, unknown>;
  const cls = doc["class"];
  if (typeof cls !== "string" || !(PARTICIPANT_CLASSES as readonly string[]).includes(cls)) {
    throw new MalformedMessage(`bad field: class (${String(cls)})`);
  }
  const source = doc["source"] ?? "simulated";
  if (
    typeof source !== "string" ||
    !(PARTICIPANT_SOURCES as readonly string[]).includes(source)
  ) {
    throw new MalformedMessage(`bad field: source (${String(source)})`);
  }
  const state: ParticipantState = {
    id: asNumber(doc, "id"),
    timestamp: asNumber(doc, "timestamp"),
    class: cls as ParticipantClass,
    position: asVec3(doc, "position"),
    yaw: asNumber(doc, "yaw"),
    yaw_rate: asNumber(doc, "yaw_rate"),
    speed: asNumber(doc, "speed"),
    dimensions: asVec3(doc, "dimensions"),
    source: source as ParticipantSource,
  };
  if (state.id < 0 || !Number.isInteger(state.id)) {
    throw new MalformedMessage("participant id must be a non-negative integer");
  }
  if (state.speed < 0) {
    throw new MalformedMessage("speed must be non-negative");
  }
  if (state.dimensions.some((d) => d <= 0)) {
    throw new MalformedMessage("dimensions must be positive");
  }
  return state;
}

/** Parse one line back into a message; unknown fields are ignored. */
export function decodeMessage(line: string): Message {
  const text = line.trim();
  if (!text) {
    throw new MalformedMessage("empty message line");
  }
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new MalformedMessage(`invalid JSON: ${(err as Error).message}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new MalformedMessage("message is not a JSON object");
  }
  const obj = doc as Record<string, unknown>;
  const kind = obj["kind"];
  if (typeof kind !== "string" || !(MESSAGE_KINDS as readonly string[]).includes(kind)) {
    throw new MalformedMessage(`bad or missing kind: ${String(kind)}`);
  }
  const rawPayload = obj["payload"] ?? [];
  if (!Array.isArray(rawPayload)) {
    throw new MalformedMessage("bad field: payload");
  }
  const frameNo = obj["frame_no"] ?? 0;
  const simTime = obj["sim_time"] ?? 0.0;
  if (typeof frameNo !== "number" || typeof simTime !== "number") {
    throw new MalformedMessage("bad field: frame_no/sim_time");
  }
  const clientId = obj["client_id"] ?? null;
  if (clientId !== null && typeof clientId !== "string") {
    throw new MalformedMessage("bad field: client_id");
  }
  const control = obj["control"] ?? {};
  if (typeof control !== "object" || control === null || Array.isArray(control)) {
    throw new MalformedMessage("bad field: control");
  }
  return {
    kind: kind as MessageKind,
    frame_no: frameNo,
    sim_time: simTime,
    client_id: clientId,
    payload: rawPayload.map(parseParticipant),
    control: control as Record<string, unknown>,
  };
}
