import { readFileSync } from "node:fs";
import { spawnSync } from "node:child_process";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  MESSAGE_KINDS,
  MalformedMessage,
  Message,
  PROTOCOL_VERSION,
  ParticipantState,
  decodeMessage,
  encodeMessage,
  message,
} from "../src/protocol.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const CORPUS_PATH = join(HERE, "corpus", "messages.jsonl");

function sampleState(overrides: Partial<ParticipantState> = {}): ParticipantState {
  return {
    id: 7,
    timestamp: 1.25,
    class: "car",
    position: [10.5, -2.0, 0.0],
    yaw: 0.125,
    yaw_rate: 0.0,
    speed: 12.5,
    dimensions: [4.0, 1.8, 1.5],
    source: "simulated",
    ...overrides,
  };
}

describe("protocol round trips", () => {
  it("exposes the pinned version and kinds", () => {
    expect(PROTOCOL_VERSION).toBe("1.0");
    expect(MESSAGE_KINDS).toEqual(["HELLO", "WELCOME", "FRAME", "UPDATE", "ACK", "CONTROL", "BYE"]);
  });

  it("round-trips every kind with payload and control", () => {
    for (const kind of MESSAGE_KINDS) {
      const original = message(kind, {
        frame_no: 42,
        sim_time: 2.1,
        client_id: "client-a",
        payload: [sampleState(), sampleState({ id: 8, class: "pedestrian" })],
        control: { version: "1.0", lockstep: true, note: "hi" },
      });
      const decoded = decodeMessage(encodeMessage(original));
      expect(decoded).toEqual(original);
    }
  });

  it("fills protocol defaults on decode", () => {
    const decoded = decodeMessage('{"kind":"ACK"}');
    expect(decoded).toEqual(message("ACK"));
    expect(decoded.client_id).toBeNull();
    expect(decoded.payload).toEqual([]);
    expect(decoded.control).toEqual({});
  });

  it("emits one newline-terminated line with sorted keys", () => {
    const encoded = encodeMessage(message("BYE", { client_id: "z" }));
    expect(encoded.endsWith("\n")).toBe(true);
    expect(encoded.indexOf("\n")).toBe(encoded.length - 1);
    expect(encoded.indexOf('"client_id"')).toBeLessThan(encoded.indexOf('"kind"'));
    expect(encoded.indexOf('"control"')).toBeLessThan(encoded.indexOf('"frame_no"'));
    expect(encoded).not.toContain(" ");
  });

  it("ignores unknown fields on decode", () => {
    const decoded = decodeMessage(
      '{"kind":"FRAME","frame_no":3,"sim_time":0.15,"future_field":{"a":1},"payload":[],"control":{}}',
    );
    expect(decoded.frame_no).toBe(3);
    expect((decoded as unknown as Record<string, unknown>)["future_field"]).toBeUndefined();
  });

  it("rejects malformed lines", () => {
    const bad = [
      "",
      "   ",
      "not json",
      "[1,2,3]",
      '"FRAME"',
      '{"kind":"NOPE"}',
      '{"frame_no":1}',
      '{"kind":"FRAME","payload":{"id":1}}',
      '{"kind":"FRAME","frame_no":"x"}',
      '{"kind":"FRAME","client_id":7}',
      '{"kind":"FRAME","control":[1]}',
    ];
    for (const line of bad) {
      expect(() => decodeMessage(line), line).toThrow(MalformedMessage);
    }
  });

  it("rejects invalid participant states", () => {
    const cases: Array<Partial<Record<keyof ParticipantState, unknown>>> = [
      { id: -1 },
      { id: 1.5 },
      { speed: -0.1 },
      { dimensions: [4.0, 0.0, 1.5] },
      { dimensions: [4.0, 1.8] },
      { position: "origin" },
      { class: "spaceship" },
      { source: "telepathy" },
      { yaw: "zero" },
    ];
    for (const patch of cases) {
      const doc = { ...sampleState(), ...patch };
      const line = JSON.stringify({ kind: "UPDATE", payload: [doc] });
      expect(() => decodeMessage(line), line).toThrow(MalformedMessage);
    }
  });

  it("defaults a missing participant source to simulated", () => {
    const doc = { ...sampleState() } as Record<string, unknown>;
    delete doc["source"];
    const decoded = decodeMessage(JSON.stringify({ kind: "FRAME", payload: [doc] }));
    expect(decoded.payload[0].source).toBe("simulated");
  });
});

describe("shared cross-language corpus", () => {
  const lines = readFileSync(CORPUS_PATH, "utf8").split("\n").filter((l) => l.length > 0);

  it("has the expected size", () => {
    expect(lines.length).toBe(200);
  });

  it("decodes every corpus line and re-encodes to the same document", () => {
    for (const line of lines) {
      const decoded: Message = decodeMessage(line);
      const reEncoded = encodeMessage(decoded);
      // Number formatting differs between languages ("5.0" vs "5"), so
      // compare the parsed documents, not the bytes.
      expect(JSON.parse(reEncoded)).toEqual(JSON.parse(line));
    }
  });

  it("re-encoded lines survive a decode/encode pass in the reference implementation", () => {
    const reEncoded = lines.map((line) => encodeMessage(decodeMessage(line))).join("");
    const script = [
      "import sys",
      "from taftwin.cosim.protocol import decode_message, encode_message",
      "for line in sys.stdin:",
      "    if line.strip():",
      "        sys.stdout.buffer.write(encode_message(decode_message(line)))",
    ].join("\n");
    const result = spawnSync("python3", ["-c", script], {
      input: reEncoded,
      encoding: "utf8",
      maxBuffer: 64 * 1024 * 1024,
    });
    expect(result.status, result.stderr).toBe(0);
    // The reference implementation must reproduce the corpus byte for byte.
    expect(result.stdout).toBe(lines.join("\n") + "\n");
  });
});
