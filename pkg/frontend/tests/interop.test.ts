import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import { connect, VersionMismatch } from "../src/client.js";
import { constantSpeedAgent, identityAgent } from "../src/agents.js";
import { ParticipantState } from "../src/protocol.js";

const TEST_TIMEOUT = 30_000;

interface ServerHandle {
  port: number;
  proc: ChildProcess;
  exited: Promise<number | null>;
  recordingPath: string;
}

const tempDirs: string[] = [];
const procs: ChildProcess[] = [];

afterAll(() => {
  for (const proc of procs) {
    if (proc.exitCode === null) proc.kill("SIGKILL");
  }
  for (const dir of tempDirs) {
    rmSync(dir, { recursive: true, force: true });
  }
});

function scenario(duration: number): Record<string, unknown> {
  return {
    network_path: ":straight:",
    duration,
    dt: 0.05,
    seed: 1,
    vehicle_demand: [],
  };
}

/** Start `taf-twin serve` and resolve once it reports its bound port. */
function startServer(
  config: Record<string, unknown>,
  extraArgs: string[] = [],
): Promise<ServerHandle> {
  const dir = mkdtempSync(join(tmpdir(), "taftwin-interop-"));
  tempDirs.push(dir);
  const configPath = join(dir, "scenario.json");
  const recordingPath = join(dir, "run.dtrec");
  writeFileSync(configPath, JSON.stringify(config));
  const proc = spawn(
    "taf-twin",
    ["serve", "--config", configPath, "--port", "0", "--out", recordingPath, ...extraArgs],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  procs.push(proc);
  const exited = new Promise<number | null>((resolve) => proc.on("exit", resolve));
  return new Promise((resolve, reject) => {
    let out = "";
    let err = "";
    proc.stdout!.setEncoding("utf8");
    proc.stderr!.setEncoding("utf8");
    proc.stderr!.on("data", (chunk: string) => (err += chunk));
    proc.stdout!.on("data", (chunk: string) => {
      out += chunk;
      const match = out.match(/listening on 127\.0\.0\.1:(\d+) \(protocol 1\.0\)/);
      if (match) {
        resolve({ port: Number(match[1]), proc, exited, recordingPath });
      }
    });
    proc.on("exit", () => reject(new Error(`server exited early: ${out}\n${err}`)));
  });
}

interface RecordedFrameDoc {
  frame_no: number;
  payload: Array<Record<string, unknown>>;
}

function readRecordedFrames(path: string): RecordedFrameDoc[] {
  return readFileSync(path, "utf8")
    .split("\n")
    .filter((line) => line.length > 0)
    .map((line) => JSON.parse(line) as Record<string, unknown>)
    .filter((doc) => doc["type"] === "frame") as unknown as RecordedFrameDoc[];
}

function trackOf(frames: RecordedFrameDoc[], pid: number): Array<{ frameNo: number; x: number }> {
  const track: Array<{ frameNo: number; x: number }> = [];
  for (const frame of frames) {
    for (const p of frame.payload) {
      if (p["id"] === pid) {
        track.push({ frameNo: frame.frame_no, x: (p["position"] as number[])[0] });
      }
    }
  }
  return track;
}

function spawnCar(speed = 0): ParticipantState {
  return {
    id: 0,
    timestamp: 0.0,
    class: "car",
    position: [0.0, 0.0, 0.0],
    yaw: 0.0,
    yaw_rate: 0.0,
    speed,
    dimensions: [4.0, 1.8, 1.5],
    source: "external_client",
  };
}

describe("interoperability with the reference master", () => {
  it(
    "handshakes, drives a spawned car, and the commanded positions land in the recording",
    async () => {
      // Realtime pacing keeps the master from finishing frames before the
      // socket is connected.
      const server = await startServer(scenario(1.5), ["--realtime"]);
      const session = await connect({
        port: server.port,
        clientId: "ts-driver",
        spawn: [spawnCar()],
      });
      expect(session.clientId).toBe("ts-driver");
      expect(session.dt).toBe(0.05);
      expect(session.spawnedIds.length).toBe(1);
      const pid = session.spawnedIds[0];

      const handled = await session.stepLoop(constantSpeedAgent(0.5));
      session.destroy();
      expect(handled).toBeGreaterThan(10);
      expect(await server.exited).toBe(0);

      // The car appears at its spawn point and advances exactly 0.5 m per
      // frame: an update sent for frame f is applied in frame f+1.
      const track = trackOf(readRecordedFrames(server.recordingPath), pid);
      expect(track.length).toBeGreaterThan(10);
      for (let i = 0; i < track.length; i += 1) {
        expect(track[i].frameNo).toBe(track[0].frameNo + i);
        expect(track[i].x).toBe(0.5 * i);
      }
    },
    TEST_TIMEOUT,
  );

  it(
    "an identity handler freezes the spawned car in place",
    async () => {
      const server = await startServer(scenario(1.0), ["--realtime"]);
      const session = await connect({
        port: server.port,
        clientId: "ts-freezer",
        spawn: [spawnCar()],
      });
      const pid = session.spawnedIds[0];
      await session.stepLoop(identityAgent);
      session.destroy();
      expect(await server.exited).toBe(0);

      const track = trackOf(readRecordedFrames(server.recordingPath), pid);
      expect(track.length).toBeGreaterThan(5);
      for (const point of track) {
        expect(point.x).toBe(0.0);
      }
    },
    TEST_TIMEOUT,
  );

  it(
    "a wrong protocol version is refused with the server's expected version",
    async () => {
      const server = await startServer(scenario(5.0), ["--realtime"]);
      try {
        await expect(
          connect({ port: server.port, clientId: "ts-old", version: "0.9" }),
        ).rejects.toThrow(VersionMismatch);
        await expect(
          connect({ port: server.port, clientId: "ts-old-2", version: "0.9" }),
        ).rejects.toMatchObject({ expected: "1.0", got: "0.9" });
      } finally {
        server.proc.kill("SIGKILL");
        await server.exited;
      }
    },
    TEST_TIMEOUT,
  );

  it(
    "a silent lockstep client does not stall the master; its car is dead-reckoned",
    async () => {
      const server = await startServer(scenario(1.0), [
        "--realtime",
        "--barrier-timeout",
        "0.05",
      ]);
      const session = await connect({
        port: server.port,
        clientId: "ts-silent",
        spawn: [spawnCar(10.0)],
      });
      const pid = session.spawnedIds[0];

      // Never answer any FRAME: the master must finish on its own clock.
      const start = Date.now();
      expect(await server.exited).toBe(0);
      expect(Date.now() - start).toBeLessThan(15_000);
      session.destroy();

      const frames = readRecordedFrames(server.recordingPath);
      expect(frames.length).toBe(21); // initial frame + 1.0 s at dt 0.05
      const track = trackOf(frames, pid);
      expect(track.length).toBeGreaterThan(5);
      const first = track[0];
      const last = track[track.length - 1];
      // Constant-speed fallback: 10 m/s for (last - first) frames of 0.05 s.
      expect(last.x - first.x).toBeCloseTo(10.0 * 0.05 * (last.frameNo - first.frameNo), 6);
    },
    TEST_TIMEOUT,
  );
});
