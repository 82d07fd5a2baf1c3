/**
 * Minimal end-to-end example: connect to a running co-simulation master
 * (`taf-twin serve --config ... --port N`), spawn one car, drive it at a
 * constant speed, and print a short summary.
 *
 * Usage: node dist/example.js --port 7700 [--host 127.0.0.1] [--frames 50]
 */

import { parseArgs } from "node:util";

import { connect } from "./client.js";
import { constantSpeedAgent } from "./agents.js";
import { ParticipantState } from "./protocol.js";

const { values } = parseArgs({
  options: {
    host: { type: "string", default: "127.0.0.1" },
    port: { type: "string" },
    frames: { type: "string", default: "50" },
  },
});

if (values.port === undefined) {
  console.error("usage: node dist/example.js --port PORT [--host HOST] [--frames N]");
  process.exit(1);
}

const spawnState: ParticipantState = {
  id: 0,
  timestamp: 0.0,
  class: "car",
  position: [0.0, 0.0, 0.0],
  yaw: 0.0,
  yaw_rate: 0.0,
  speed: 0.0,
  dimensions: [4.0, 1.8, 1.5],
  source: "external_client",
};

const session = await connect({
  host: values.host,
  port: Number(values.port),
  clientId: "example-client",
  spawn: [spawnState],
});
console.log(
  `connected as ${session.clientId} (dt=${session.dt}s), driving participant(s) ` +
    session.ownedIds.join(", "),
);

const handled = await session.stepLoop(constantSpeedAgent(0.5), {
  maxFrames: Number(values.frames),
});
session.close();
console.log(`drove ${handled} frames, ${(handled * 0.5).toFixed(1)} m covered`);
