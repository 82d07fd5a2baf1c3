/**
 * Ready-made frame handlers for `ClientSession.stepLoop`.
 */

import { Message, ParticipantState } from "./protocol.js";
import { ClientSession, FrameHandler } from "./client.js";

function ownedStates(frame: Message, session: ClientSession): ParticipantState[] {
  return frame.payload.filter((p) => session.ownedIds.includes(p.id));
}

/** Echoes owned participants back unchanged, freezing them in place. */
export const identityAgent: FrameHandler = (frame, session) => ownedStates(frame, session);

/**
 * Moves each owned participant `metersPerFrame` along +x every frame,
 * starting from where it was first seen.
 */
export function constantSpeedAgent(metersPerFrame: number): FrameHandler {
  const bases = new Map<number, ParticipantState>();
  const framesSeen = new Map<number, number>();
  return (frame, session) =>
    ownedStates(frame, session).map((state) => {
      let base = bases.get(state.id);
      if (base === undefined) {
        base = state;
        bases.set(state.id, state);
      }
      const n = (framesSeen.get(state.id) ?? 0) + 1;
      framesSeen.set(state.id, n);
      return {
        ...base,
        timestamp: frame.sim_time,
        position: [base.position[0] + metersPerFrame * n, base.position[1], base.position[2]],
        speed: session.dt > 0 ? metersPerFrame / session.dt : 0,
        source: "external_client",
      };
    });
}
