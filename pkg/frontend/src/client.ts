/**
 * TCP client session for the lockstep co-simulation protocol.
 *
 * `connect()` performs the HELLO/WELCOME handshake and returns a
 * `ClientSession`. `stepLoop()` implements the lockstep contract: for
 * every FRAME received it sends exactly one UPDATE echoing the frame
 * number, carrying whatever states the handler returns.
 */

import * as net from "node:net";

import {
  Message,
  ParticipantState,
  PROTOCOL_VERSION,
  decodeMessage,
  encodeMessage,
  message,
} from "./protocol.js";

export class VersionMismatch extends Error {
  constructor(
    public readonly expected: string,
    public readonly got: string,
  ) {
    super(`protocol version mismatch: server expects ${expected}, client sent ${got}`);
  }
}

export class ConnectionClosed extends Error {}

export interface ConnectOptions {
  host?: string;
  port: number;
  /** Requested client id; the server may rename it to avoid duplicates. */
  clientId?: string;
  version?: string;
  /** Existing participant ids to take over (first claimant wins). */
  claims?: number[];
  /** New participants to create; the server assigns fresh ids. */
  spawn?: ParticipantState[];
  lockstep?: boolean;
  timeoutMs?: number;
}

/** Buffers socket data and yields complete newline-terminated lines. */
class LineReader {
  private buffer = "";
  private lines: string[] = [];
  private waiters: Array<(line: string | null) => void> = [];
  private ended = false;

  constructor(socket: net.Socket) {
    socket.setEncoding("utf8");
    socket.on("data", (chunk: string) => {
      this.buffer += chunk;
      let idx: number;
      while ((idx = this.buffer.indexOf("\n")) >= 0) {
        this.push(this.buffer.slice(0, idx + 1));
        this.buffer = this.buffer.slice(idx + 1);
      }
    });
    const finish = () => {
      this.ended = true;
      while (this.waiters.length > 0) {
        this.waiters.shift()!(null);
      }
    };
    socket.on("end", finish);
    socket.on("close", finish);
    socket.on("error", finish);
  }

  private push(line: string): void {
    const waiter = this.waiters.shift();
    if (waiter) {
      waiter(line);
    } else {
      this.lines.push(line);
    }
  }

  /** Next full line, or null once the peer has hung up. */
  nextLine(timeoutMs?: number): Promise<string | null> {
    const queued = this.lines.shift();
    if (queued !== undefined) {
      return Promise.resolve(queued);
    }
    if (this.ended) {
      return Promise.resolve(null);
    }
    return new Promise((resolve, reject) => {
      let timer: NodeJS.Timeout | undefined;
      const waiter = (line: string | null) => {
        if (timer !== undefined) clearTimeout(timer);
        resolve(line);
      };
      if (timeoutMs !== undefined) {
        timer = setTimeout(() => {
          const i = this.waiters.indexOf(waiter);
          if (i >= 0) this.waiters.splice(i, 1);
          reject(new Error(`timed out after ${timeoutMs} ms waiting for a message`));
        }, timeoutMs);
      }
      this.waiters.push(waiter);
    });
  }
}

export type FrameHandler = (
  frame: Message,
  session: ClientSession,
) => ParticipantState[] | Promise<ParticipantState[]>;

export class ClientSession {
  /** Participant ids this client owns (claims granted plus spawned). */
  readonly ownedIds: number[];
  frameNo = 0;

  constructor(
    private readonly socket: net.Socket,
    private readonly reader: LineReader,
    public readonly clientId: string,
    public readonly dt: number,
    grantedIds: number[],
    public readonly spawnedIds: number[],
    private readonly timeoutMs: number,
  ) {
    this.ownedIds = [...grantedIds, ...spawnedIds];
  }

  send(msg: Message): void {
    this.socket.write(encodeMessage(msg));
  }

  async nextMessage(timeoutMs?: number): Promise<Message | null> {
    const line = await this.reader.nextLine(timeoutMs ?? this.timeoutMs);
    return line === null ? null : decodeMessage(line);
  }

  /**
   * Drive the lockstep loop: per FRAME, call the handler and reply with
   * one UPDATE echoing the frame number. Returns the number of frames
   * handled (the server closing the connection ends the loop).
   */
  async stepLoop(handler: FrameHandler, opts: { maxFrames?: number } = {}): Promise<number> {
    let handled = 0;
    while (opts.maxFrames === undefined || handled < opts.maxFrames) {
      const msg = await this.nextMessage();
      if (msg === null || msg.kind === "BYE") {
        break;
      }
      if (msg.kind !== "FRAME") {
        continue;
      }
      this.frameNo = msg.frame_no;
      const states = await handler(msg, this);
      this.send(
        message("UPDATE", {
          frame_no: msg.frame_no,
          sim_time: msg.sim_time,
          client_id: this.clientId,
          payload: states,
        }),
      );
      handled += 1;
    }
    return handled;
  }

  close(): void {
    this.socket.write(encodeMessage(message("BYE", { client_id: this.clientId })));
    this.socket.end();
  }

  destroy(): void {
    this.socket.destroy();
  }
}

export async function connect(options: ConnectOptions): Promise<ClientSession> {
  const host = options.host ?? "127.0.0.1";
  const timeoutMs = options.timeoutMs ?? 10_000;
  const socket = net.createConnection({ host, port: options.port });
  socket.setNoDelay(true);
  await new Promise<void>((resolve, reject) => {
    socket.once("connect", () => resolve());
    socket.once("error", (err) => reject(err));
  });
  const reader = new LineReader(socket);

  const version = options.version ?? PROTOCOL_VERSION;
  const control: Record<string, unknown> = {
    version,
    lockstep: options.lockstep ?? true,
  };
  if (options.claims !== undefined) control["claims"] = options.claims;
  if (options.spawn !== undefined) control["spawn"] = options.spawn;
  socket.write(
    encodeMessage(message("HELLO", { client_id: options.clientId ?? null, control })),
  );

  // The master may broadcast a FRAME between registering the client and
  // sending WELCOME; skip anything else until the handshake reply arrives.
  let reply: Message;
  for (;;) {
    const line = await reader.nextLine(timeoutMs);
    if (line === null) {
      socket.destroy();
      throw new ConnectionClosed("server closed the connection during handshake");
    }
    reply = decodeMessage(line);
    if (reply.kind === "CONTROL" && reply.control["error"] === "version_mismatch") {
      socket.destroy();
      throw new VersionMismatch(String(reply.control["expected"]), String(reply.control["got"]));
    }
    if (reply.kind === "WELCOME") {
      break;
    }
  }
  return new ClientSession(
    socket,
    reader,
    String(reply.client_id ?? ""),
    Number(reply.control["dt"]),
    (reply.control["granted_ids"] as number[]) ?? [],
    (reply.control["spawned_ids"] as number[]) ?? [],
    timeoutMs,
  );
}
