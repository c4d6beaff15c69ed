/**
 * Request/reply correlation over one WebSocket, transport-agnostic so the
 * same class drives the browser UI and headless Node clients. Edits made
 * while offline queue locally and flush on reconnect.
 */

import {
  ErrorEnvelope,
  FrameMessage,
  Reply,
  validateOutgoing,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "message", fn: (ev: { data: unknown }) => void): void;
  addEventListener(type: "open" | "close" | "error", fn: () => void): void;
  readyState: number;
}

const OPEN = 1;

export class ServiceError extends Error {
  constructor(
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

export class Session {
  private nextId = 1;
  private pending = new Map<
    number,
    { resolve: (r: Reply) => void; reject: (e: Error) => void }
  >();
  private queue: string[] = [];
  onFrame: (frame: FrameMessage) => void = () => undefined;
  onServerError: (err: ErrorEnvelope["error"]) => void = () => undefined;
  offline = false;

  constructor(private socket: SocketLike) {
    socket.addEventListener("message", (ev) => this.handleMessage(String(ev.data)));
    socket.addEventListener("open", () => this.flushQueue());
    socket.addEventListener("close", () => {
      this.offline = true;
      for (const { reject } of this.pending.values()) {
        reject(new ServiceError("disconnected", "connection closed"));
      }
      this.pending.clear();
    });
  }

  private handleMessage(raw: string): void {
    let msg: Reply;
    try {
      msg = JSON.parse(raw) as Reply;
    } catch {
      return; // not ours to crash on
    }
    if (msg.type === "frame") {
      this.onFrame(msg as unknown as FrameMessage);
      return;
    }
    const id = msg.id;
    if (typeof id === "number" && this.pending.has(id)) {
      const waiter = this.pending.get(id)!;
      this.pending.delete(id);
      if (msg.type === "error") {
        const env = msg as unknown as ErrorEnvelope;
        waiter.reject(new ServiceError(env.error.code, env.error.message));
      } else {
        waiter.resolve(msg);
      }
      return;
    }
    if (msg.type === "error") {
      this.onServerError((msg as unknown as ErrorEnvelope).error);
    }
  }

  private flushQueue(): void {
    this.offline = false;
    for (const raw of this.queue.splice(0)) this.socket.send(raw);
  }

  /** Sends a validated request; resolves with the matching reply. */
  request(msg: Record<string, unknown>): Promise<Reply> {
    const id = this.nextId++;
    const payload = validateOutgoing({ ...msg, id });
    const raw = JSON.stringify(payload);
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      if (this.socket.readyState === OPEN) {
        this.socket.send(raw);
      } else {
        this.offline = true;
        this.queue.push(raw); // edits queue while offline, flagged
      }
    });
  }

  close(): void {
    this.socket.close();
  }
}
