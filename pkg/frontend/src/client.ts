/**
 * Socket client for the control service's line-delimited JSON channel.
 * Every outbound message is schema-validated; inbound lines are parsed into
 * typed service messages and fanned out to subscribers in arrival order.
 */

import * as net from "node:net";

import {
  type ClientMessage,
  type ServiceMessage,
  decodeServiceMessage,
  encodeClientMessage,
} from "./protocol.js";

export type MessageHandler = (msg: ServiceMessage) => void;

export class ServiceClient {
  private socket: net.Socket | null = null;
  private buffer = "";
  private handlers: MessageHandler[] = [];
  private waiters: Array<{
    types: Set<ServiceMessage["type"]>;
    resolve: (msg: ServiceMessage) => void;
  }> = [];

  async connect(host: string, port: number, timeoutMs = 5000): Promise<void> {
    await new Promise<void>((resolve, reject) => {
      const socket = net.createConnection({ host, port });
      const timer = setTimeout(
        () => reject(new Error(`connect timeout to ${host}:${port}`)),
        timeoutMs,
      );
      socket.once("connect", () => {
        clearTimeout(timer);
        this.socket = socket;
        resolve();
      });
      socket.once("error", (err) => {
        clearTimeout(timer);
        reject(err);
      });
      socket.on("data", (chunk) => this.onData(chunk.toString("utf-8")));
    });
  }

  close(): void {
    this.socket?.destroy();
    this.socket = null;
  }

  onMessage(handler: MessageHandler): void {
    this.handlers.push(handler);
  }

  send(msg: ClientMessage): void {
    if (!this.socket) throw new Error("not connected");
    this.socket.write(encodeClientMessage(msg) + "\n");
  }

  /** Send and resolve with the next message of one of the given types. */
  request(
    msg: ClientMessage,
    types: Array<ServiceMessage["type"]>,
    timeoutMs = 15000,
  ): Promise<ServiceMessage> {
    const wait = this.waitFor(types, timeoutMs);
    this.send(msg);
    return wait;
  }

  waitFor(
    types: Array<ServiceMessage["type"]>,
    timeoutMs = 15000,
  ): Promise<ServiceMessage> {
    return new Promise((resolve, reject) => {
      const waiter = { types: new Set(types), resolve };
      this.waiters.push(waiter);
      setTimeout(() => {
        const index = this.waiters.indexOf(waiter);
        if (index >= 0) {
          this.waiters.splice(index, 1);
          reject(new Error(`no ${types.join("/")} within ${timeoutMs}ms`));
        }
      }, timeoutMs);
    });
  }

  private onData(text: string): void {
    this.buffer += text;
    let newline = this.buffer.indexOf("\n");
    while (newline >= 0) {
      const line = this.buffer.slice(0, newline);
      this.buffer = this.buffer.slice(newline + 1);
      if (line.trim()) {
        let msg: ServiceMessage;
        try {
          msg = decodeServiceMessage(line);
        } catch (err) {
          // an unparseable broadcast must never take the UI down
          console.warn("undecodable service message:", line, err);
          newline = this.buffer.indexOf("\n");
          continue;
        }
        for (const handler of this.handlers) handler(msg);
        const hit = this.waiters.findIndex((w) => w.types.has(msg.type));
        if (hit >= 0) {
          const [waiter] = this.waiters.splice(hit, 1);
          waiter!.resolve(msg);
        }
      }
      newline = this.buffer.indexOf("\n");
    }
  }
}
