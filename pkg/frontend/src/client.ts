/**
 * Socket wrapper: parses incoming frames, serializes outgoing
 * commands, and swallows nothing — malformed frames are reported
 * through a separate callback so the UI can surface them.
 */

import {
  encodeCommand,
  parseServerMessage,
  ProtocolError,
  type ClientCommand,
  type ServerMessage,
} from "./protocol.js";

/** The part of a WebSocket the client relies on (injectable in tests). */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: string, listener: (ev: { data?: unknown }) => void): void;
}

export class PlaygroundClient {
  constructor(
    private readonly socket: SocketLike,
    onMessage: (msg: ServerMessage) => void,
    onBadFrame: (err: ProtocolError) => void = () => {},
  ) {
    socket.addEventListener("message", (ev) => {
      let msg: ServerMessage;
      try {
        msg = parseServerMessage(String(ev.data));
      } catch (err) {
        if (err instanceof ProtocolError) {
          onBadFrame(err);
          return;
        }
        throw err;
      }
      onMessage(msg);
    });
  }

  send(cmd: ClientCommand): void {
    this.socket.send(encodeCommand(cmd));
  }

  close(): void {
    this.socket.close();
  }
}
