/** Host side of the callback bridge.
 *
 * Listens on a Unix socket; each connection carries one batched prediction
 * request in the engine's external-model format (handshake line, one CSV row
 * per observation, END). The callback is invoked once per batch with all
 * rows. Requests are processed strictly one at a time on the event loop, so
 * callback invocations never overlap even if the engine runs its batches
 * concurrently.
 */

import * as net from 'node:net';

export type PredictCallback = (rows: number[][], featureNames: string[]) => ArrayLike<number>;

export class BridgeServer {
  private server: net.Server | null = null;
  private queue: Promise<void> = Promise.resolve();
  /** First callback failure, kept verbatim for the caller. */
  callbackError: Error | null = null;

  constructor(private readonly callback: PredictCallback) {}

  async listen(socketPath: string): Promise<void> {
    // half-open: the child ends its write side first, then reads the reply
    this.server = net.createServer({ allowHalfOpen: true }, (socket) => this.enqueue(socket));
    await new Promise<void>((resolve, reject) => {
      this.server!.once('error', reject);
      this.server!.listen(socketPath, resolve);
    });
  }

  async close(): Promise<void> {
    await this.queue;
    if (this.server) {
      await new Promise<void>((resolve) => this.server!.close(() => resolve()));
      this.server = null;
    }
  }

  private enqueue(socket: net.Socket): void {
    this.queue = this.queue.then(() => this.handle(socket)).catch(() => undefined);
  }

  private async handle(socket: net.Socket): Promise<void> {
    let request = '';
    socket.setEncoding('utf8');
    await new Promise<void>((resolve) => {
      socket.on('data', (chunk) => { request += chunk; });
      socket.on('end', resolve);
      socket.on('error', resolve);
    });
    let reply: string;
    try {
      reply = this.respond(request);
    } catch (err) {
      const error = err instanceof Error ? err : new Error(String(err));
      if (!this.callbackError) {
        this.callbackError = error;
      }
      reply = `ERR ${error.message}\n`;
    }
    await new Promise<void>((resolve) => socket.end(reply, resolve));
  }

  private respond(request: string): string {
    const lines = request.split('\n').filter((ln) => ln.length > 0);
    const head = lines[0] ?? '';
    const match = /^CONDSHAP\/1 (\d+) (.*)$/.exec(head);
    if (!match) {
      throw new Error(`unexpected bridge handshake: ${head}`);
    }
    const m = Number(match[1]);
    const names = match[2]!.split(',');
    const rows: number[][] = [];
    for (const line of lines.slice(1)) {
      if (line === 'END') break;
      const cells = line.split(',').map(Number);
      if (cells.length !== m || cells.some((v) => Number.isNaN(v))) {
        throw new Error(`malformed bridge row: ${line}`);
      }
      rows.push(cells);
    }
    const out = Array.from(this.callback(rows, names), (v) => Number(v));
    if (out.length !== rows.length) {
      throw new Error(`callback returned ${out.length} predictions for ${rows.length} rows`);
    }
    for (let i = 0; i < out.length; i++) {
      if (!Number.isFinite(out[i]!)) {
        throw new Error(`callback returned a non-finite prediction for row ${i}`);
      }
    }
    return out.map((v) => String(v)).join('\n') + '\nEND\n';
  }
}
