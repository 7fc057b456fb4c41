/**
 * Typed client for the /v1 API. The UI speaks only these endpoints and the
 * event stream; it has no direct file access.
 */

import type {
  ActionEvent,
  ApiError,
  CommandBody,
  CommandResult,
  DocumentRecord,
  OutputPage,
  StreamMessage,
  WorkspaceSnapshot,
} from './types.js';

export class RequestFailed extends Error {
  constructor(readonly detail: ApiError) {
    super(`${detail.error}: ${detail.message}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let error = 'HTTPError';
  let message = response.statusText;
  try {
    const body = await response.json();
    const detail = body?.detail ?? body;
    if (typeof detail === 'string') message = detail;
    else if (detail && typeof detail === 'object') {
      error = detail.error ?? error;
      message = detail.message ?? JSON.stringify(detail);
    }
  } catch {
    /* non-JSON body */
  }
  return { status: response.status, error, message };
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private token: string | null = null,
    private readonly fetcher: typeof fetch = fetch,
  ) {}

  private headers(): Record<string, string> {
    const h: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.token) h['Authorization'] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetcher(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) throw new RequestFailed(await parseError(response));
    return (await response.json()) as T;
  }

  async createSession(actorId: string): Promise<string> {
    const result = await this.request<{ token: string }>('POST', '/v1/sessions', { actor_id: actorId });
    this.token = result.token;
    return result.token;
  }

  get sessionToken(): string | null {
    return this.token;
  }

  snapshot(workspaceId: string): Promise<{ snapshot: WorkspaceSnapshot; seq: number }> {
    return this.request('GET', `/v1/workspaces/${workspaceId}/snapshot`);
  }

  log(workspaceId: string, fromSeq = 1): Promise<{ events: ActionEvent[] }> {
    return this.request('GET', `/v1/workspaces/${workspaceId}/log?from_seq=${fromSeq}`);
  }

  command(workspaceId: string, body: CommandBody): Promise<CommandResult> {
    return this.request('POST', `/v1/workspaces/${workspaceId}/commands`, body);
  }

  output(workspaceId: string, nodeId: string, offset = 0, limit = 50): Promise<OutputPage> {
    return this.request(
      'GET',
      `/v1/workspaces/${workspaceId}/nodes/${nodeId}/output?offset=${offset}&limit=${limit}`,
    );
  }

  document(docId: string): Promise<DocumentRecord> {
    return this.request('GET', `/v1/documents/${encodeURIComponent(docId)}`);
  }

  streamUrl(workspaceId: string, fromSeq: number): string {
    const ws = this.baseUrl.replace(/^http/, 'ws');
    return `${ws}/v1/workspaces/${workspaceId}/stream?token=${this.token ?? ''}&from_seq=${fromSeq}`;
  }
}

export interface StreamSocket {
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((err?: unknown) => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => StreamSocket;

/**
 * Event-stream connection with gapless resume.
 *
 * Messages are deduplicated by seq, so the model sees each event exactly
 * once even across reconnects; unlogged status messages (seq null) pass
 * straight through.
 */
export class EventStream {
  private socket: StreamSocket | null = null;
  private nextSeq: number;
  private closed = false;
  private reconnectDelayMs = 200;

  constructor(
    private readonly api: ApiClient,
    private readonly workspaceId: string,
    fromSeq: number,
    private readonly onMessage: (message: StreamMessage) => void,
    private readonly socketFactory: SocketFactory,
  ) {
    this.nextSeq = fromSeq;
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    const socket = this.socketFactory(this.api.streamUrl(this.workspaceId, this.nextSeq));
    this.socket = socket;
    socket.onmessage = (event) => {
      const message = JSON.parse(String(event.data)) as StreamMessage;
      if (message.seq === null || message.seq === undefined) {
        this.onMessage(message);
        return;
      }
      if (message.seq < this.nextSeq) return; // replayed duplicate after resume
      this.nextSeq = message.seq + 1;
      this.onMessage(message);
    };
    socket.onclose = () => {
      this.socket = null;
      if (!this.closed) {
        setTimeout(() => this.connect(), this.reconnectDelayMs);
        this.reconnectDelayMs = Math.min(this.reconnectDelayMs * 2, 5000);
      }
    };
    socket.onerror = () => {
      /* close follows */
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
