/**
 * Typed client for the conversation server.
 *
 * Events are consumed by reading the `text/event-stream` body off a plain
 * fetch instead of `EventSource`: same wire format, but it works in any
 * runtime with streaming fetch and lets us own the retry policy (the
 * connection-loss banner needs to know when the stream drops).
 */

export interface ChatMessage {
  role: string;
  content: string;
}

export interface StateDelta {
  [variable: string]: { old: unknown; new: unknown };
}

export interface TraceEntry {
  type: string;
  [key: string]: unknown;
}

export interface TurnPayload {
  session_id: string;
  turn: number;
  state_delta: StateDelta;
  utterance: string;
  action: string | null;
  source: string;
  state: { variables: Record<string, unknown>; history: ChatMessage[] };
  trace: TraceEntry[];
}

export interface GraphSlot {
  name: string;
  value_type: string;
  examples?: string[];
  rule?: string;
}

export interface GraphNode {
  id: string;
  type: string;
  slots?: GraphSlot[];
  function?: string;
  template?: string;
  confirm_question?: string;
  ack_template?: string;
}

export interface GraphEdge {
  source: string;
  target: string;
  condition?: string;
}

export interface FlowGraph {
  nodes: GraphNode[];
  edges: GraphEdge[];
  global_actions: { name: string; response_template: string }[];
  fallback_actions: { name: string; response_template: string }[];
  start_node: string;
}

export interface ProgramInfo {
  init: Record<string, unknown>;
  dst: { slot: string; value_type: string; node_id: string }[];
  helpers: { var: string; node_id: string; kind: string }[];
  source_graph_hash: string;
}

export interface ProgramResponse {
  program: ProgramInfo;
  graph: FlowGraph;
}

export interface StateSnapshot {
  session_id: string;
  variables: Record<string, unknown>;
  history: ChatMessage[];
  turns: number;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number, readonly detail?: unknown) {
    super(message);
    this.name = 'ApiError';
  }
}

/** Another client is mid-turn on the same session (HTTP 409). */
export class TurnInProgressError extends ApiError {
  constructor() {
    super('turn in progress', 409);
    this.name = 'TurnInProgressError';
  }
}

async function asJson<T>(res: Response): Promise<T> {
  if (res.ok) {
    return (await res.json()) as T;
  }
  let detail: unknown;
  try {
    detail = ((await res.json()) as { detail?: unknown }).detail;
  } catch {
    detail = undefined;
  }
  if (res.status === 409) {
    throw new TurnInProgressError();
  }
  throw new ApiError(`request failed with status ${res.status}`, res.status, detail);
}

export async function fetchProgram(base: string): Promise<ProgramResponse> {
  return asJson(await fetch(`${base}/program`));
}

export async function createSession(base: string): Promise<string> {
  const body = await asJson<{ session_id: string }>(
    await fetch(`${base}/conversations`, { method: 'POST' }),
  );
  return body.session_id;
}

export async function fetchState(base: string, sessionId: string): Promise<StateSnapshot> {
  return asJson(await fetch(`${base}/conversations/${sessionId}/state`));
}

export async function sendMessage(
  base: string,
  sessionId: string,
  text: string,
): Promise<TurnPayload> {
  const res = await fetch(`${base}/conversations/${sessionId}/messages`, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify({ text }),
  });
  return asJson(res);
}

/**
 * Incremental parser for an SSE byte stream.  Feed decoded chunks in, get
 * completed `data:` payloads out.  Comment frames (keep-alives) produce
 * nothing.
 */
export class SseParser {
  private buffer = '';

  push(chunk: string): string[] {
    this.buffer += chunk.replace(/\r\n/g, '\n');
    const payloads: string[] = [];
    let end: number;
    while ((end = this.buffer.indexOf('\n\n')) !== -1) {
      const frame = this.buffer.slice(0, end);
      this.buffer = this.buffer.slice(end + 2);
      const data = frame
        .split('\n')
        .filter((line) => line.startsWith('data:'))
        .map((line) => line.slice(5).replace(/^ /, ''))
        .join('\n');
      if (data) {
        payloads.push(data);
      }
    }
    return payloads;
  }
}

export interface EventHandlers {
  onTurn(payload: TurnPayload): void;
  /** Stream dropped or could not connect; a retry is already scheduled. */
  onDown?(error: unknown): void;
  onUp?(): void;
}

export interface Subscription {
  readonly connected: boolean;
  close(): void;
  /** Skip the backoff timer and reconnect immediately. */
  retryNow(): void;
}

export interface SubscribeOptions {
  retryDelayMs?: number;
  fetchFn?: typeof fetch;
}

export function subscribeEvents(
  base: string,
  sessionId: string,
  handlers: EventHandlers,
  options: SubscribeOptions = {},
): Subscription {
  const fetchFn = options.fetchFn ?? fetch;
  const retryDelayMs = options.retryDelayMs ?? 2000;
  let closed = false;
  let connected = false;
  let retryTimer: ReturnType<typeof setTimeout> | null = null;
  let controller: AbortController | null = null;

  async function run(): Promise<void> {
    controller = new AbortController();
    try {
      const res = await fetchFn(`${base}/conversations/${sessionId}/events`, {
        headers: { Accept: 'text/event-stream' },
        signal: controller.signal,
      });
      if (!res.ok || !res.body) {
        throw new ApiError(`event stream refused with status ${res.status}`, res.status);
      }
      connected = true;
      handlers.onUp?.();
      const reader = res.body.getReader();
      const decoder = new TextDecoder();
      const parser = new SseParser();
      for (;;) {
        const { done, value } = await reader.read();
        if (done) {
          break;
        }
        for (const data of parser.push(decoder.decode(value, { stream: true }))) {
          handlers.onTurn(JSON.parse(data) as TurnPayload);
        }
      }
      // a server should hold the stream open forever; EOF means it went away
      throw new Error('event stream ended');
    } catch (error) {
      if (closed) {
        return;
      }
      connected = false;
      handlers.onDown?.(error);
      retryTimer = setTimeout(() => void run(), retryDelayMs);
    }
  }

  void run();

  return {
    get connected() {
      return connected;
    },
    close() {
      closed = true;
      if (retryTimer) {
        clearTimeout(retryTimer);
      }
      controller?.abort();
    },
    retryNow() {
      if (closed || connected) {
        return;
      }
      if (retryTimer) {
        clearTimeout(retryTimer);
      }
      void run();
    },
  };
}
