/**
 * Wires the four panels to one conversation.
 *
 * One session per tab.  Sends are strictly serialized: the input locks
 * until the server answers, and a 409 from a competing client elsewhere is
 * surfaced as "turn in progress" rather than retried.  Turn payloads arrive
 * twice (POST response and the event stream) and are deduplicated by turn
 * number.
 */

import {
  createSession,
  fetchProgram,
  fetchState,
  sendMessage,
  subscribeEvents,
  TurnInProgressError,
  type FlowGraph,
  type Subscription,
  type TurnPayload,
} from './api.js';
import { initChat } from './chat.js';
import { initFlow } from './flow.js';
import { initInspector } from './inspector.js';
import { applyTurn, emptyView, viewFromSnapshot, type SessionView } from './store.js';
import { initTrace } from './trace.js';

export interface AppOptions {
  base: string;
  /** Attach to an existing session instead of creating one. */
  sessionId?: string;
  subscribe?: boolean;
  retryDelayMs?: number;
}

export interface AppHandle {
  readonly sessionId: string;
  readonly graph: FlowGraph;
  view(): SessionView;
  send(text: string): Promise<void>;
  /** Count of turn payloads seen on the event stream (including duplicates). */
  eventsSeen(): number;
  dispose(): void;
}

function skeleton(root: HTMLElement): Record<string, HTMLElement> {
  root.classList.add('inspector-app');
  root.innerHTML = `
    <div class="banner hidden" data-role="banner">
      <span>connection lost — live updates are paused</span>
      <button type="button" data-role="retry">retry</button>
    </div>
    <header>
      <h1>codial inspector</h1>
      <span class="session" data-role="session"></span>
      <span class="notice" data-role="notice"></span>
    </header>
    <main>
      <section class="pane chat-pane" data-role="chat"><h2>conversation</h2><div class="pane-body"></div></section>
      <section class="pane flow-pane" data-role="flow"><h2>flow</h2><div class="pane-body"></div></section>
      <section class="pane state-pane" data-role="state"><h2>state</h2><div class="pane-body"></div></section>
      <section class="pane trace-pane" data-role="trace"><h2>turn traces</h2><div class="pane-body"></div></section>
    </main>`;
  const part = (role: string): HTMLElement => root.querySelector(`[data-role="${role}"]`)!;
  const body = (role: string): HTMLElement => part(role).querySelector('.pane-body')!;
  return {
    banner: part('banner'),
    retry: part('retry'),
    session: part('session'),
    notice: part('notice'),
    chat: body('chat'),
    flow: body('flow'),
    state: body('state'),
    trace: body('trace'),
  };
}

export async function initApp(root: HTMLElement, options: AppOptions): Promise<AppHandle> {
  const { base } = options;
  const { program, graph } = await fetchProgram(base);

  let view: SessionView;
  if (options.sessionId) {
    view = viewFromSnapshot(await fetchState(base, options.sessionId));
  } else {
    view = emptyView(await createSession(base), program.init);
  }

  const parts = skeleton(root);
  parts.session.textContent = `session ${view.sessionId.slice(0, 8)}`;

  let pending = false;
  const chat = initChat(parts.chat, (text) => void send(text));
  const flow = initFlow(parts.flow, graph);
  const inspector = initInspector(parts.state, program);
  const trace = initTrace(parts.trace);

  function render(): void {
    chat.update(view.history, pending);
    flow.update(view.activeNode, view.firedEdges);
    inspector.update(view);
    trace.update(view.turns);
  }

  function notice(text: string): void {
    parts.notice.textContent = text;
  }

  function applyPayload(payload: TurnPayload): void {
    const next = applyTurn(view, payload, graph);
    if (next === null) {
      return; // already applied via the other channel
    }
    view = next;
    notice('');
    render();
  }

  async function send(text: string): Promise<void> {
    if (pending) {
      return;
    }
    pending = true;
    render();
    try {
      applyPayload(await sendMessage(base, view.sessionId, text));
    } catch (error) {
      if (error instanceof TurnInProgressError) {
        notice('turn in progress');
      } else {
        notice(`send failed: ${error instanceof Error ? error.message : String(error)}`);
      }
    } finally {
      pending = false;
      render();
    }
  }

  let eventsSeen = 0;
  let subscription: Subscription | null = null;
  if (options.subscribe !== false) {
    subscription = subscribeEvents(
      base,
      view.sessionId,
      {
        onTurn(payload) {
          eventsSeen += 1;
          applyPayload(payload);
        },
        onDown() {
          parts.banner.classList.remove('hidden');
        },
        onUp() {
          parts.banner.classList.add('hidden');
        },
      },
      { retryDelayMs: options.retryDelayMs },
    );
    parts.retry.addEventListener('click', () => subscription?.retryNow());
  }

  render();

  return {
    sessionId: view.sessionId,
    graph,
    view: () => view,
    send,
    eventsSeen: () => eventsSeen,
    dispose() {
      subscription?.close();
    },
  };
}

// Browser entry point: boot against ?api= (defaults to the page's origin)
// and ?session= to re-attach after a reload.
const autoRoot = typeof document !== 'undefined' ? document.querySelector('[data-autoboot]') : null;
if (autoRoot instanceof HTMLElement) {
  const params = new URLSearchParams(window.location.search);
  void initApp(autoRoot, {
    base: params.get('api') ?? window.location.origin,
    sessionId: params.get('session') ?? undefined,
  });
}
