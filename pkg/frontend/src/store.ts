/**
 * View model for one session.  The server is the only authority: a view is
 * always rebuilt from the latest turn payload or state snapshot, never
 * edited in place, so refreshing the page and replaying the last snapshot
 * give the same picture.
 */

import type { ChatMessage, FlowGraph, StateDelta, TraceEntry, TurnPayload } from './api.js';

export interface TurnRecord {
  turn: number;
  utterance: string;
  action: string | null;
  source: string;
  delta: StateDelta;
  trace: TraceEntry[];
}

export interface SessionView {
  sessionId: string;
  turn: number;
  variables: Record<string, unknown>;
  history: ChatMessage[];
  lastDelta: StateDelta;
  activeNode: string | null;
  firedEdges: string[];
  turns: TurnRecord[];
}

export function emptyView(sessionId: string, init: Record<string, unknown>): SessionView {
  return {
    sessionId,
    turn: 0,
    variables: { ...init },
    history: [],
    lastDelta: {},
    activeNode: null,
    firedEdges: [],
    turns: [],
  };
}

/** Rebuild a view from `GET /state` (page reload); traces are not replayed. */
export function viewFromSnapshot(snapshot: {
  session_id: string;
  variables: Record<string, unknown>;
  history: ChatMessage[];
  turns: number;
}): SessionView {
  return {
    sessionId: snapshot.session_id,
    turn: snapshot.turns,
    variables: { ...snapshot.variables },
    history: [...snapshot.history],
    lastDelta: {},
    activeNode: null,
    firedEdges: [],
    turns: [],
  };
}

/**
 * The node lit up in the flow view.  Only a decision-tree prediction names a
 * graph node; intent and fallback actions live outside the graph.
 */
export function activeNodeOf(payload: TurnPayload): string | null {
  return payload.source === 'nap' ? payload.action : null;
}

/**
 * Reconstruct which edges the walk crossed this turn.  Consecutive guard
 * checks imply the edge between those nodes; conditioned branches are also
 * recorded explicitly in the trace.
 */
export function firedEdges(trace: TraceEntry[], graph: FlowGraph): string[] {
  const known = new Set(graph.edges.map((e) => `${e.source}->${e.target}`));
  const fired: string[] = [];
  const add = (key: string) => {
    if (known.has(key) && !fired.includes(key)) {
      fired.push(key);
    }
  };
  let previousGuard: string | null = null;
  for (const entry of trace) {
    if (entry.type === 'guard') {
      const node = entry.node as string;
      if (previousGuard !== null) {
        add(`${previousGuard}->${node}`);
      }
      previousGuard = node;
    } else if (entry.type === 'branch') {
      add(`${entry.source as string}->${entry.target as string}`);
    }
  }
  return fired;
}

/**
 * Fold one completed turn into the view.  Returns null when the payload is
 * stale — the same turn can arrive twice (POST response and the event
 * stream) and must be applied once.
 */
export function applyTurn(
  view: SessionView,
  payload: TurnPayload,
  graph: FlowGraph,
): SessionView | null {
  if (payload.turn <= view.turn) {
    return null;
  }
  const record: TurnRecord = {
    turn: payload.turn,
    utterance: payload.utterance,
    action: payload.action,
    source: payload.source,
    delta: payload.state_delta,
    trace: payload.trace,
  };
  return {
    sessionId: view.sessionId,
    turn: payload.turn,
    variables: { ...payload.state.variables },
    history: [...payload.state.history],
    lastDelta: payload.state_delta,
    activeNode: activeNodeOf(payload),
    firedEdges: firedEdges(payload.trace, graph),
    turns: [...view.turns, record],
  };
}
