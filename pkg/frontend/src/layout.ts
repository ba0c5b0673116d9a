/**
 * Layered left-to-right layout for flow graphs.
 *
 * Ranks come from a BFS over the edges starting at the flow's start node;
 * nodes a cycle or a disconnected fragment keeps away from the start are
 * parked in one extra column so nothing silently disappears.  Row order
 * within a column starts from a seeded shuffle and is then refined by a few
 * barycenter sweeps — the classic cheap crossing-reduction trick.  The seed
 * is derived from the graph itself, so the same flow always renders the
 * same picture and screenshots stay stable across reloads.
 */

import type { FlowGraph } from './api.js';

export const NODE_WIDTH = 150;
export const NODE_HEIGHT = 54;
const COLUMN_GAP = 70;
const ROW_GAP = 36;
const PADDING = 24;

export interface PlacedNode {
  id: string;
  rank: number;
  row: number;
  x: number;
  y: number;
}

export interface Layout {
  nodes: Map<string, PlacedNode>;
  width: number;
  height: number;
}

/** 32-bit FNV-1a; good enough to turn a node list into a layout seed. */
export function hashString(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

/** mulberry32 — tiny deterministic PRNG, plenty for shuffling rows. */
export function seededRandom(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffle<T>(items: T[], random: () => number): T[] {
  const result = [...items];
  for (let i = result.length - 1; i > 0; i--) {
    const j = Math.floor(random() * (i + 1));
    [result[i], result[j]] = [result[j], result[i]];
  }
  return result;
}

function assignRanks(graph: FlowGraph): Map<string, number> {
  const ranks = new Map<string, number>();
  const outgoing = new Map<string, string[]>();
  for (const edge of graph.edges) {
    const targets = outgoing.get(edge.source) ?? [];
    targets.push(edge.target);
    outgoing.set(edge.source, targets);
  }
  const queue: string[] = [];
  if (graph.nodes.some((n) => n.id === graph.start_node)) {
    ranks.set(graph.start_node, 0);
    queue.push(graph.start_node);
  }
  while (queue.length > 0) {
    const current = queue.shift()!;
    const rank = ranks.get(current)!;
    for (const target of outgoing.get(current) ?? []) {
      if (!ranks.has(target)) {
        ranks.set(target, rank + 1);
        queue.push(target);
      }
    }
  }
  // anything unreached goes one column past the deepest reached node
  let deepest = 0;
  ranks.forEach((rank) => {
    deepest = Math.max(deepest, rank);
  });
  for (const node of graph.nodes) {
    if (!ranks.has(node.id)) {
      ranks.set(node.id, deepest + 1);
    }
  }
  return ranks;
}

function barycenterSweeps(
  columns: string[][],
  graph: FlowGraph,
  rowOf: Map<string, number>,
): void {
  const neighbors = new Map<string, string[]>();
  const link = (a: string, b: string) => {
    const list = neighbors.get(a) ?? [];
    list.push(b);
    neighbors.set(a, list);
  };
  for (const edge of graph.edges) {
    link(edge.source, edge.target);
    link(edge.target, edge.source);
  }

  for (let sweep = 0; sweep < 3; sweep++) {
    for (const column of columns) {
      const score = (id: string): number => {
        const linked = (neighbors.get(id) ?? [])
          .map((other) => rowOf.get(other))
          .filter((row): row is number => row !== undefined);
        if (linked.length === 0) {
          return rowOf.get(id)!;
        }
        return linked.reduce((sum, row) => sum + row, 0) / linked.length;
      };
      column.sort((a, b) => {
        const delta = score(a) - score(b);
        return delta !== 0 ? delta : a.localeCompare(b);
      });
      column.forEach((id, row) => rowOf.set(id, row));
    }
  }
}

export function layoutGraph(graph: FlowGraph, seed?: number): Layout {
  const actualSeed =
    seed ?? hashString(graph.start_node + '|' + graph.nodes.map((n) => n.id).join(','));
  const random = seededRandom(actualSeed);

  const ranks = assignRanks(graph);
  let maxRank = 0;
  ranks.forEach((rank) => {
    maxRank = Math.max(maxRank, rank);
  });

  const columns: string[][] = Array.from({ length: maxRank + 1 }, () => []);
  for (const node of graph.nodes) {
    columns[ranks.get(node.id)!].push(node.id);
  }

  const rowOf = new Map<string, number>();
  for (let rank = 0; rank <= maxRank; rank++) {
    columns[rank] = shuffle(columns[rank], random);
    columns[rank].forEach((id, row) => rowOf.set(id, row));
  }
  barycenterSweeps(columns, graph, rowOf);

  const tallest = Math.max(1, ...columns.map((column) => column.length));
  const height = PADDING * 2 + tallest * NODE_HEIGHT + (tallest - 1) * ROW_GAP;
  const width = PADDING * 2 + (maxRank + 1) * NODE_WIDTH + maxRank * COLUMN_GAP;

  const nodes = new Map<string, PlacedNode>();
  for (let rank = 0; rank <= maxRank; rank++) {
    const column = columns[rank];
    const columnHeight = column.length * NODE_HEIGHT + (column.length - 1) * ROW_GAP;
    const top = PADDING + (height - PADDING * 2 - columnHeight) / 2;
    column.forEach((id, row) => {
      nodes.set(id, {
        id,
        rank,
        row,
        x: PADDING + rank * (NODE_WIDTH + COLUMN_GAP),
        y: top + row * (NODE_HEIGHT + ROW_GAP),
      });
    });
  }
  return { nodes, width, height };
}
