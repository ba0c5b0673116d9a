/**
 * Read-only SVG rendering of the flow graph.  The structure is drawn once;
 * per-turn updates only toggle `active` / `fired` classes.
 */

import type { FlowGraph } from './api.js';
import { layoutGraph, NODE_HEIGHT, NODE_WIDTH } from './layout.js';

const SVG_NS = 'http://www.w3.org/2000/svg';

export interface FlowPanel {
  update(activeNode: string | null, firedEdges: string[]): void;
}

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [name, value] of Object.entries(attrs)) {
    el.setAttribute(name, value);
  }
  return el;
}

function edgePath(
  from: { x: number; y: number; rank: number },
  to: { x: number; y: number; rank: number },
): string {
  const x1 = from.x + NODE_WIDTH;
  const y1 = from.y + NODE_HEIGHT / 2;
  const x2 = to.x;
  const y2 = to.y + NODE_HEIGHT / 2;
  if (to.rank > from.rank) {
    const mid = (x1 + x2) / 2;
    return `M ${x1} ${y1} C ${mid} ${y1}, ${mid} ${y2}, ${x2} ${y2}`;
  }
  // back edge (cycle): loop underneath both nodes
  const bottom = Math.max(from.y, to.y) + NODE_HEIGHT + 30;
  return `M ${x1} ${y1} C ${x1 + 50} ${bottom}, ${x2 - 50} ${bottom}, ${x2} ${y2}`;
}

export function initFlow(container: HTMLElement, graph: FlowGraph): FlowPanel {
  const layout = layoutGraph(graph);
  const svg = svgEl('svg', {
    viewBox: `0 0 ${layout.width} ${layout.height}`,
    class: 'flow-svg',
    role: 'img',
  });

  const defs = svgEl('defs', {});
  const marker = svgEl('marker', {
    id: 'arrow',
    viewBox: '0 0 10 10',
    refX: '9',
    refY: '5',
    markerWidth: '7',
    markerHeight: '7',
    orient: 'auto-start-reverse',
  });
  marker.appendChild(svgEl('path', { d: 'M 0 0 L 10 5 L 0 10 z', class: 'arrow-head' }));
  defs.appendChild(marker);
  svg.appendChild(defs);

  for (const edge of graph.edges) {
    const from = layout.nodes.get(edge.source);
    const to = layout.nodes.get(edge.target);
    if (!from || !to) {
      continue;
    }
    const path = svgEl('path', {
      d: edgePath(from, to),
      class: 'edge',
      'data-edge': `${edge.source}->${edge.target}`,
      'marker-end': 'url(#arrow)',
    });
    if (edge.condition) {
      const title = svgEl('title', {});
      title.textContent = edge.condition;
      path.appendChild(title);
    }
    svg.appendChild(path);
  }

  for (const node of graph.nodes) {
    const placed = layout.nodes.get(node.id)!;
    const group = svgEl('g', {
      class: `node node-${node.type}`,
      'data-node-id': node.id,
      transform: `translate(${placed.x}, ${placed.y})`,
    });
    group.appendChild(
      svgEl('rect', { width: String(NODE_WIDTH), height: String(NODE_HEIGHT), rx: '8' }),
    );
    const name = svgEl('text', { x: String(NODE_WIDTH / 2), y: '22', class: 'node-name' });
    name.textContent = node.id;
    const kind = svgEl('text', { x: String(NODE_WIDTH / 2), y: '40', class: 'node-kind' });
    kind.textContent = node.type;
    group.appendChild(name);
    group.appendChild(kind);
    svg.appendChild(group);
  }

  container.replaceChildren(svg);

  return {
    update(activeNode, firedEdges) {
      svg.querySelectorAll('.node').forEach((el) => {
        el.classList.toggle('active', el.getAttribute('data-node-id') === activeNode);
      });
      const fired = new Set(firedEdges);
      svg.querySelectorAll('.edge').forEach((el) => {
        el.classList.toggle('fired', fired.has(el.getAttribute('data-edge') ?? ''));
      });
    },
  };
}
