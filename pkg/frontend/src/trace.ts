/**
 * Per-turn trace drawer.  Every turn folds out into the raw decision steps
 * the server recorded: which predicates were checked and what they
 * returned, slot extraction results, helper writes, fallback choices.
 */

import type { TraceEntry } from './api.js';
import type { TurnRecord } from './store.js';

export interface TracePanel {
  update(turns: TurnRecord[]): void;
}

/** Human line for one trace entry; predicates get their own class. */
export function describeEntry(entry: TraceEntry): { text: string; predicate: boolean } {
  switch (entry.type) {
    case 'guard':
      return { text: `${entry.node}: ${entry.predicate} ⇒ ${entry.value}`, predicate: true };
    case 'nld':
      return { text: `"${entry.condition}" ⇒ ${entry.value}`, predicate: true };
    case 'intent':
      return { text: `intent: ${entry.name ?? 'none'}`, predicate: false };
    case 'answered':
      return { text: `${entry.var} = ${JSON.stringify(entry.value)}`, predicate: false };
    case 'dst': {
      const invalidated = entry.invalidated as string[] | undefined;
      const reset =
        invalidated && invalidated.length > 0 ? `, reset ${invalidated.join(', ')}` : '';
      const changed = entry.changed ? 'changed' : 'unchanged';
      return {
        text: `slot ${entry.slot} = ${JSON.stringify(entry.value)} (${changed}${reset})`,
        predicate: false,
      };
    }
    case 'branch':
      return { text: `branch ${entry.source} → ${entry.target}`, predicate: false };
    case 'predicted':
      return { text: `next node: ${entry.node ?? 'none'}`, predicate: false };
    case 'helper':
      return { text: `${entry.var} := ${JSON.stringify(entry.value)}`, predicate: false };
    case 'fallback':
      return { text: `fallback → ${entry.choice}`, predicate: false };
    default:
      return { text: JSON.stringify(entry), predicate: false };
  }
}

export function initTrace(container: HTMLElement): TracePanel {
  const list = document.createElement('div');
  list.className = 'trace-list';
  container.replaceChildren(list);

  return {
    update(turns) {
      list.replaceChildren();
      for (const record of turns) {
        const details = document.createElement('details');
        details.className = 'turn';
        details.dataset.turn = String(record.turn);
        if (record.turn === turns[turns.length - 1]?.turn) {
          details.open = true;
        }
        const summary = document.createElement('summary');
        summary.textContent = `turn ${record.turn} · ${record.action ?? '—'} (${record.source})`;
        details.appendChild(summary);

        const entries = document.createElement('ul');
        for (const entry of record.trace) {
          const item = document.createElement('li');
          const { text, predicate } = describeEntry(entry);
          item.textContent = text;
          item.className = predicate ? 'predicate' : 'step';
          entries.appendChild(item);
        }
        details.appendChild(entries);
        list.appendChild(details);
      }
    },
  };
}
