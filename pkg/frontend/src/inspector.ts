/**
 * Live table of the program's variables: slots first, then the helper
 * flags, in the program's own declaration order.  Rows touched by the last
 * turn get a highlight and show the old value next to the new one.
 */

import type { ProgramInfo } from './api.js';
import type { SessionView } from './store.js';

export interface InspectorPanel {
  update(view: SessionView): void;
}

export function formatValue(value: unknown): string {
  if (value === null || value === undefined) {
    return '∅';
  }
  if (typeof value === 'string') {
    return value;
  }
  return JSON.stringify(value);
}

export function initInspector(container: HTMLElement, program: ProgramInfo): InspectorPanel {
  const order = Object.keys(program.init);
  const slots = new Set(program.dst.map((entry) => entry.slot));

  const table = document.createElement('table');
  table.className = 'state-table';
  table.innerHTML =
    '<thead><tr><th>variable</th><th>kind</th><th>value</th><th>change</th></tr></thead>';
  const body = document.createElement('tbody');
  table.appendChild(body);

  const rows = new Map<string, HTMLTableRowElement>();
  for (const name of order) {
    const row = document.createElement('tr');
    row.dataset.var = name;
    row.dataset.kind = slots.has(name) ? 'slot' : 'helper';
    const describe = slots.has(name) ? 'slot' : 'helper';
    row.innerHTML =
      `<td class="name">${name}</td>` +
      `<td class="kind">${describe}</td>` +
      '<td class="value"></td>' +
      '<td class="delta"></td>';
    body.appendChild(row);
    rows.set(name, row);
  }
  container.replaceChildren(table);

  return {
    update(view) {
      for (const [name, row] of rows) {
        const value = view.variables[name];
        const valueCell = row.querySelector('.value') as HTMLTableCellElement;
        const deltaCell = row.querySelector('.delta') as HTMLTableCellElement;
        valueCell.textContent = formatValue(value);
        valueCell.dataset.json = JSON.stringify(value ?? null);
        const change = view.lastDelta[name];
        row.classList.toggle('changed', change !== undefined);
        deltaCell.textContent = change
          ? `${formatValue(change.old)} → ${formatValue(change.new)}`
          : '';
      }
    },
  };
}
