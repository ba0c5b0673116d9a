import type { ChatMessage } from './api.js';

export interface ChatPanel {
  update(history: ChatMessage[], pending: boolean): void;
}

/**
 * Message list plus the input form.  The input is disabled while a turn is
 * in flight — the user's bubble only appears once the server confirms the
 * turn, so what's on screen is always what the server recorded.
 */
export function initChat(container: HTMLElement, onSend: (text: string) => void): ChatPanel {
  const list = document.createElement('div');
  list.className = 'chat-list';

  const form = document.createElement('form');
  form.className = 'chat-form';
  const input = document.createElement('input');
  input.type = 'text';
  input.placeholder = 'Say something…';
  input.autocomplete = 'off';
  const button = document.createElement('button');
  button.type = 'submit';
  button.textContent = 'Send';
  form.appendChild(input);
  form.appendChild(button);

  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const text = input.value.trim();
    if (!text || input.disabled) {
      return;
    }
    input.value = '';
    onSend(text);
  });

  container.replaceChildren(list, form);

  return {
    update(history, pending) {
      list.replaceChildren();
      for (const message of history) {
        const bubble = document.createElement('div');
        bubble.className = `msg ${message.role === 'user' ? 'user' : 'agent'}`;
        bubble.textContent = message.content;
        list.appendChild(bubble);
      }
      input.disabled = pending;
      button.disabled = pending;
      form.classList.toggle('pending', pending);
      list.scrollTop = list.scrollHeight;
    },
  };
}
