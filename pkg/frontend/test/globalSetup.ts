/**
 * Boots one real conversation server for the whole test run, backed by the
 * scripted mock in booking_script.json.  The script is a strict queue, so
 * exactly one test file (ui.test.ts) may drive conversations against it.
 */

import { spawn, type ChildProcess } from 'node:child_process';
import { createServer } from 'node:net';
import { writeFileSync, rmSync } from 'node:fs';
import { fileURLToPath } from 'node:url';
import path from 'node:path';

const here = path.dirname(fileURLToPath(import.meta.url));
export const SERVER_INFO = path.join(here, '.server.json');

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once('error', reject);
    probe.listen(0, '127.0.0.1', () => {
      const address = probe.address();
      if (address === null || typeof address === 'string') {
        reject(new Error('no port assigned'));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

async function waitHealthy(url: string, timeoutMs: number, child: ChildProcess): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) {
      throw new Error(`server exited early with code ${child.exitCode}`);
    }
    try {
      const res = await fetch(url);
      if (res.ok) {
        return;
      }
    } catch (error) {
      lastError = error;
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error(`server never became healthy: ${String(lastError)}`);
}

export default async function setup(): Promise<() => void> {
  const repoRoot = path.resolve(here, '..', '..');
  const port = await freePort();
  const child = spawn(
    'codial',
    [
      'serve',
      'tests/fixtures/taxi.chief.json',
      '--script',
      path.join(here, 'booking_script.json'),
      '--host',
      '127.0.0.1',
      '--port',
      String(port),
    ],
    { cwd: repoRoot, stdio: ['ignore', 'pipe', 'pipe'] },
  );
  let stderr = '';
  child.stderr?.on('data', (chunk: Buffer) => {
    stderr += chunk.toString();
  });
  try {
    await waitHealthy(`http://127.0.0.1:${port}/health`, 20000, child);
  } catch (error) {
    child.kill('SIGTERM');
    throw new Error(`${String(error)}\nserver stderr:\n${stderr}`);
  }
  writeFileSync(SERVER_INFO, JSON.stringify({ base: `http://127.0.0.1:${port}` }));

  return () => {
    child.kill('SIGTERM');
    rmSync(SERVER_INFO, { force: true });
  };
}
