// Polling helper for long-running sessions; the service has no push channel.

import { ApiClient } from './api.js';
import { TERMINAL_PHASES, type SessionDoc } from './types.js';

export interface PollOptions {
  intervalMs?: number;
  maxAttempts?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export async function pollUntilTerminal(
  api: ApiClient,
  sessionId: string,
  options: PollOptions = {},
): Promise<SessionDoc> {
  const intervalMs = options.intervalMs ?? 5000;
  const maxAttempts = options.maxAttempts ?? 360;
  const sleep = options.sleep ?? defaultSleep;
  let session = await api.getSession(sessionId);
  let attempts = 1;
  while (!TERMINAL_PHASES.includes(session.phase)) {
    if (attempts >= maxAttempts) {
      throw new Error(`session ${sessionId} still ${session.phase} after ${attempts} polls`);
    }
    await sleep(intervalMs);
    session = await api.getSession(sessionId);
    attempts += 1;
  }
  return session;
}
