// Bootstrap and hash router. All rendering goes through the pure view
// functions; this module only wires events and refresh timers.

import { AnnotationFlow } from './annotate.js';
import { ApiClient, ApiError } from './api.js';
import { loadConfig } from './config.js';
import { setLocale, t } from './i18n.js';
import { renderQueue } from './queue.js';
import { authErrorBanner, errorState } from './render.js';
import { renderAnnotationForm, renderReport } from './report.js';
import { renderStats } from './stats.js';
import type { Consistency, QueueFilters } from './types.js';

interface AppState {
  api: ApiClient;
  filters: QueueFilters;
  pollIntervalMs: number;
}

function root(): HTMLElement {
  const el = document.getElementById('app');
  if (!el) throw new Error('missing #app element');
  return el;
}

function renderFailure(err: unknown): string {
  if (err instanceof ApiError && err.isAuthError) {
    return authErrorBanner(t('auth_error'));
  }
  return errorState(t('queue_error'), t('retry'));
}

async function showQueue(state: AppState): Promise<void> {
  try {
    const page = await state.api.listReports(state.filters);
    root().innerHTML = renderQueue(page, state.filters);
  } catch (err) {
    root().innerHTML = renderFailure(err);
  }
}

async function showReport(state: AppState, reportId: string): Promise<void> {
  try {
    const doc = await state.api.getReport(reportId);
    root().innerHTML =
      renderReport(doc, state.api.imageUrl(doc.report.submission_id)) +
      renderAnnotationForm(doc);
    wireAnnotationForm(state, doc.report_id, doc.annotated);
  } catch (err) {
    root().innerHTML = renderFailure(err);
  }
}

async function showStats(state: AppState): Promise<void> {
  try {
    const [classification, rates] = await Promise.all([
      state.api.classification(),
      state.api.matchingRates(),
    ]);
    root().innerHTML = renderStats(classification, rates);
  } catch (err) {
    root().innerHTML = renderFailure(err);
  }
}

function wireAnnotationForm(state: AppState, reportId: string, annotated: boolean): void {
  const form = root().querySelector<HTMLFormElement>('form[data-action="annotate"]');
  if (!form) return;
  const status = form.querySelector<HTMLElement>('.annotate-status');
  const flow = new AnnotationFlow(state.api, 'counselor', () => window.confirm(t('annotate_overwrite')));
  const item = { report_id: reportId, annotated };
  form.addEventListener('submit', async (event) => {
    event.preventDefault();
    const level = form.querySelector<HTMLInputElement>('input[name="consistency"]:checked');
    if (!level || !status) return;
    const comment = form.querySelector<HTMLTextAreaElement>('textarea[name="comment"]')?.value ?? '';
    const outcome = await flow.submit(item, level.value as Consistency, comment);
    const messages = {
      saved: t('annotate_saved'),
      processing: t('annotate_processing'),
      failed: t('annotate_failed'),
      cancelled: '',
    } as const;
    status.textContent = messages[outcome];
  });
}

function route(state: AppState): void {
  const hash = window.location.hash || '#/queue';
  const reportMatch = hash.match(/^#\/report\/(.+)$/);
  if (reportMatch) {
    void showReport(state, decodeURIComponent(reportMatch[1]));
  } else if (hash === '#/stats') {
    void showStats(state);
  } else {
    void showQueue(state);
  }
}

function wireGlobalActions(state: AppState): void {
  root().addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    const action = target.dataset.action;
    if (action === 'retry') {
      route(state);
    } else if (action === 'filter-risk') {
      state.filters = { ...state.filters, risk: target.dataset.risk as QueueFilters['risk'], page: 1 };
      void showQueue(state);
    } else if (action === 'page-prev') {
      state.filters = { ...state.filters, page: Math.max(1, state.filters.page - 1) };
      void showQueue(state);
    } else if (action === 'page-next') {
      state.filters = { ...state.filters, page: state.filters.page + 1 };
      void showQueue(state);
    }
  });
  root().addEventListener('change', (event) => {
    const target = event.target as HTMLInputElement;
    if (target.dataset.action === 'filter-unannotated') {
      state.filters = {
        ...state.filters,
        annotated: target.checked ? false : undefined,
        page: 1,
      };
      void showQueue(state);
    }
  });
}

export async function main(): Promise<void> {
  const config = await loadConfig();
  setLocale(config.locale);
  document.title = t('app_title');
  const state: AppState = {
    api: new ApiClient({ apiBase: config.apiBase, token: config.token }),
    filters: { page: 1 },
    pollIntervalMs: config.pollIntervalMs,
  };
  wireGlobalActions(state);
  window.addEventListener('hashchange', () => route(state));
  route(state);
  // keep the queue fresh while the counselor works through it
  setInterval(() => {
    if ((window.location.hash || '#/queue') === '#/queue') {
      void showQueue(state);
    }
  }, state.pollIntervalMs);
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  void main();
}
