import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { setLocale } from '../src/i18n.js';
import { renderStats } from '../src/stats.js';
import {
  FakeBackend,
  TOKEN,
  classificationStats,
  emptyClassification,
  emptyRates,
  matchingRatesStats,
} from './fixtures.js';

beforeEach(() => setLocale('zh-CN'));

describe('stats view', () => {
  it('renders the published-statistics fixture (snapshot)', () => {
    expect(renderStats(classificationStats, matchingRatesStats)).toMatchSnapshot();
  });

  it('warning high-consistency cell shows 58.89 exactly', () => {
    const html = renderStats(classificationStats, matchingRatesStats);
    expect(html).toContain('58.89%');
    expect(html).toContain('71.03%');
    expect(html).toContain('76.50%');
  });

  it('percentages are API strings verbatim, no client arithmetic', () => {
    const tweaked = {
      ...matchingRatesStats,
      warning: {
        ...matchingRatesStats.warning,
        high: { count: 53, percentage: '58.8900' },
      },
    };
    const html = renderStats(classificationStats, tweaked);
    expect(html).toContain('58.8900%');
  });

  it('classification counts render with their percentages', () => {
    const html = renderStats(classificationStats, matchingRatesStats);
    expect(html).toContain('31.03%');
    expect(html).toContain('68.97%');
    expect(html).toContain('290');
  });

  it('zero state renders all-zero tables plus an empty note', () => {
    const html = renderStats(emptyClassification, emptyRates);
    expect(html).toContain('0.00%');
    expect(html).toContain('尚无统计数据');
  });

  it('refreshing after a backend change updates the table', async () => {
    const backend = new FakeBackend();
    const api = new ApiClient({ apiBase: 'http://fake', token: TOKEN, fetchFn: backend.fetch });
    const before = renderStats(await api.classification(), await api.matchingRates());
    expect(before).toContain('58.89%');
    backend.queue = []; // simulate a different store state
    const after = renderStats(await api.classification(), await api.matchingRates());
    expect(after).toContain('尚无统计数据');
    expect(after).not.toContain('58.89%');
  });
});
