// Statistics view. Percentages are rendered exactly as the API formatted
// them; no arithmetic happens on the client.

import { t } from './i18n.js';
import { escapeHtml } from './render.js';
import type { ClassificationStats, GroupRates, MatchingRates } from './types.js';

function classificationTable(stats: ClassificationStats): string {
  const row = (label: string, cell: { count: number; percentage: string }) =>
    `<tr><td>${escapeHtml(label)}</td><td>${cell.count}</td><td>${escapeHtml(cell.percentage)}%</td></tr>`;
  return (
    `<section class="stats-classification">` +
    `<h3>${escapeHtml(t('stats_classification'))}</h3>` +
    `<p>${escapeHtml(t('stats_total_reports'))}: ${stats.total}</p>` +
    `<table><tbody>` +
    row(t('badge_warning'), stats.warning) +
    row(t('badge_observation'), stats.observation) +
    `</tbody></table></section>`
  );
}

function ratesRow(label: string, level: 'high' | 'moderate' | 'low', groups: GroupRates[]): string {
  const cells = groups
    .map((group) => `<td>${group[level].count}</td><td>${escapeHtml(group[level].percentage)}%</td>`)
    .join('');
  return `<tr class="level-${level}"><td>${escapeHtml(label)}</td>${cells}</tr>`;
}

function matchingTable(rates: MatchingRates): string {
  const groups = [rates.total, rates.warning, rates.observation];
  return (
    `<section class="stats-matching">` +
    `<h3>${escapeHtml(t('stats_matching'))}</h3>` +
    `<table><thead><tr><th></th>` +
    `<th colspan="2">${escapeHtml(t('stats_group_total'))}</th>` +
    `<th colspan="2">${escapeHtml(t('stats_group_warning'))}</th>` +
    `<th colspan="2">${escapeHtml(t('stats_group_observation'))}</th>` +
    `</tr></thead><tbody>` +
    ratesRow(t('stats_level_high'), 'high', groups) +
    ratesRow(t('stats_level_moderate'), 'moderate', groups) +
    ratesRow(t('stats_level_low'), 'low', groups) +
    `</tbody></table></section>`
  );
}

export function renderStats(classification: ClassificationStats, rates: MatchingRates): string {
  if (classification.total === 0 && rates.total.size === 0) {
    return (
      classificationTable(classification) +
      matchingTable(rates) +
      `<p class="empty-state">${escapeHtml(t('stats_empty'))}</p>`
    );
  }
  return classificationTable(classification) + matchingTable(rates);
}
