// Triage queue view: renders the report list exactly in API order (the
// service owns the escalated > warning > observation sort).

import { t } from './i18n.js';
import { badge, escapeHtml } from './render.js';
import type { QueueFilters, ReportListPage } from './types.js';

function riskBadge(item: { risk: string; escalated: boolean }): string {
  if (item.escalated) {
    return badge(t('badge_escalated'), 'escalated');
  }
  return item.risk === 'warning'
    ? badge(t('badge_warning'), 'warning')
    : badge(t('badge_observation'), 'observation');
}

function filterBar(filters: QueueFilters): string {
  const links = [
    { label: t('filter_all'), risk: undefined },
    { label: t('filter_warning'), risk: 'warning' },
    { label: t('filter_observation'), risk: 'observation' },
  ]
    .map((entry) => {
      const active = filters.risk === entry.risk ? ' class="active"' : '';
      const riskAttr = entry.risk ? ` data-risk="${entry.risk}"` : '';
      return `<a href="#/queue"${active} data-action="filter-risk"${riskAttr}>${escapeHtml(entry.label)}</a>`;
    })
    .join('');
  const annotatedToggle =
    `<label><input type="checkbox" data-action="filter-unannotated"` +
    `${filters.annotated === false ? ' checked' : ''}> ${escapeHtml(t('filter_unannotated'))}</label>`;
  return `<nav class="filters">${links}${annotatedToggle}</nav>`;
}

export function renderQueue(page: ReportListPage, filters: QueueFilters): string {
  if (page.total === 0) {
    return filterBar(filters) + `<p class="empty-state">${escapeHtml(t('queue_empty'))}</p>`;
  }
  const rows = page.items
    .map((item) => {
      const classes = ['queue-row'];
      if (item.escalated) classes.push('escalated');
      const annotated = item.annotated ? badge(t('badge_annotated'), 'annotated') : '';
      return (
        `<tr class="${classes.join(' ')}" data-report-id="${escapeHtml(item.report_id)}">` +
        `<td><a href="#/report/${encodeURIComponent(item.report_id)}">${escapeHtml(item.report_id)}</a></td>` +
        `<td>${riskBadge(item)}</td>` +
        `<td>${escapeHtml(item.created_at)}</td>` +
        `<td>${escapeHtml(item.grade_tag ?? '—')}</td>` +
        `<td>${annotated}</td>` +
        `</tr>`
      );
    })
    .join('');
  const lastPage = Math.max(1, Math.ceil(page.total / page.page_size));
  const pager =
    `<div class="pager">` +
    `<button type="button" data-action="page-prev"${page.page <= 1 ? ' disabled' : ''}>${escapeHtml(t('page_prev'))}</button>` +
    `<span>${page.page} / ${lastPage}</span>` +
    `<button type="button" data-action="page-next"${page.page >= lastPage ? ' disabled' : ''}>${escapeHtml(t('page_next'))}</button>` +
    `</div>`;
  return (
    filterBar(filters) +
    `<table class="queue">` +
    `<thead><tr><th>${escapeHtml(t('col_report'))}</th><th>${escapeHtml(t('col_risk'))}</th>` +
    `<th>${escapeHtml(t('col_created'))}</th><th>${escapeHtml(t('col_cohort'))}</th><th></th></tr></thead>` +
    `<tbody>${rows}</tbody></table>` +
    pager
  );
}
