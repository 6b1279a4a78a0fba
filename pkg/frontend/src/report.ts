// Report view: summary, factor breakdown, the four aspect sections, the
// drawing, and the escalation banner for severe cases. Every value shown
// comes straight from an API field.

import { t, type StringKey } from './i18n.js';
import { badge, escapeHtml } from './render.js';
import type { Factor, ReportDoc } from './types.js';

type AspectKey = 'overall' | 'house' | 'tree' | 'person';

const ASPECT_LABEL_KEYS = {
  overall: 'aspect_overall',
  house: 'aspect_house',
  tree: 'aspect_tree',
  person: 'aspect_person',
} as const;

function factorItem(factor: Factor): string {
  const classes = ['factor', `tendency-${factor.tendency}`];
  if (factor.severity === 'severe') classes.push('severe');
  const severityBadge =
    factor.severity === 'severe'
      ? badge(t('severity_severe'), 'severe')
      : factor.severity === 'mild'
        ? badge(t('severity_mild'), 'mild')
        : '';
  const evidence = factor.observation.evidence
    ? ` <span class="evidence">(${escapeHtml(factor.observation.evidence)})</span>`
    : '';
  return (
    `<li class="${classes.join(' ')}">` +
    `<code>${escapeHtml(factor.observation.feature_id)}</code> = ` +
    `${escapeHtml(factor.observation.value)}${severityBadge}` +
    `<p class="rationale">${escapeHtml(factor.rationale)}${evidence}</p>` +
    `</li>`
  );
}

function factorSection(titleKey: 'report_positive' | 'report_negative' | 'report_neutral',
                       factors: Factor[], hideWhenEmpty = false): string {
  if (hideWhenEmpty && factors.length === 0) {
    return '';
  }
  const body = factors.length
    ? `<ul>${factors.map(factorItem).join('')}</ul>`
    : '<p class="empty">—</p>';
  return `<section class="factors"><h3>${escapeHtml(t(titleKey))}</h3>${body}</section>`;
}

export function renderReport(doc: ReportDoc, imageUrl: string): string {
  const report = doc.report;
  const head =
    `<header class="report-head">` +
    `<a href="#/queue" data-action="back">${escapeHtml(t('back_to_queue'))}</a>` +
    `<h2>${escapeHtml(doc.report_id)}</h2>` +
    (doc.escalated
      ? badge(t('badge_escalated'), 'escalated')
      : report.risk === 'warning'
        ? badge(t('badge_warning'), 'warning')
        : badge(t('badge_observation'), 'observation')) +
    `</header>`;

  const banner = report.escalation_notice
    ? `<div class="banner banner-escalation" role="alert">${escapeHtml(report.escalation_notice)}</div>`
    : '';

  const summary =
    `<section class="summary"><h3>${escapeHtml(t('report_summary'))}</h3>` +
    `<p>${escapeHtml(report.summary)}</p></section>`;

  const factors =
    factorSection('report_positive', report.positive_factors) +
    factorSection('report_negative', report.negative_factors) +
    factorSection('report_neutral', report.neutral_factors, true);

  const aspects = report.aspect_reports
    .map((section) => {
      const labelKey = ASPECT_LABEL_KEYS[section.aspect as AspectKey];
      const label = labelKey ? t(labelKey) : section.aspect;
      const observations = section.observations.length
        ? `<ul class="observations">${section.observations
            .map((obs) => `<li><code>${escapeHtml(obs.feature_id)}</code> = ${escapeHtml(obs.value)}</li>`)
            .join('')}</ul>`
        : '';
      return (
        `<section class="aspect aspect-${escapeHtml(section.aspect)}">` +
        `<h4>${escapeHtml(label)}</h4>` +
        `<p>${escapeHtml(section.interpretation)}</p>` +
        observations +
        `</section>`
      );
    })
    .join('');

  const drawing =
    `<section class="drawing"><h3>${escapeHtml(t('report_drawing'))}</h3>` +
    `<img src="${escapeHtml(imageUrl)}" alt="" data-missing-text="${escapeHtml(t('image_missing'))}"` +
    ` onerror="this.outerHTML='<p class=&quot;image-missing&quot;>'+this.dataset.missingText+'</p>'">` +
    `</section>`;

  return (
    head + banner + summary + factors +
    `<section class="aspects"><h3>${escapeHtml(t('report_aspects'))}</h3>${aspects}</section>` +
    drawing
  );
}

export function renderAnnotationForm(doc: ReportDoc): string {
  const options = (['high', 'moderate', 'low'] as const)
    .map(
      (level) =>
        `<label><input type="radio" name="consistency" value="${level}">` +
        ` ${escapeHtml(t(('annotate_' + level) as StringKey))}</label>`,
    )
    .join('');
  return (
    `<section class="annotate" data-report-id="${escapeHtml(doc.report_id)}"` +
    ` data-annotated="${doc.annotated}">` +
    `<h3>${escapeHtml(t('annotate_title'))}</h3>` +
    `<form data-action="annotate">${options}` +
    `<textarea name="comment" placeholder="${escapeHtml(t('annotate_comment'))}"></textarea>` +
    `<button type="submit">${escapeHtml(t('annotate_submit'))}</button>` +
    `<p class="annotate-status" aria-live="polite"></p>` +
    `</form></section>`
  );
}
