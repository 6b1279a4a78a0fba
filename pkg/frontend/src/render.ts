// Shared rendering helpers. Views are pure functions from API payloads to
// HTML strings so they can be snapshot-tested without a browser; app.ts
// attaches behavior afterwards.

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#039;');
}

export function badge(label: string, kind: string): string {
  return `<span class="badge badge-${kind}">${escapeHtml(label)}</span>`;
}

export function errorState(message: string, retryLabel: string): string {
  return (
    `<div class="error-state" role="alert">` +
    `<p>${escapeHtml(message)}</p>` +
    `<button type="button" data-action="retry">${escapeHtml(retryLabel)}</button>` +
    `</div>`
  );
}

export function authErrorBanner(message: string): string {
  return `<div class="banner banner-auth" role="alert">${escapeHtml(message)}</div>`;
}
