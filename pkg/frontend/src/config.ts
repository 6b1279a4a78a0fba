// Runtime configuration: a static config.json next to index.html so the same
// built bundle can be pointed at any deployment without rebuilding.

export interface RuntimeConfig {
  apiBase: string;
  token: string;
  locale: 'zh-CN' | 'en';
  pollIntervalMs: number;
}

export const DEFAULT_CONFIG: RuntimeConfig = {
  apiBase: '',
  token: '',
  locale: 'zh-CN',
  pollIntervalMs: 5000,
};

export async function loadConfig(fetchFn: typeof fetch = fetch): Promise<RuntimeConfig> {
  try {
    const response = await fetchFn('config.json');
    if (!response.ok) {
      return { ...DEFAULT_CONFIG };
    }
    const raw = (await response.json()) as Partial<RuntimeConfig>;
    return {
      apiBase: raw.apiBase ?? DEFAULT_CONFIG.apiBase,
      token: raw.token ?? DEFAULT_CONFIG.token,
      locale: raw.locale === 'en' ? 'en' : 'zh-CN',
      pollIntervalMs: raw.pollIntervalMs ?? DEFAULT_CONFIG.pollIntervalMs,
    };
  } catch {
    return { ...DEFAULT_CONFIG };
  }
}
