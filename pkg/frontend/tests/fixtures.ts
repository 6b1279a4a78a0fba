// Fixture payloads mirroring real service responses, plus an in-memory
// backend that speaks just enough of the API for round-trip tests.

import type {
  ClassificationStats,
  MatchingRates,
  QueueItem,
  ReportDoc,
  ReportListPage,
} from '../src/types.js';

export const TOKEN = 'fixture-token';

export const queueItems: QueueItem[] = [
  {
    report_id: 'rep-esc-01',
    risk: 'warning',
    escalated: true,
    created_at: '2025-05-01T10:30:00Z',
    annotated: false,
    submission_id: 'sub-esc-01',
    grade_tag: 'grade-5',
  },
  {
    report_id: 'rep-warn-01',
    risk: 'warning',
    escalated: false,
    created_at: '2025-05-01T10:20:00Z',
    annotated: true,
    submission_id: 'sub-warn-01',
    grade_tag: 'grade-3',
  },
  {
    report_id: 'rep-obs-01',
    risk: 'observation',
    escalated: false,
    created_at: '2025-05-01T10:10:00Z',
    annotated: false,
    submission_id: 'sub-obs-01',
    grade_tag: null,
  },
];

export const warningReport: ReportDoc = {
  report_id: 'rep-warn-01',
  escalated: true,
  annotated: false,
  rule: {
    severe_short_circuit: true,
    negative_factor_threshold: 4,
    model_suggestion_mode: 'conservative_or',
  },
  report: {
    submission_id: 'sub-warn-01',
    risk: 'warning',
    summary: '特征提取阶段发现严重风险指标，分析流程已提前终止并直接生成预警。',
    positive_factors: [],
    negative_factors: [
      {
        observation: {
          feature_id: 'person.figure_content',
          aspect: 'person',
          value: 'hanging_figure',
          evidence: '画面中央的人物呈悬挂状',
        },
        tendency: 'negative',
        severity: 'severe',
        rationale: 'Figure depiction: hanging_figure',
      },
      {
        observation: {
          feature_id: 'house.isolation',
          aspect: 'house',
          value: 'isolated_sealed',
          evidence: '房屋无门窗且远离其他元素',
        },
        tendency: 'negative',
        severity: 'severe',
        rationale: 'Isolation of the house: isolated_sealed',
      },
    ],
    neutral_factors: [],
    aspect_reports: ['overall', 'house', 'tree', 'person'].map((aspect) => ({
      aspect,
      observations: [],
      interpretation: '该部分的解读因画面出现严重风险指标而中止，仅保留特征提取结果。',
      produced_at: '2025-05-01T10:30:00Z',
      model_trace_id: `ses-x.${aspect}`,
    })),
    created_at: '2025-05-01T10:30:00Z',
    escalation_notice:
      '画面中出现严重风险指标。建议立即安排专业人员介入：请尽快联系学校心理老师或专业心理工作者。',
  },
};

export const observationReport: ReportDoc = {
  report_id: 'rep-obs-01',
  escalated: false,
  annotated: false,
  rule: {
    severe_short_circuit: true,
    negative_factor_threshold: 4,
    model_suggestion_mode: 'conservative_or',
  },
  report: {
    submission_id: 'sub-obs-01',
    risk: 'observation',
    summary: '画面构图均衡，果实、开放的门窗与愉快的人物表情均为积极因素。',
    positive_factors: [
      {
        observation: {
          feature_id: 'tree.fruit',
          aspect: 'tree',
          value: 'fruit_bearing',
          evidence: '树上画有多个果实',
        },
        tendency: 'positive',
        severity: 'none',
        rationale: 'Fruit: fruit_bearing',
      },
      {
        observation: {
          feature_id: 'person.facial_expression',
          aspect: 'person',
          value: 'cheerful',
          evidence: '人物面带微笑',
        },
        tendency: 'positive',
        severity: 'none',
        rationale: 'Facial expression: cheerful',
      },
    ],
    negative_factors: [],
    neutral_factors: [],
    aspect_reports: [
      {
        aspect: 'overall',
        observations: [
          { feature_id: 'overall.placement', aspect: 'overall', value: 'centered', evidence: '' },
        ],
        interpretation: '构图完整，画面基调平稳。',
        produced_at: '2025-05-01T10:10:00Z',
        model_trace_id: 'ses-y.overall',
      },
      {
        aspect: 'house',
        observations: [],
        interpretation: '房屋结构完整，门窗可见。',
        produced_at: '2025-05-01T10:10:00Z',
        model_trace_id: 'ses-y.house',
      },
      {
        aspect: 'tree',
        observations: [],
        interpretation: '树木形态自然，生长状态良好。',
        produced_at: '2025-05-01T10:10:00Z',
        model_trace_id: 'ses-y.tree',
      },
      {
        aspect: 'person',
        observations: [],
        interpretation: '人物姿态放松，表情自然。',
        produced_at: '2025-05-01T10:10:00Z',
        model_trace_id: 'ses-y.person',
      },
    ],
    created_at: '2025-05-01T10:10:00Z',
  },
};

export const classificationStats: ClassificationStats = {
  total: 290,
  warning: { count: 90, percentage: '31.03' },
  observation: { count: 200, percentage: '68.97' },
};

export const matchingRatesStats: MatchingRates = {
  reduction_mode: 'latest_annotation_wins',
  generated_at: '2025-05-02T08:00:00Z',
  total: {
    size: 290,
    high: { count: 206, percentage: '71.03' },
    moderate: { count: 77, percentage: '26.55' },
    low: { count: 7, percentage: '2.41' },
  },
  warning: {
    size: 90,
    high: { count: 53, percentage: '58.89' },
    moderate: { count: 33, percentage: '36.67' },
    low: { count: 4, percentage: '4.44' },
  },
  observation: {
    size: 200,
    high: { count: 153, percentage: '76.50' },
    moderate: { count: 44, percentage: '22.00' },
    low: { count: 3, percentage: '1.50' },
  },
};

export const emptyClassification: ClassificationStats = {
  total: 0,
  warning: { count: 0, percentage: '0.00' },
  observation: { count: 0, percentage: '0.00' },
};

export const emptyRates: MatchingRates = {
  reduction_mode: 'latest_annotation_wins',
  total: { size: 0, high: { count: 0, percentage: '0.00' }, moderate: { count: 0, percentage: '0.00' }, low: { count: 0, percentage: '0.00' } },
  warning: { size: 0, high: { count: 0, percentage: '0.00' }, moderate: { count: 0, percentage: '0.00' }, low: { count: 0, percentage: '0.00' } },
  observation: { size: 0, high: { count: 0, percentage: '0.00' }, moderate: { count: 0, percentage: '0.00' }, low: { count: 0, percentage: '0.00' } },
};

interface StoredAnnotation {
  report_id: string;
  consistency: string;
  annotator_id: string;
  comment: string;
}

type FailurePlan = { status: number; code: string; message: string } | 'network';

/** In-memory stand-in for the service, driven through the same fetch surface. */
export class FakeBackend {
  reports = new Map<string, ReportDoc>();
  sessions = new Map<string, { phase: string }>();
  annotations = new Map<string, StoredAnnotation>();
  queue: QueueItem[] = [];
  pageSize = 50;
  failNext: FailurePlan | null = null;
  requests: string[] = [];

  constructor() {
    for (const doc of [warningReport, observationReport]) {
      this.reports.set(doc.report_id, doc);
    }
    this.queue = [...queueItems];
  }

  private json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { 'Content-Type': 'application/json' },
    });
  }

  private error(status: number, code: string, message = code): Response {
    return this.json({ code, message }, status);
  }

  fetch: typeof fetch = async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = new URL(String(input));
    const method = init?.method ?? 'GET';
    this.requests.push(`${method} ${url.pathname}${url.search}`);
    if (this.failNext === 'network') {
      this.failNext = null;
      throw new TypeError('fetch failed');
    }
    if (this.failNext) {
      const plan = this.failNext;
      this.failNext = null;
      return this.error(plan.status, plan.code, plan.message);
    }
    const auth = (init?.headers as Record<string, string>)?.Authorization;
    if (auth !== `Bearer ${TOKEN}`) {
      return this.error(401, 'unauthenticated', 'missing or invalid bearer token');
    }

    const annotate = url.pathname.match(/^\/v1\/reports\/([^/]+)\/annotations$/);
    if (annotate && method === 'POST') {
      const reportId = decodeURIComponent(annotate[1]);
      const session = this.sessions.get('ses-' + reportId.replace(/^rep-/, ''));
      if (!this.reports.has(reportId)) {
        if (session && !['completed', 'escalated_harm', 'failed'].includes(session.phase)) {
          return this.error(409, 'report_not_terminal');
        }
        return this.error(404, 'report_not_found');
      }
      const body = JSON.parse(String(init?.body)) as StoredAnnotation;
      this.annotations.set(`${reportId}:${body.annotator_id}`, { ...body, report_id: reportId });
      const doc = this.reports.get(reportId)!;
      this.reports.set(reportId, { ...doc, annotated: true });
      this.queue = this.queue.map((item) =>
        item.report_id === reportId ? { ...item, annotated: true } : item,
      );
      return this.json({ ...body, report_id: reportId }, 201);
    }

    const oneReport = url.pathname.match(/^\/v1\/reports\/([^/]+)$/);
    if (oneReport && method === 'GET') {
      const doc = this.reports.get(decodeURIComponent(oneReport[1]));
      return doc ? this.json(doc) : this.error(404, 'report_not_found');
    }

    if (url.pathname === '/v1/reports' && method === 'GET') {
      let items = [...this.queue];
      const risk = url.searchParams.get('risk');
      if (risk) items = items.filter((i) => i.risk === risk);
      const annotated = url.searchParams.get('annotated');
      if (annotated !== null) items = items.filter((i) => String(i.annotated) === annotated);
      const page = Number(url.searchParams.get('page') ?? '1');
      const start = (page - 1) * this.pageSize;
      const body: ReportListPage = {
        items: items.slice(start, start + this.pageSize),
        page,
        page_size: this.pageSize,
        total: items.length,
      };
      return this.json(body);
    }

    const session = url.pathname.match(/^\/v1\/sessions\/([^/]+)$/);
    if (session && method === 'GET') {
      const doc = this.sessions.get(decodeURIComponent(session[1]));
      if (!doc) return this.error(404, 'session_not_found');
      return this.json({
        session_id: decodeURIComponent(session[1]),
        submission_id: 'sub-x',
        phase: doc.phase,
        aspect_status: {},
        event_count: 0,
      });
    }

    if (url.pathname === '/v1/stats/classification') {
      return this.json(this.queue.length ? classificationStats : emptyClassification);
    }
    if (url.pathname === '/v1/stats/matching-rates') {
      return this.json(this.queue.length ? matchingRatesStats : emptyRates);
    }
    return this.error(404, 'not_found');
  };
}
