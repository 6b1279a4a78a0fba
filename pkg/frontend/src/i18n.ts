// UI strings for zh-CN (default) and en, mirroring the service prompt locales.

const STRINGS = {
  'zh-CN': {
    app_title: '绘画筛查审阅台',
    nav_queue: '审阅队列',
    nav_stats: '统计',
    queue_empty: '暂无报告。新的绘画分析完成后会出现在这里。',
    queue_error: '加载失败，请重试。',
    retry: '重试',
    filter_all: '全部',
    filter_warning: '预警',
    filter_observation: '观察',
    filter_unannotated: '未标注',
    filter_annotated: '已标注',
    badge_escalated: '升级',
    badge_warning: '预警',
    badge_observation: '观察',
    badge_annotated: '已标注',
    col_report: '报告',
    col_risk: '级别',
    col_created: '生成时间',
    col_cohort: '年级组',
    page_prev: '上一页',
    page_next: '下一页',
    report_summary: '筛查摘要',
    report_positive: '积极因素',
    report_negative: '消极因素',
    report_neutral: '中性因素',
    report_aspects: '分项分析',
    report_drawing: '绘画原图',
    image_missing: '图片不可用，报告内容不受影响。',
    severity_severe: '严重',
    severity_mild: '轻度',
    aspect_overall: '整体构图',
    aspect_house: '房屋',
    aspect_tree: '树木',
    aspect_person: '人物',
    annotate_title: '一致性标注',
    annotate_high: '高度一致',
    annotate_moderate: '中度一致',
    annotate_low: '低度一致',
    annotate_comment: '备注（可选）',
    annotate_submit: '提交标注',
    annotate_saved: '已保存。',
    annotate_processing: '报告仍在生成中，请稍后再试。',
    annotate_failed: '提交失败，已回退，请重试。',
    annotate_overwrite: '该报告已有标注，确定要覆盖吗？',
    auth_error: '访问令牌无效或已过期，请在配置中更新。',
    stats_classification: '分类分布',
    stats_matching: '与专业评估的一致率',
    stats_total_reports: '报告总数',
    stats_group_total: '总体',
    stats_group_warning: '预警组',
    stats_group_observation: '观察组',
    stats_level_high: '高度一致',
    stats_level_moderate: '中度一致',
    stats_level_low: '低度一致',
    stats_empty: '尚无统计数据。',
    back_to_queue: '返回队列',
  },
  en: {
    app_title: 'Drawing Screening Review',
    nav_queue: 'Review queue',
    nav_stats: 'Statistics',
    queue_empty: 'No reports yet. Finished analyses will appear here.',
    queue_error: 'Loading failed.',
    retry: 'Retry',
    filter_all: 'All',
    filter_warning: 'Warning',
    filter_observation: 'Observation',
    filter_unannotated: 'Unannotated',
    filter_annotated: 'Annotated',
    badge_escalated: 'Escalated',
    badge_warning: 'Warning',
    badge_observation: 'Observation',
    badge_annotated: 'Annotated',
    col_report: 'Report',
    col_risk: 'Level',
    col_created: 'Created',
    col_cohort: 'Cohort',
    page_prev: 'Previous',
    page_next: 'Next',
    report_summary: 'Screening summary',
    report_positive: 'Positive factors',
    report_negative: 'Negative factors',
    report_neutral: 'Neutral factors',
    report_aspects: 'Aspect analyses',
    report_drawing: 'Drawing',
    image_missing: 'Image unavailable; the report remains readable.',
    severity_severe: 'severe',
    severity_mild: 'mild',
    aspect_overall: 'Overall composition',
    aspect_house: 'House',
    aspect_tree: 'Tree',
    aspect_person: 'Person',
    annotate_title: 'Consistency annotation',
    annotate_high: 'High consistency',
    annotate_moderate: 'Moderate consistency',
    annotate_low: 'Low consistency',
    annotate_comment: 'Comment (optional)',
    annotate_submit: 'Submit annotation',
    annotate_saved: 'Saved.',
    annotate_processing: 'The report is still processing; try again shortly.',
    annotate_failed: 'Submission failed and was rolled back; please retry.',
    annotate_overwrite: 'This report is already annotated. Overwrite?',
    auth_error: 'The access token is invalid or expired; update the configuration.',
    stats_classification: 'Classification distribution',
    stats_matching: 'Matching rates with professional review',
    stats_total_reports: 'Total reports',
    stats_group_total: 'Total',
    stats_group_warning: 'Warning group',
    stats_group_observation: 'Observation group',
    stats_level_high: 'High consistency',
    stats_level_moderate: 'Moderate consistency',
    stats_level_low: 'Low consistency',
    stats_empty: 'No statistics yet.',
    back_to_queue: 'Back to queue',
  },
} as const;

export type Locale = keyof typeof STRINGS;
export type StringKey = keyof (typeof STRINGS)['en'];

let currentLocale: Locale = 'zh-CN';

export function setLocale(locale: Locale): void {
  currentLocale = locale;
}

export function t(key: StringKey): string {
  return STRINGS[currentLocale][key] ?? STRINGS.en[key];
}
