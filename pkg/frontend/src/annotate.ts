// Annotation flow: optimistic update with rollback, re-annotation requires
// an explicit overwrite confirmation, and a 409 from the service surfaces as
// "still processing".

import { ApiClient, ApiError } from './api.js';
import type { Consistency } from './types.js';

export type AnnotateOutcome = 'saved' | 'cancelled' | 'processing' | 'failed';

export interface AnnotatableItem {
  report_id: string;
  annotated: boolean;
}

export class AnnotationFlow {
  constructor(
    private api: ApiClient,
    private annotatorId: string,
    private confirmOverwrite: () => boolean,
  ) {}

  async submit(
    item: AnnotatableItem,
    consistency: Consistency,
    comment: string,
  ): Promise<AnnotateOutcome> {
    if (item.annotated && !this.confirmOverwrite()) {
      return 'cancelled';
    }
    const previous = item.annotated;
    item.annotated = true; // optimistic: the queue flips immediately
    try {
      await this.api.annotate(item.report_id, consistency, this.annotatorId, comment);
      return 'saved';
    } catch (err) {
      item.annotated = previous; // rollback on any API failure
      if (err instanceof ApiError && err.status === 409) {
        return 'processing';
      }
      return 'failed';
    }
  }
}
