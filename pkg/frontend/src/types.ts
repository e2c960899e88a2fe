/** Wire types mirroring the workbench JSON API. */

export type Branch = 'tgr' | 'vcr';

export interface Garment {
  id: string;
  category: string;
  attributes: Record<string, string>;
  split: string;
}

export interface GarmentsPage {
  items: Garment[];
  page: number;
  page_size: number;
  total: number;
}

export interface Health {
  status: string;
  split: string;
  gallery_size: number;
  garments: number;
  d_model: number;
  splits: string[];
}

export interface FeedbackTemplate {
  task: Branch;
  arity: number;
  text: string;
  slots: string[];
}

export interface TemplateInventory {
  templates: FeedbackTemplate[];
  categories: string[];
  attribute_types: Record<string, string[]>;
}

export interface RetrieveRequest {
  reference_id: string;
  feedback: string;
  k: number;
  branch_override?: Branch;
}

export interface RankedGarment {
  id: string;
  score: number;
  category: string;
  attributes: Record<string, string>;
}

/** branch_logits come back as [vcr, tgr], matching the service. */
export interface RetrieveResponse {
  branch: Branch;
  branch_logits: [number, number];
  results: RankedGarment[];
}

export interface SessionTurn {
  turn: number;
  reference_id: string;
  feedback: string;
  branch: Branch;
  branch_logits: [number, number];
  results: RankedGarment[];
  at: string;
}

export interface SessionExport {
  version: 1;
  turns: SessionTurn[];
}
