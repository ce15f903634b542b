/** Wire types mirroring the annotation service's JSON encoding. */

export type Bbox = [number, number, number, number]; // x_min, y_min, width, height, fractions

export interface DocumentView {
  id: string;
  project_id: string;
  original_filename: string;
  source_format: string;
  status: number;
  page_count: number;
  can_view_layout: boolean;
  can_view_ocr: boolean;
}

export interface PageView {
  id: string;
  document_id: string;
  index: number;
  width_px: number;
  height_px: number;
}

export interface BlockView {
  id: string;
  page_id: string;
  bbox: Bbox;
  label_id: string;
  source: "model" | "human";
  confidence: number | null;
  version: number;
}

export interface OcrView {
  id: string;
  block_id: string;
  model_text: string;
  human_text: string | null;
  version: number;
}

export interface LabelNode {
  id: string;
  name: string;
  parent_id: string | null;
  downstream_task: string;
}

export interface ProjectView {
  id: string;
  name: string;
  layout_schema: { nodes: LabelNode[] };
  form_schemas: FormSchemaView[];
  focused_models: Record<string, string>;
}

export interface FormSchemaView {
  model_name: string;
  artifact_kind: string;
  output_format: string;
  fields: { name: string; field_type: string; required: boolean; default?: unknown }[];
}

export interface FormFieldView {
  name: string;
  field_type: string;
  required: boolean;
  prefill?: unknown;
}

export interface FormSpecView {
  model_name: string;
  artifact_kind: string;
  output_format: string;
  fields: FormFieldView[];
}

export interface ArtifactAnnotationView {
  id: string;
  target_id: string;
  values: Record<string, unknown>;
  mode: string;
  satisfaction_rating: number | null;
  version: number;
}

export interface DashboardRowView {
  model_name: string;
  model_version: string;
  output_type: string;
  mean_latency_ms: number | null;
  mean_satisfaction: number | null;
  n_annotated: number;
  n_reviewed: number;
  quality: number | null;
}
