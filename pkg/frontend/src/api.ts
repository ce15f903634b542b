/** Typed client for the annotation service. Every view reads and writes
 * through this class; nothing in the UI fabricates server state. */

import type {
  ArtifactAnnotationView,
  Bbox,
  BlockView,
  DashboardRowView,
  DocumentView,
  FormSpecView,
  OcrView,
  PageView,
  ProjectView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: { error?: string; detail?: string; fields?: string[] },
  ) {
    super(body.detail ?? `HTTP ${status}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private token: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
    };
    if (body !== undefined) init.body = JSON.stringify(body);
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    const text = await resp.text();
    const parsed = text ? JSON.parse(text) : null;
    if (!resp.ok) throw new ApiError(resp.status, parsed ?? {});
    return parsed as T;
  }

  getProject(id: string): Promise<ProjectView> {
    return this.call("GET", `/api/projects/${id}`);
  }

  putForms(
    projectId: string,
    body: { form_schemas?: unknown[]; focused_models?: Record<string, string> },
  ): Promise<ProjectView> {
    return this.call("PUT", `/api/projects/${projectId}/forms`, body);
  }

  putSchema(projectId: string, schema: unknown): Promise<ProjectView> {
    return this.call("PUT", `/api/projects/${projectId}/schema`, schema);
  }

  async listDocuments(projectId: string): Promise<DocumentView[]> {
    const body = await this.call<{ documents: DocumentView[] }>(
      "GET",
      `/api/documents?project=${encodeURIComponent(projectId)}`,
    );
    return body.documents;
  }

  getDocument(id: string): Promise<DocumentView> {
    return this.call("GET", `/api/documents/${id}`);
  }

  async getPages(docId: string): Promise<PageView[]> {
    const body = await this.call<{ pages: PageView[] }>(
      "GET",
      `/api/documents/${docId}/pages`,
    );
    return body.pages;
  }

  pageImageUrl(pageId: string): string {
    return `${this.baseUrl}/api/pages/${pageId}/image`;
  }

  async getBlocks(pageId: string): Promise<BlockView[]> {
    const body = await this.call<{ blocks: BlockView[] }>(
      "GET",
      `/api/pages/${pageId}/blocks`,
    );
    return body.blocks;
  }

  addBlock(pageId: string, bbox: Bbox, labelId: string): Promise<BlockView> {
    return this.call("POST", `/api/pages/${pageId}/blocks`, {
      bbox,
      label_id: labelId,
    });
  }

  updateBlock(
    blockId: string,
    expectedVersion: number,
    changes: { bbox?: Bbox; label_id?: string },
  ): Promise<BlockView> {
    return this.call("PATCH", `/api/blocks/${blockId}`, {
      expected_version: expectedVersion,
      ...changes,
    });
  }

  deleteBlock(blockId: string, version: number): Promise<{ deleted: string }> {
    return this.call("DELETE", `/api/blocks/${blockId}?version=${version}`);
  }

  async getOcr(blockId: string): Promise<OcrView | null> {
    const body = await this.call<{ ocr: OcrView | null }>(
      "GET",
      `/api/blocks/${blockId}/ocr`,
    );
    return body.ocr;
  }

  saveOcr(blockId: string, text: string, expectedVersion: number): Promise<OcrView> {
    return this.call("POST", `/api/blocks/${blockId}/ocr`, {
      text,
      expected_version: expectedVersion,
    });
  }

  getForm(
    projectId: string,
    artifactKind: string,
    model: string,
    targetId?: string,
  ): Promise<FormSpecView> {
    const target = targetId ? `&target=${encodeURIComponent(targetId)}` : "";
    return this.call(
      "GET",
      `/api/forms?project=${encodeURIComponent(projectId)}` +
        `&artifact_kind=${encodeURIComponent(artifactKind)}` +
        `&model=${encodeURIComponent(model)}${target}`,
    );
  }

  submitAnnotation(
    targetId: string,
    body: {
      focused_model: string;
      values: Record<string, unknown>;
      mode: string;
      expected_version?: number;
    },
  ): Promise<ArtifactAnnotationView> {
    return this.call("POST", `/api/artifacts/${targetId}/annotation`, body);
  }

  rate(annotationId: string, rating: number): Promise<ArtifactAnnotationView> {
    return this.call("POST", `/api/annotations/${annotationId}/rating`, { rating });
  }

  saveLayoutReview(docId: string): Promise<unknown> {
    return this.call("POST", `/api/documents/${docId}/layout/review`);
  }

  saveOutputsReview(docId: string): Promise<DocumentView> {
    return this.call("POST", `/api/documents/${docId}/outputs/review`);
  }

  async getDashboard(projectId: string): Promise<DashboardRowView[]> {
    const body = await this.call<{ rows: DashboardRowView[] }>(
      "GET",
      `/api/dashboard?project=${encodeURIComponent(projectId)}`,
    );
    return body.rows;
  }
}
