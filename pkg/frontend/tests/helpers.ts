/** Stubbed fetch for component tests: route handlers keyed on
 * "METHOD /path", recording every call. */

export interface Recorded {
  method: string;
  path: string;
  body: unknown;
}

export class StubApi {
  calls: Recorded[] = [];
  private routes = new Map<
    string,
    (body: unknown, path: string) => { status?: number; body: unknown }
  >();

  on(
    method: string,
    path: string,
    handler: (body: unknown, path: string) => { status?: number; body: unknown },
  ): void {
    this.routes.set(`${method} ${path}`, handler);
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const parsed = new URL(url, "http://stub");
    const path = parsed.pathname + parsed.search;
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.calls.push({ method, path, body });
    const handler =
      this.routes.get(`${method} ${path}`) ?? this.routes.get(`${method} ${parsed.pathname}`);
    if (!handler) {
      return new Response(JSON.stringify({ error: "NotFound", detail: path }), {
        status: 404,
        headers: { "Content-Type": "application/json" },
      });
    }
    const result = handler(body, path);
    return new Response(JSON.stringify(result.body), {
      status: result.status ?? 200,
      headers: { "Content-Type": "application/json" },
    });
  };
}

export function doc(id: string, status: number) {
  return {
    id,
    project_id: "p1",
    original_filename: `${id}.pdf`,
    source_format: "pdf",
    status,
    page_count: 1,
    can_view_layout: status >= 2,
    can_view_ocr: status >= 4,
  };
}

export function page(id = "pg1", width = 1275, height = 1650) {
  return { id, document_id: "d1", index: 0, width_px: width, height_px: height };
}
