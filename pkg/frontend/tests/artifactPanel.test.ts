// Acceptance (UI form generation): switching the focused model from "html"
// to "html_json" re-renders the form in place, one textarea becoming
// rows/caption fields, with no navigation.

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ArtifactPanel } from "../src/artifactPanel.js";
import { StubApi } from "./helpers.js";

function stubWithForms(): StubApi {
  const stub = new StubApi();
  stub.on("GET", "/api/forms", (_body, path) => {
    const model = new URL(path, "http://x").searchParams.get("model");
    if (model === "html") {
      return {
        body: {
          model_name: "html",
          artifact_kind: "table",
          output_format: "html",
          fields: [
            {
              name: "output",
              field_type: "textarea",
              required: true,
              prefill: "<table>m</table>",
            },
          ],
        },
      };
    }
    return {
      body: {
        model_name: "html_json",
        artifact_kind: "table",
        output_format: "json",
        fields: [
          { name: "rows", field_type: "number", required: true },
          { name: "caption", field_type: "text", required: false },
        ],
      },
    };
  });
  return stub;
}

describe("artifact panel", () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = "<div id='root'></div>";
    root = document.getElementById("root")!;
  });

  it("re-renders fields when the focused model switches", async () => {
    const stub = stubWithForms();
    const panel = new ArtifactPanel(
      root,
      new ApiClient("", "tok", stub.fetch),
      "p1",
      "block-1",
      "table",
    );
    await panel.show("html");
    let widgets = root.querySelectorAll("form [name]");
    expect(Array.from(widgets).map((w) => w.getAttribute("name"))).toEqual(["output"]);
    expect(widgets[0]!.tagName).toBe("TEXTAREA");
    expect((widgets[0] as HTMLTextAreaElement).value).toBe("<table>m</table>");

    await panel.show("html_json");
    widgets = root.querySelectorAll("form [name]");
    expect(Array.from(widgets).map((w) => w.getAttribute("name"))).toEqual([
      "rows",
      "caption",
    ]);
    expect((widgets[0] as HTMLInputElement).type).toBe("number");
    // Same DOM root, same panel: no reload happened.
    expect(document.getElementById("root")).toBe(root);
  });

  it("toggles between form and read-only JSON view", async () => {
    const stub = stubWithForms();
    const panel = new ArtifactPanel(
      root,
      new ApiClient("", "tok", stub.fetch),
      "p1",
      "block-1",
      "table",
    );
    await panel.show("html");
    expect(root.querySelector("form")).not.toBeNull();
    (root.querySelector(".mode-toggle") as HTMLButtonElement).click();
    expect(root.querySelector("form")).toBeNull();
    const json = root.querySelector(".json-view")!.textContent!;
    expect(JSON.parse(json)).toEqual({ output: "<table>m</table>" });
  });

  it("submits values and surfaces per-field validation errors inline", async () => {
    const stub = stubWithForms();
    stub.on("POST", "/api/artifacts/block-1/annotation", (body) => {
      const values = (body as { values: Record<string, unknown> }).values;
      if (!values.output) {
        return {
          status: 400,
          body: {
            error: "FieldValidationFailed",
            detail: "invalid fields: output",
            fields: ["output"],
          },
        };
      }
      return {
        body: {
          id: "ann-1",
          target_id: "block-1",
          values,
          mode: "annotation",
          satisfaction_rating: null,
          version: 1,
        },
      };
    });
    stub.on("POST", "/api/annotations/ann-1/rating", () => ({
      body: {
        id: "ann-1",
        target_id: "block-1",
        values: { output: "x" },
        mode: "annotation",
        satisfaction_rating: 4,
        version: 2,
      },
    }));
    const panel = new ArtifactPanel(
      root,
      new ApiClient("", "tok", stub.fetch),
      "p1",
      "block-1",
      "table",
    );
    await panel.show("html");
    const textarea = root.querySelector<HTMLTextAreaElement>("form [name=output]")!;
    textarea.value = "";
    expect(await panel.submit("annotation")).toBeNull();
    expect(
      root.querySelector(".field-error[data-field=output]")!.textContent,
    ).toContain("invalid");

    textarea.value = "<table>fixed</table>";
    const saved = await panel.submit("review");
    expect(saved).not.toBeNull();
    await panel.rate(4);
    expect(panel.annotation?.satisfaction_rating).toBe(4);
    expect(root.querySelectorAll(".star.lit")).toHaveLength(4);
  });
});
