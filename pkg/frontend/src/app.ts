/**
 * Console wiring: submit a plan pair, read the generated explanation next to
 * its retrieved neighbors, approve or correct it into the knowledge base, and
 * ask follow-up questions.
 *
 * One explain request is in flight per tab at most; review submission is
 * guarded by the client state machine so an already-reviewed result cannot
 * be re-reviewed. Service errors land in an inline banner and never clear
 * the form.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  canReview,
  eventForStatus,
  transition,
  type ReviewState,
} from "./reviewState.js";
import { buildPlanPairView, renderPlanPair } from "./planView.js";
import type {
  ChatTurn,
  ExecutionResultWire,
  ExplainRequestBody,
  ExplainResponse,
  NeighborWire,
  PlanPairWire,
} from "./types.js";

interface UploadedRequest {
  plan_pair: PlanPairWire;
  execution_result?: ExecutionResultWire;
  query_text?: string;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Parse the pasted/uploaded request JSON; throws with a readable message. */
export function parseUploadedRequest(raw: string): UploadedRequest {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    throw new Error("the pair input is not valid JSON");
  }
  if (typeof doc !== "object" || doc === null || !("plan_pair" in doc)) {
    throw new Error("the pair input needs a plan_pair field");
  }
  const upload = doc as UploadedRequest;
  if (!upload.plan_pair.ap_plan || !upload.plan_pair.tp_plan) {
    throw new Error("plan_pair needs both ap_plan and tp_plan");
  }
  return upload;
}

export class Console {
  readonly kbCounter: HTMLElement;
  readonly pairInput: HTMLTextAreaElement;
  readonly contextInput: HTMLInputElement;
  readonly kInput: HTMLInputElement;
  readonly submitButton: HTMLButtonElement;
  readonly errorBanner: HTMLElement;
  readonly resultSection: HTMLElement;

  private reviewState: ReviewState | null = null;
  private resultId: string | null = null;
  private busy = false;
  private readonly doc: Document;

  constructor(
    root: HTMLElement,
    private readonly api: ApiClient,
    private readonly reviewer: string = "console",
  ) {
    this.doc = root.ownerDocument;
    const doc = this.doc;

    const header = el(doc, "header");
    header.appendChild(el(doc, "h1", "", "Plan-pair explanation console"));
    this.kbCounter = el(doc, "span", "kb-counter", "KB entries: –");
    header.appendChild(this.kbCounter);
    root.appendChild(header);

    const form = el(doc, "form", "submit-form");
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitQuery();
    });

    this.pairInput = el(doc, "textarea", "pair-input");
    this.pairInput.placeholder =
      'plan pair JSON: {"plan_pair": {...}, "execution_result": {...}}';
    this.pairInput.rows = 8;
    form.appendChild(this.pairInput);

    const controls = el(doc, "div", "controls");
    this.contextInput = el(doc, "input", "context-input");
    this.contextInput.placeholder = "optional user context (indexes, hints)";
    controls.appendChild(this.contextInput);

    this.kInput = el(doc, "input", "k-input");
    this.kInput.type = "number";
    this.kInput.min = "1";
    this.kInput.max = "5";
    this.kInput.value = "2";
    controls.appendChild(this.kInput);

    this.submitButton = el(doc, "button", "submit-button", "Explain");
    this.submitButton.type = "submit";
    controls.appendChild(this.submitButton);
    form.appendChild(controls);
    root.appendChild(form);

    this.errorBanner = el(doc, "div", "error-banner");
    this.errorBanner.hidden = true;
    root.appendChild(this.errorBanner);

    this.resultSection = el(doc, "main", "result-section");
    root.appendChild(this.resultSection);

    void this.refreshKbCounter();
  }

  private showError(message: string): void {
    this.errorBanner.textContent = message;
    this.errorBanner.hidden = false;
  }

  private clearError(): void {
    this.errorBanner.hidden = true;
    this.errorBanner.textContent = "";
  }

  async refreshKbCounter(): Promise<void> {
    try {
      const health = await this.api.health();
      this.kbCounter.textContent = `KB entries: ${health.kb_size}`;
    } catch {
      this.kbCounter.textContent = "KB entries: offline";
    }
  }

  async submitQuery(): Promise<void> {
    if (this.busy) return;
    this.clearError();

    let upload: UploadedRequest;
    try {
      upload = parseUploadedRequest(this.pairInput.value);
    } catch (error) {
      this.showError((error as Error).message);
      return;
    }

    const k = Math.max(1, Math.min(5, Number(this.kInput.value) || 2));
    const body: ExplainRequestBody = {
      plan_pair: upload.plan_pair,
      k,
    };
    if (upload.query_text) body.query_text = upload.query_text;
    if (upload.execution_result) body.execution_result = upload.execution_result;
    const context = this.contextInput.value.trim();
    if (context) body.user_context = context;

    this.busy = true;
    this.submitButton.disabled = true;
    this.reviewState = "PENDING_GENERATION";
    try {
      const result = await this.api.explain(body);
      const event = eventForStatus(result.status);
      this.reviewState = event === null ? null : transition("PENDING_GENERATION", event);
      this.resultId = result.result_id;
      await this.renderResult(upload, result, k);
    } catch (error) {
      this.reviewState = null;
      this.showError(
        error instanceof ApiError
          ? error.message
          : `service unreachable: ${(error as Error).message}`,
      );
    } finally {
      this.busy = false;
      this.submitButton.disabled = false;
    }
  }

  private async renderResult(
    upload: UploadedRequest,
    result: ExplainResponse,
    k: number,
  ): Promise<void> {
    const doc = this.doc;
    this.resultSection.textContent = "";

    const status = el(doc, "p", "result-status", `status: ${result.status}`);
    this.resultSection.appendChild(status);

    if (result.status === "ERROR") {
      this.showError(result.error ?? "generation failed");
      return;
    }

    if (upload.execution_result) {
      const view = buildPlanPairView(upload.plan_pair, upload.execution_result);
      this.resultSection.appendChild(renderPlanPair(doc, view));
    }

    if (result.status === "NONE_RESPONSE") {
      this.resultSection.appendChild(
        el(doc, "p", "none-notice",
           "The model declined: retrieved knowledge does not cover this pair. " +
           "Not reviewable; consider adding an expert entry to the KB."),
      );
      return;
    }

    const explanation = el(doc, "blockquote", "explanation", result.explanation ?? "");
    this.resultSection.appendChild(explanation);

    const t = result.timings;
    this.resultSection.appendChild(
      el(doc, "p", "timings",
         `encode ${t.encode_ms} ms · search ${t.search_ms} ms · ` +
         `think ${t.llm_think_ms} ms · generate ${t.llm_generate_ms} ms`),
    );

    await this.renderNeighbors(upload.plan_pair, k);
    this.renderReviewPanel();
    this.renderFollowupPanel();
  }

  private async renderNeighbors(pair: PlanPairWire, k: number): Promise<void> {
    const doc = this.doc;
    const panel = el(doc, "section", "neighbors");
    panel.appendChild(el(doc, "h3", "", "Retrieved knowledge"));
    try {
      const preview = await this.api.retrieve(pair, k);
      for (const hit of preview.hits) {
        panel.appendChild(this.neighborRow(hit));
      }
    } catch (error) {
      panel.appendChild(
        el(doc, "p", "neighbor-error",
           `neighbor preview unavailable: ${(error as Error).message}`),
      );
    }
    this.resultSection.appendChild(panel);
  }

  private neighborRow(hit: NeighborWire): HTMLElement {
    const doc = this.doc;
    const row = el(doc, "article", "neighbor");
    row.appendChild(
      el(doc, "h4", "",
         `#${hit.entry_id} · similarity ${hit.similarity.toFixed(3)} · ` +
         `${hit.winner} faster · ${hit.provenance}`),
    );
    row.appendChild(el(doc, "code", "neighbor-query", hit.query_text));
    // shown verbatim: this text is exactly what the prompt carried
    row.appendChild(el(doc, "p", "neighbor-explanation", hit.explanation));
    return row;
  }

  private renderReviewPanel(): void {
    const doc = this.doc;
    const panel = el(doc, "section", "review-panel");
    panel.appendChild(el(doc, "h3", "", "Expert review"));

    const stateLabel = el(doc, "p", "review-state",
                          `state: ${this.reviewState ?? "n/a"}`);
    panel.appendChild(stateLabel);

    const correction = el(doc, "textarea", "correction-input");
    correction.placeholder = "corrected explanation (for Incorrect)";
    correction.rows = 3;

    const approve = el(doc, "button", "approve-button", "Approve as correct");
    approve.type = "button";
    const fix = el(doc, "button", "fix-button", "Incorrect, bank my correction");
    fix.type = "button";

    const submitReview = async (verdict: "CORRECT" | "INCORRECT") => {
      if (this.reviewState === null || !canReview(this.reviewState)) return;
      if (this.resultId === null) return;
      const text = correction.value.trim();
      if (verdict === "INCORRECT" && !text) {
        this.showError("a correction needs replacement text");
        return;
      }
      approve.disabled = fix.disabled = true;
      try {
        const outcome = await this.api.review(
          this.resultId,
          verdict,
          this.reviewer,
          verdict === "INCORRECT" ? text : undefined,
        );
        this.reviewState = transition(
          this.reviewState,
          verdict === "INCORRECT" ? "CORRECT" : "APPROVE",
        );
        stateLabel.textContent = `state: ${outcome.review_state} · KB entry ${outcome.entry_id}`;
        this.kbCounter.textContent = `KB entries: ${outcome.kb_size}`;
      } catch (error) {
        approve.disabled = fix.disabled = false;
        if (error instanceof ApiError && error.status === 404) {
          this.showError("this result has expired; submit the query again");
        } else {
          this.showError((error as Error).message);
        }
      }
    };

    approve.addEventListener("click", () => void submitReview("CORRECT"));
    fix.addEventListener("click", () => void submitReview("INCORRECT"));

    panel.appendChild(correction);
    panel.appendChild(approve);
    panel.appendChild(fix);
    this.resultSection.appendChild(panel);
  }

  private renderFollowupPanel(): void {
    const doc = this.doc;
    const panel = el(doc, "section", "followup-panel");
    panel.appendChild(el(doc, "h3", "", "Follow-up"));

    const transcript = el(doc, "div", "transcript");
    panel.appendChild(transcript);

    const question = el(doc, "input", "followup-input");
    question.placeholder = "ask about this explanation";
    const ask = el(doc, "button", "ask-button", "Ask");
    ask.type = "button";

    const renderTranscript = (turns: ChatTurn[]) => {
      transcript.textContent = "";
      for (const turn of turns) {
        transcript.appendChild(
          el(doc, "p", `turn turn-${turn.role}`, `${turn.role}: ${turn.content}`),
        );
      }
    };

    ask.addEventListener("click", () => {
      void (async () => {
        const text = question.value.trim();
        if (!text || this.resultId === null) return;
        ask.disabled = true;
        try {
          const reply = await this.api.followup(this.resultId, text);
          renderTranscript(reply.transcript);
          question.value = "";
        } catch (error) {
          this.showError((error as Error).message);
        } finally {
          ask.disabled = false;
        }
      })();
    });

    panel.appendChild(question);
    panel.appendChild(ask);
    this.resultSection.appendChild(panel);
  }
}

export function createConsole(root: HTMLElement, api: ApiClient): Console {
  return new Console(root, api);
}
