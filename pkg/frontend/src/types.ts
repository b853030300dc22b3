/**
 * Wire types for the explanation service API.
 *
 * Field names mirror the service JSON exactly; plan nodes keep the
 * EXPLAIN-style capitalized keys they arrive with.
 */

export type Engine = "TP" | "AP";

export interface PlanNodeWire {
  "Node Type": string;
  "Relation Name"?: string;
  "Total Cost": number;
  "Plan Rows": number;
  Plans?: PlanNodeWire[];
}

export interface PlanPairWire {
  ap_plan: PlanNodeWire;
  tp_plan: PlanNodeWire;
  query_text?: string;
}

export interface ExecutionResultWire {
  winner: Engine;
  tp_latency_ms: number;
  ap_latency_ms: number;
}

export interface TimingsWire {
  encode_ms: number;
  search_ms: number;
  llm_think_ms: number;
  llm_generate_ms: number;
}

export type ResultStatus = "EXPLAINED" | "NONE_RESPONSE" | "ERROR";

export interface RetrievedRef {
  entry_id: number;
  similarity: number;
}

export interface ExplainRequestBody {
  plan_pair: PlanPairWire;
  query_text?: string;
  execution_result?: ExecutionResultWire;
  user_context?: string;
  k?: number;
  baseline?: boolean;
}

export interface ExplainResponse {
  status: ResultStatus;
  explanation: string | null;
  retrieved: RetrievedRef[];
  timings: TimingsWire;
  prompt_fingerprint: string;
  error: string | null;
  result_id: string;
}

export interface HealthResponse {
  status: string;
  kb_size: number;
  model_version: number;
}

export interface NeighborWire {
  entry_id: number;
  similarity: number;
  query_text: string;
  explanation: string;
  winner: Engine;
  provenance: string;
}

export interface RetrieveResponse {
  k: number;
  hits: NeighborWire[];
}

export interface ChatTurn {
  role: string;
  content: string;
}

export interface FollowupResponse {
  result_id: string;
  answer: string;
  transcript: ChatTurn[];
}

export type ReviewVerdict = "CORRECT" | "INCORRECT";

export interface ReviewResponse {
  entry_id: number;
  review_state: "APPROVED" | "CORRECTED";
  kb_size: number;
}

export interface KbEntryWire {
  id: number;
  key: number[];
  query_text: string;
  plan_details: PlanPairWire;
  execution_result: ExecutionResultWire;
  explanation: string;
  provenance: string;
}

export interface KbPageResponse {
  total: number;
  offset: number;
  entries: KbEntryWire[];
}

export interface ErrorBody {
  error: string;
  detail: string;
}
