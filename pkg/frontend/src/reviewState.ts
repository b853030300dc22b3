/**
 * Client-side review workflow state machine.
 *
 * An explanation request starts PENDING_GENERATION. A successful generation
 * awaits expert review and ends APPROVED or CORRECTED; a "None" answer ends
 * REJECTED_NONE and is never reviewable. No other transitions exist.
 */

import type { ResultStatus } from "./types.js";

export type ReviewState =
  | "PENDING_GENERATION"
  | "AWAITING_REVIEW"
  | "APPROVED"
  | "CORRECTED"
  | "REJECTED_NONE";

export type ReviewEvent =
  | "GENERATION_SUCCEEDED"
  | "GENERATION_RETURNED_NONE"
  | "APPROVE"
  | "CORRECT";

const TRANSITIONS: Record<ReviewState, Partial<Record<ReviewEvent, ReviewState>>> = {
  PENDING_GENERATION: {
    GENERATION_SUCCEEDED: "AWAITING_REVIEW",
    GENERATION_RETURNED_NONE: "REJECTED_NONE",
  },
  AWAITING_REVIEW: {
    APPROVE: "APPROVED",
    CORRECT: "CORRECTED",
  },
  APPROVED: {},
  CORRECTED: {},
  REJECTED_NONE: {},
};

export class IllegalTransitionError extends Error {
  constructor(state: ReviewState, event: ReviewEvent) {
    super(`no transition for ${event} in state ${state}`);
    this.name = "IllegalTransitionError";
  }
}

export function transition(state: ReviewState, event: ReviewEvent): ReviewState {
  const next = TRANSITIONS[state][event];
  if (next === undefined) {
    throw new IllegalTransitionError(state, event);
  }
  return next;
}

/** The event a fresh generation result feeds into the machine. */
export function eventForStatus(status: ResultStatus): ReviewEvent | null {
  switch (status) {
    case "EXPLAINED":
      return "GENERATION_SUCCEEDED";
    case "NONE_RESPONSE":
      return "GENERATION_RETURNED_NONE";
    case "ERROR":
      return null; // nothing was generated; the request can simply be retried
  }
}

export function canReview(state: ReviewState): boolean {
  return state === "AWAITING_REVIEW";
}

export function isTerminal(state: ReviewState): boolean {
  return Object.keys(TRANSITIONS[state]).length === 0;
}

export const ALL_STATES: readonly ReviewState[] = Object.keys(
  TRANSITIONS,
) as ReviewState[];

export const ALL_EVENTS: readonly ReviewEvent[] = [
  "GENERATION_SUCCEEDED",
  "GENERATION_RETURNED_NONE",
  "APPROVE",
  "CORRECT",
];
