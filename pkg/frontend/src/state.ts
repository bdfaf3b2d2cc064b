/** Page state and the tri-state marking rules.
 *
 * Marks live on the client only; the server sees them as id sets when
 * feedback is submitted. Keeping each card's mark a single field makes
 * the positive and negative sets disjoint by construction, and building
 * them from the current page makes it impossible to send a stale id.
 */

import type { PageResponse } from "./api.js";

export type Mark = "unset" | "positive" | "negative";

export interface ResultCard {
  imageId: number;
  url: string;
  rank: number;
  score: number;
  mark: Mark;
}

export interface SessionPage {
  sessionId: string;
  iteration: number;
  pageSize: number;
  cards: ResultCard[];
}

/** A fresh page from the server; every mark starts unset. */
export function pageFromResponse(page: PageResponse): SessionPage {
  return {
    sessionId: page.sessionId,
    iteration: page.iteration,
    pageSize: page.pageSize,
    cards: page.results.map((entry) => ({
      imageId: entry.imageId,
      url: entry.url,
      rank: entry.rank,
      score: entry.score,
      mark: "unset",
    })),
  };
}

/** Toggle one card: clicking its active mark clears it, anything else
 * replaces it (so positive followed by negative ends negative). */
export function toggleMark(
  page: SessionPage,
  imageId: number,
  mark: "positive" | "negative",
): SessionPage {
  if (!page.cards.some((card) => card.imageId === imageId)) {
    throw new Error(`image ${imageId} is not on the current page`);
  }
  return {
    ...page,
    cards: page.cards.map((card) =>
      card.imageId === imageId
        ? { ...card, mark: card.mark === mark ? "unset" : mark }
        : card,
    ),
  };
}

export interface FeedbackSets {
  positives: number[];
  negatives: number[];
}

/** The id sets a submit would send. With markRestNegative, every card
 * left unset is reported negative, mirroring a full-page judgment. */
export function feedbackSets(
  page: SessionPage,
  markRestNegative: boolean,
): FeedbackSets {
  const positives: number[] = [];
  const negatives: number[] = [];
  for (const card of page.cards) {
    if (card.mark === "positive") {
      positives.push(card.imageId);
    } else if (card.mark === "negative" || markRestNegative) {
      negatives.push(card.imageId);
    }
  }
  return { positives, negatives };
}
