// Verifier flow: paste a presentation, authenticate it against the ledger
// via the gateway, show accept (with the disclosed attributes) or the
// rejection reason.

import type { PortalContext } from "./context.js";
import { banner, clear, el } from "./dom.js";

export interface VerifyOutcome {
  accepted: boolean;
  reason: string;
  disclosed?: Record<string, { value: string; salt: string }>;
}

export async function verifyPastedPresentation(
  ctx: PortalContext,
  raw: string
): Promise<VerifyOutcome> {
  let presentation: unknown;
  try {
    presentation = JSON.parse(raw);
  } catch {
    return { accepted: false, reason: "BAD_REQUEST: not valid JSON" };
  }
  const result = await ctx.api.verifyPresentation(presentation);
  return {
    accepted: result.accepted,
    reason: result.reason,
    disclosed: result.disclosed as VerifyOutcome["disclosed"],
  };
}

export function renderVerifier(root: HTMLElement, ctx: PortalContext): void {
  clear(root);
  const input = el("textarea", {
    rows: "12",
    "data-role": "presentation",
    placeholder: "paste a *.pres.json presentation here",
  });
  const check = el("button", { type: "button", "data-role": "verify" }, ["Verify"]);
  const status = el("div", { class: "status", "data-role": "status" });

  const panel = el("div", { class: "panel", "data-view": "verifier" }, [
    el("h2", {}, ["Verifier: authenticate a presentation"]),
    input,
    check,
    status,
  ]);

  check.addEventListener("click", () => {
    const pending = verifyPastedPresentation(
      ctx, (input as HTMLTextAreaElement).value
    ).then((outcome) => {
      clear(status);
      if (outcome.accepted) {
        const disclosed = outcome.disclosed ?? {};
        const items = Object.entries(disclosed).map(([attr, pair]) =>
          el("li", {}, [`${attr}: ${pair.value}`])
        );
        status.append(
          banner("ok", "accepted"),
          items.length
            ? el("ul", { class: "disclosed" }, items)
            : el("p", {}, ["no attributes disclosed (possession proof only)"])
        );
      } else {
        status.append(banner("error", `rejected: ${outcome.reason}`));
      }
    });
    (panel as HTMLElement & { _pending?: Promise<void> })._pending = pending;
  });

  root.append(panel);
}
