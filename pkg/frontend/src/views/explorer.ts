// Block explorer: chain verification status plus the latest blocks with
// per-transaction validation codes (conflicts flagged distinctly).

import type { BlockInfo } from "../api.js";
import type { PortalContext } from "./context.js";
import { banner, clear, el } from "./dom.js";

export async function loadExplorer(
  ctx: PortalContext,
  window = 15
): Promise<{ ok: boolean; tip: number; blocks: BlockInfo[] }> {
  const verify = await ctx.api.ledgerVerify();
  const metrics = await ctx.api.metrics();
  const from = Math.max(0, metrics.height - window + 1);
  const blocks: BlockInfo[] = [];
  for (let height = metrics.height; height >= from; height--) {
    blocks.push(await ctx.api.block(height));
  }
  return { ok: verify.ok, tip: metrics.height, blocks };
}

function codeCell(code: string): HTMLElement {
  const cls = code === "VALID" ? "code-valid" : "code-invalid";
  return el("span", { class: `code ${cls}`, "data-code": code }, [code]);
}

function blockRow(info: BlockInfo): HTMLElement {
  const header = info.block.header;
  const codes = el("td", {}, []);
  info.block.validation.forEach((code, index) => {
    if (index > 0) codes.append(" ");
    codes.append(codeCell(code));
  });
  return el("tr", { "data-height": String(header.height) }, [
    el("td", {}, [String(header.height)]),
    el("td", { class: "mono" }, [info.headerHash.slice(0, 16) + "…"]),
    el("td", {}, [String(info.block.txs.length)]),
    codes,
  ]);
}

export function renderExplorer(root: HTMLElement, ctx: PortalContext): void {
  clear(root);
  const status = el("div", { class: "status", "data-role": "status" });
  const tbody = el("tbody", { "data-role": "blocks" });
  const reload = el("button", { type: "button", "data-role": "reload" }, ["Reload"]);

  const panel = el("div", { class: "panel", "data-view": "explorer" }, [
    el("h2", {}, ["Ledger explorer"]),
    reload,
    status,
    el("table", { class: "blocks" }, [
      el("thead", {}, [
        el("tr", {}, [
          el("th", {}, ["Height"]),
          el("th", {}, ["Header hash"]),
          el("th", {}, ["Txs"]),
          el("th", {}, ["Validation"]),
        ]),
      ]),
      tbody,
    ]),
  ]);

  function refresh(): Promise<void> {
    const pending = loadExplorer(ctx).then(({ ok, tip, blocks }) => {
      clear(status);
      clear(tbody);
      status.append(
        ok
          ? banner("ok", `chain verified up to height ${tip}`)
          : banner("error", "chain verification FAILED")
      );
      for (const block of blocks) tbody.append(blockRow(block));
    });
    (panel as HTMLElement & { _pending?: Promise<void> })._pending = pending;
    return pending;
  }

  reload.addEventListener("click", () => void refresh());
  root.append(panel);
  void refresh();
}
