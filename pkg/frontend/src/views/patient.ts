// Patient flow: see my records, grant or revoke a doctor's consent.
// The patient id comes from the wallet credential's patientRef attribute.

import { GatewayError, CommitResult, RecordDoc } from "../api.js";
import { createPresentation } from "../identity.js";
import type { PortalContext } from "./context.js";
import { banner, clear, el, labelled } from "./dom.js";

export type ConsentOutcome =
  | { ok: true; result: CommitResult }
  | { ok: false; code: string; message: string };

export async function toggleConsent(
  ctx: PortalContext,
  walletLabel: string,
  patientId: string,
  doctorId: string,
  action: "grant" | "revoke"
): Promise<ConsentOutcome> {
  const entry = ctx.wallet.get(walletLabel);
  if (!entry) {
    return { ok: false, code: "BAD_REQUEST", message: "no such wallet credential" };
  }
  const nonce = await ctx.api.nonce();
  const presentation = await createPresentation(
    entry.credential, [], nonce, entry.holderSeedHex
  );
  try {
    const result =
      action === "grant"
        ? await ctx.api.grantConsent(patientId, doctorId, presentation)
        : await ctx.api.revokeConsent(patientId, doctorId, presentation);
    return { ok: true, result };
  } catch (error) {
    if (error instanceof GatewayError) {
      return { ok: false, code: error.error.code, message: error.error.message };
    }
    throw error;
  }
}

export function patientIdFromEntry(ctx: PortalContext, walletLabel: string): string {
  const entry = ctx.wallet.get(walletLabel);
  return entry?.credential.attrs["patientRef"] ?? "";
}

function recordRow(record: RecordDoc): HTMLElement {
  return el("tr", {}, [
    el("td", {}, [record.recordId]),
    el("td", {}, [record.doctorId]),
    el("td", {}, [record.symptomIds.join(", ")]),
    el("td", {}, [record.note]),
    el("td", {}, [String(record.createdAt.height)]),
  ]);
}

export function renderPatient(root: HTMLElement, ctx: PortalContext): void {
  clear(root);
  const credentials = ctx.wallet.list();
  const select = el("select", { "data-role": "credential" });
  for (const entry of credentials) {
    select.append(el("option", { value: entry.label }, [entry.label]));
  }
  const doctor = el("input", { name: "doctorId", placeholder: "D01" });
  const grant = el("button", { type: "button", "data-role": "grant" }, ["Grant consent"]);
  const revoke = el("button", { type: "button", "data-role": "revoke" }, ["Revoke consent"]);
  const refresh = el("button", { type: "button", "data-role": "refresh" }, ["Refresh records"]);
  const status = el("div", { class: "status", "data-role": "status" });
  const tableBody = el("tbody", { "data-role": "records" });

  const panel = el("div", { class: "panel", "data-view": "patient" }, [
    el("h2", {}, ["Patient: my records and consents"]),
    labelled("Credential", select),
    labelled("Doctor ID", doctor),
    el("div", { class: "actions" }, [grant, revoke, refresh]),
    status,
    el("table", { class: "records" }, [
      el("thead", {}, [
        el("tr", {}, [
          el("th", {}, ["Record"]),
          el("th", {}, ["Doctor"]),
          el("th", {}, ["Symptoms"]),
          el("th", {}, ["Note"]),
          el("th", {}, ["Height"]),
        ]),
      ]),
      tableBody,
    ]),
  ]);

  async function loadRecords(): Promise<void> {
    const patientId = patientIdFromEntry(ctx, (select as HTMLSelectElement).value);
    clear(tableBody);
    if (!patientId) return;
    const records = await ctx.api.recordsByPatient(patientId);
    for (const record of records) tableBody.append(recordRow(record));
    panel.setAttribute("data-record-count", String(records.length));
  }

  function runConsent(action: "grant" | "revoke"): Promise<void> {
    const walletLabel = (select as HTMLSelectElement).value;
    const patientId = patientIdFromEntry(ctx, walletLabel);
    const pending = toggleConsent(
      ctx, walletLabel, patientId, (doctor as HTMLInputElement).value.trim(), action
    ).then((outcome) => {
      clear(status);
      status.append(
        outcome.ok
          ? banner("ok", `${action} committed at height ${outcome.result.height}`)
          : banner("error", `${outcome.code}: ${outcome.message}`)
      );
    });
    (panel as HTMLElement & { _pending?: Promise<void> })._pending = pending;
    return pending;
  }

  grant.addEventListener("click", () => void runConsent("grant"));
  revoke.addEventListener("click", () => void runConsent("revoke"));
  refresh.addEventListener("click", () => {
    (panel as HTMLElement & { _pending?: Promise<void> })._pending = loadRecords();
  });

  root.append(panel);
}
