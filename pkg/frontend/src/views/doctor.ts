// Doctor flow: pick a wallet credential, describe the visit, submit the
// record with a possession-only presentation (fresh gateway nonce).

import { GatewayError, CommitResult } from "../api.js";
import { createPresentation } from "../identity.js";
import type { PortalContext } from "./context.js";
import { banner, clear, el, labelled } from "./dom.js";

export interface DoctorInput {
  walletLabel: string;
  patientId: string;
  doctorId: string;
  hospitalId: string;
  symptomIds: string[];
  note: string;
}

export type DoctorOutcome =
  | { ok: true; result: CommitResult }
  | { ok: false; code: string; message: string };

export async function doctorSubmitRecord(
  ctx: PortalContext,
  input: DoctorInput
): Promise<DoctorOutcome> {
  if (input.symptomIds.length === 0) {
    return { ok: false, code: "BAD_REQUEST", message: "enter at least one symptom" };
  }
  const entry = ctx.wallet.get(input.walletLabel);
  if (!entry) {
    return { ok: false, code: "BAD_REQUEST", message: "no such wallet credential" };
  }
  const nonce = await ctx.api.nonce();
  const presentation = await createPresentation(
    entry.credential, [], nonce, entry.holderSeedHex
  );
  try {
    const result = await ctx.api.appendRecord({
      patientId: input.patientId,
      doctorId: input.doctorId,
      hospitalId: input.hospitalId,
      symptomIds: input.symptomIds,
      note: input.note,
      presentation,
    });
    return { ok: true, result };
  } catch (error) {
    if (error instanceof GatewayError) {
      return { ok: false, code: error.error.code, message: error.error.message };
    }
    throw error;
  }
}

export function parseSymptoms(raw: string): string[] {
  return raw.split(",").map((s) => s.trim()).filter((s) => s.length > 0);
}

export function renderDoctor(root: HTMLElement, ctx: PortalContext): void {
  clear(root);
  const credentials = ctx.wallet.list();
  const select = el("select", { name: "credential", "data-role": "credential" });
  for (const entry of credentials) {
    select.append(el("option", { value: entry.label }, [entry.label]));
  }
  const patient = el("input", { name: "patientId", placeholder: "P001" });
  const doctor = el("input", { name: "doctorId", placeholder: "D01" });
  const hospital = el("input", { name: "hospitalId", placeholder: "H001" });
  const symptoms = el("input", { name: "symptoms", placeholder: "S42,S43" });
  const note = el("textarea", { name: "note", rows: "3" });
  const submit = el("button", { type: "submit" }, ["Append record"]);
  const status = el("div", { class: "status", "data-role": "status" });

  const form = el("form", { class: "panel", "data-view": "doctor" }, [
    el("h2", {}, ["Doctor: append a diagnosis"]),
    labelled("Credential", select),
    labelled("Patient ID", patient),
    labelled("Doctor ID", doctor),
    labelled("Hospital ID", hospital),
    labelled("Symptom IDs (comma separated)", symptoms),
    labelled("Note", note),
    submit,
    status,
  ]);

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const symptomIds = parseSymptoms((symptoms as HTMLInputElement).value);
    clear(status);
    if (symptomIds.length === 0) {
      status.append(banner("error", "BAD_REQUEST: enter at least one symptom"));
      return;
    }
    const pending = doctorSubmitRecord(ctx, {
      walletLabel: (select as HTMLSelectElement).value,
      patientId: (patient as HTMLInputElement).value.trim(),
      doctorId: (doctor as HTMLInputElement).value.trim(),
      hospitalId: (hospital as HTMLInputElement).value.trim(),
      symptomIds,
      note: (note as HTMLTextAreaElement).value,
    }).then((outcome) => {
      clear(status);
      if (outcome.ok) {
        status.append(
          banner(
            "ok",
            `committed at height ${outcome.result.height} (${outcome.result.code})`
          )
        );
      } else if (outcome.code === "CONSENT_MISSING") {
        // form stays filled so the doctor can retry after the grant
        status.append(
          banner("error", "CONSENT_MISSING: ask the patient to grant consent, then retry")
        );
      } else {
        status.append(banner("error", `${outcome.code}: ${outcome.message}`));
      }
    });
    (form as HTMLFormElement & { _pending?: Promise<void> })._pending = pending;
  });

  root.append(form);
}
