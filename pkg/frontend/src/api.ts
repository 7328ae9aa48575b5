// Gateway HTTP client. Every request funnels through one method so tests
// can capture outgoing traffic and assert nothing undisclosed leaves the
// browser.

import type { Presentation, SignedProposal } from "./identity.js";

export interface ApiError {
  code: string;
  message: string;
  txId?: string;
}

export class GatewayError extends Error {
  constructor(public status: number, public error: ApiError) {
    super(`${error.code}: ${error.message}`);
  }
}

export interface CommitResult {
  txId: string;
  height: number;
  code: string;
}

export type RequestCapture = (method: string, path: string, body: string | null) => void;

export class GatewayClient {
  onRequest: RequestCapture | null = null;

  constructor(
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const bodyText = body === undefined ? null : JSON.stringify(body);
    this.onRequest?.(method, path, bodyText);
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: bodyText === null ? {} : { "content-type": "application/json" },
      body: bodyText,
    });
    const text = await response.text();
    const parsed = text ? JSON.parse(text) : {};
    if (!response.ok) {
      const error: ApiError =
        parsed && typeof parsed.code === "string"
          ? parsed
          : { code: "BAD_REQUEST", message: text || response.statusText };
      throw new GatewayError(response.status, error);
    }
    return parsed as T;
  }

  get<T>(path: string): Promise<T> {
    return this.request<T>("GET", path);
  }

  post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>("POST", path, body);
  }

  // -- nonce + identity -------------------------------------------------

  async nonce(): Promise<string> {
    return (await this.get<{ nonce: string }>("/iam/nonce")).nonce;
  }

  registerDid(did: string, verificationKey: string, role: string) {
    return this.post<CommitResult>("/iam/dids", { did, verificationKey, role });
  }

  submitSignedProposal(path: string, proposal: SignedProposal) {
    return this.post<CommitResult>(path, { proposal });
  }

  verifyPresentation(presentation: Presentation | unknown) {
    return this.post<{ accepted: boolean; reason: string; disclosed?: unknown }>(
      "/iam/verify",
      { presentation }
    );
  }

  // -- EHR ----------------------------------------------------------------

  registerHospital(payload: unknown) {
    return this.post<CommitResult>("/hospitals", payload);
  }

  registerDoctor(payload: unknown) {
    return this.post<CommitResult>("/doctors", payload);
  }

  registerPatient(payload: unknown) {
    return this.post<CommitResult>("/patients", payload);
  }

  appendRecord(payload: unknown) {
    return this.post<CommitResult>("/records", payload);
  }

  grantConsent(patientId: string, doctorId: string, presentation: Presentation) {
    return this.post<CommitResult>("/consents/grant", {
      patientId,
      doctorId,
      presentation,
    });
  }

  revokeConsent(patientId: string, doctorId: string, presentation: Presentation) {
    return this.post<CommitResult>("/consents/revoke", {
      patientId,
      doctorId,
      presentation,
    });
  }

  async recordsByPatient(patientId: string) {
    const result = await this.get<{ records: RecordDoc[]; total: number }>(
      `/records?patientId=${encodeURIComponent(patientId)}`
    );
    return result.records;
  }

  async recordsBySymptom(symptomId: string) {
    const result = await this.get<{ records: RecordDoc[]; total: number }>(
      `/records?symptomId=${encodeURIComponent(symptomId)}`
    );
    return result.records;
  }

  // -- ledger -------------------------------------------------------------

  block(height: number) {
    return this.get<BlockInfo>(`/ledger/blocks/${height}`);
  }

  ledgerVerify() {
    return this.get<{ ok: boolean; firstBadHeight: number | null }>("/ledger/verify");
  }

  metrics() {
    return this.get<{ height: number; committedTxs: number; validTxs: number }>(
      "/metrics"
    );
  }
}

export interface RecordDoc {
  recordId: string;
  patientId: string;
  doctorId: string;
  hospitalId: string;
  symptomIds: string[];
  note: string;
  createdAt: { height: number; txIndex: number };
}

export interface BlockInfo {
  block: {
    header: { height: number; prevHash: string; txRoot: string; timestamp: number };
    txs: { proposal: { txId: string; function: string } }[];
    validation: string[];
  };
  headerHash: string;
  tip: number;
}
