// Browser-local credential wallet. Credentials and holder seeds live only
// in localStorage; the only thing that ever leaves is a Presentation the
// user explicitly builds.

import type { Credential } from "./identity.js";

export interface WalletEntry {
  label: string;
  credential: Credential;
  holderSeedHex: string;
  createdAt: string;
}

const STORAGE_KEY = "quebian.wallet.v1";

interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

class MemoryStorage implements StorageLike {
  private map = new Map<string, string>();
  getItem(key: string) {
    return this.map.get(key) ?? null;
  }
  setItem(key: string, value: string) {
    this.map.set(key, value);
  }
  removeItem(key: string) {
    this.map.delete(key);
  }
}

export class Wallet {
  private storage: StorageLike;

  constructor(storage?: StorageLike) {
    storage ??=
      typeof localStorage !== "undefined" ? localStorage : new MemoryStorage();
    this.storage = storage;
  }

  list(): WalletEntry[] {
    const raw = this.storage.getItem(STORAGE_KEY);
    if (!raw) return [];
    try {
      const parsed = JSON.parse(raw);
      return Array.isArray(parsed.entries) ? parsed.entries : [];
    } catch {
      return [];
    }
  }

  private save(entries: WalletEntry[]): void {
    this.storage.setItem(STORAGE_KEY, JSON.stringify({ entries }));
  }

  add(label: string, credential: Credential, holderSeedHex: string): WalletEntry {
    const entries = this.list();
    if (entries.some((e) => e.label === label)) {
      throw new Error(`wallet already has an entry labelled ${label}`);
    }
    const entry: WalletEntry = {
      label,
      credential,
      holderSeedHex,
      createdAt: new Date().toISOString(),
    };
    this.save([...entries, entry]);
    return entry;
  }

  get(label: string): WalletEntry | null {
    return this.list().find((e) => e.label === label) ?? null;
  }

  remove(label: string): void {
    this.save(this.list().filter((e) => e.label !== label));
  }

  clear(): void {
    this.storage.removeItem(STORAGE_KEY);
  }

  /** Wallet export for backup; contains secrets, never posted anywhere. */
  exportJson(): string {
    return JSON.stringify({ entries: this.list() }, null, 2);
  }

  importJson(json: string): number {
    const parsed = JSON.parse(json);
    if (!Array.isArray(parsed.entries)) throw new Error("not a wallet export");
    const existing = this.list();
    const labels = new Set(existing.map((e) => e.label));
    const incoming = parsed.entries.filter(
      (e: WalletEntry) => !labels.has(e.label)
    );
    this.save([...existing, ...incoming]);
    return incoming.length;
  }
}
