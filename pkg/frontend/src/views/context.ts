import type { GatewayClient } from "../api.js";
import type { Wallet } from "../wallet.js";

export interface PortalContext {
  api: GatewayClient;
  wallet: Wallet;
}
