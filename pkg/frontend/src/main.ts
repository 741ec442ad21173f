/** Hash-routed entry point: #/ is the dashboard, #/wf/<id> the detail view. */

import { ApiClient } from "./api.js";
import type { ViewHandle } from "./views.js";
import { mountDashboard, mountWorkflowDetail } from "./views.js";

const client = new ApiClient("");

let active: ViewHandle | null = null;

function navigate(hash: string): void {
  window.location.hash = hash;
}

async function route(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  active?.stop();
  const hash = window.location.hash || "#/";
  const detailMatch = /^#\/wf\/(.+)$/.exec(hash);
  if (detailMatch) {
    active = await mountWorkflowDetail(root, client, detailMatch[1], navigate);
  } else {
    active = await mountDashboard(root, client, navigate);
  }
}

window.addEventListener("hashchange", () => void route());
void route();
