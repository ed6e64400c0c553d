import { SteeringApi } from "./api.js";
import { Cockpit } from "./components.js";
import { CockpitStore } from "./state.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

async function boot(): Promise<void> {
  const baseUrl = param("service", "http://127.0.0.1:8711");
  const api = new SteeringApi(baseUrl);
  const store = new CockpitStore(api, true);
  await store.start({
    app_id: param("app", "app1"),
    mode: param("mode", "cooperative"),
    rng_seed: Number(param("seed", "0")),
  });
  const root = document.getElementById("cockpit");
  if (!root) throw new Error("missing #cockpit root element");
  new Cockpit(root, store).mount();
}

boot().catch((err) => {
  const root = document.getElementById("cockpit");
  if (root) root.textContent = `failed to start: ${err}`;
  console.error(err);
});
