/** Cockpit store: server snapshots in, view state out.

Chart and PCP series derive solely from the latest snapshot; slider values
may diverge from history (that is their purpose). The Pareto polyline is
re-derived client-side from formal observations and cross-checked against the
server's flags in dev builds.
*/

import {
  ObservationView,
  Proposal,
  ServiceError,
  Snapshot,
  SteeringApi,
} from "./api.js";
import { paretoFront } from "./pareto.js";

export interface ChartPoint {
  x: number;
  y: number;
  historyIndex: number;
}

export interface ChartSeries {
  informal: ChartPoint[];
  formal: ChartPoint[];
  latestInformal: ChartPoint | null;
  latestFormal: ChartPoint | null;
  /** Green polyline through the non-dominated formal points, sorted by x. */
  paretoPolyline: ChartPoint[];
}

export interface PcpLine {
  historyIndex: number;
  fidelity: "formal" | "informal";
  latest: boolean;
  parameters: number[];
}

export interface ReasoningEntry {
  request: string;
  reason: string;
  candidateIndex: number;
  fallback: boolean;
  /** One-line summary; full text shown when expanded. */
  summary: string;
  expanded: boolean;
}

export interface Banner {
  code: string;
  message: string;
}

export interface CockpitViewState {
  status: Snapshot["status"] | "connecting";
  mode: Snapshot["mode"] | null;
  sliders: number[];
  requestDraft: string;
  reasoningFeed: ReasoningEntry[];
  showInformal: boolean;
  slidersEnabled: boolean;
  evaluating: boolean;
  proposing: boolean;
  seedingNotice: boolean;
  banner: Banner | null;
  chart: ChartSeries;
  pcp: PcpLine[];
}

const SUMMARY_LIMIT = 90;

export function summarize(reason: string): string {
  const line = reason.split(/\r?\n/, 1)[0].trim();
  return line.length <= SUMMARY_LIMIT ? line : line.slice(0, SUMMARY_LIMIT - 1) + "…";
}

export function deriveChart(history: ObservationView[], showInformal: boolean): ChartSeries {
  const informalObs = history.filter((o) => o.fidelity === "informal");
  const formalObs = history.filter((o) => o.fidelity === "formal");
  const toPoint = (o: ObservationView): ChartPoint => ({
    x: o.objectives[0],
    y: o.objectives[1],
    historyIndex: o.index,
  });
  const front = paretoFront(formalObs.map((o) => o.objectives));
  const polyline = front
    .map((i) => toPoint(formalObs[i]))
    .sort((a, b) => a.x - b.x || a.y - b.y);
  return {
    informal: showInformal ? informalObs.map(toPoint) : [],
    formal: formalObs.map(toPoint),
    latestInformal:
      showInformal && informalObs.length ? toPoint(informalObs[informalObs.length - 1]) : null,
    latestFormal: formalObs.length ? toPoint(formalObs[formalObs.length - 1]) : null,
    paretoPolyline: polyline,
  };
}

export function derivePcp(history: ObservationView[]): PcpLine[] {
  const latestOf: Partial<Record<"formal" | "informal", number>> = {};
  for (const o of history) latestOf[o.fidelity] = o.index;
  return history.map((o) => ({
    historyIndex: o.index,
    fidelity: o.fidelity,
    latest: latestOf[o.fidelity] === o.index,
    parameters: [...o.parameters],
  }));
}

/** Dev-build consistency check: client front == server pareto flags. */
export function checkParetoAgainstServer(history: ObservationView[]): void {
  const formalObs = history.filter((o) => o.fidelity === "formal");
  const client = new Set(paretoFront(formalObs.map((o) => o.objectives)).map((i) => formalObs[i].index));
  for (const o of history) {
    const expected = o.fidelity === "formal" && client.has(o.index);
    if (o.pareto !== expected) {
      throw new Error(
        `pareto flag mismatch at observation ${o.index}: server=${o.pareto} client=${expected}`,
      );
    }
  }
}

export class CockpitStore {
  private snapshot: Snapshot | null = null;
  private view: CockpitViewState;
  private sessionId = "";
  private listeners: ((view: CockpitViewState) => void)[] = [];

  constructor(
    private readonly api: SteeringApi,
    private readonly devChecks = false,
  ) {
    this.view = {
      status: "connecting",
      mode: null,
      sliders: [],
      requestDraft: "",
      reasoningFeed: [],
      showInformal: true,
      slidersEnabled: true,
      evaluating: false,
      proposing: false,
      seedingNotice: false,
      banner: null,
      chart: {
        informal: [],
        formal: [],
        latestInformal: null,
        latestFormal: null,
        paretoPolyline: [],
      },
      pcp: [],
    };
  }

  get state(): CockpitViewState {
    return this.view;
  }

  get session(): string {
    return this.sessionId;
  }

  get app() {
    return this.snapshot?.app ?? null;
  }

  subscribe(listener: (view: CockpitViewState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.view);
  }

  private patch(partial: Partial<CockpitViewState>): void {
    this.view = { ...this.view, ...partial };
    this.emit();
  }

  private applySnapshot(snapshot: Snapshot, overrideSliders = false): void {
    this.snapshot = snapshot;
    if (this.devChecks) checkParetoAgainstServer(snapshot.history);
    const feed = snapshot.requests.map((r, i) => ({
      request: r.request,
      reason: r.reason,
      candidateIndex: r.index,
      fallback: r.fallback,
      summary: summarize(r.reason),
      expanded: this.view.reasoningFeed[i]?.expanded ?? false,
    }));
    this.patch({
      status: snapshot.status,
      mode: snapshot.mode,
      sliders: overrideSliders ? [...snapshot.current_sliders] : this.slidersOrServer(snapshot),
      reasoningFeed: feed,
      slidersEnabled: snapshot.mode !== "bo_led",
      seedingNotice: snapshot.status === "seeding",
      chart: deriveChart(snapshot.history, this.view.showInformal),
      pcp: derivePcp(snapshot.history),
    });
  }

  private slidersOrServer(snapshot: Snapshot): number[] {
    return this.view.sliders.length ? this.view.sliders : [...snapshot.current_sliders];
  }

  private fail(err: unknown): void {
    if (err instanceof ServiceError) {
      this.patch({ banner: { code: err.error.code, message: err.error.message } });
      if (err.error.code === "insufficient_seed") {
        this.patch({ seedingNotice: true });
      }
    } else {
      this.patch({ banner: { code: "network_error", message: String(err) } });
    }
  }

  async start(config: Record<string, unknown>): Promise<void> {
    this.sessionId = await this.api.createSession(config);
    await this.refresh(true);
  }

  async refresh(overrideSliders = false): Promise<void> {
    const snapshot = await this.api.snapshot(this.sessionId);
    this.applySnapshot(snapshot, overrideSliders);
  }

  setRequestDraft(text: string): void {
    this.patch({ requestDraft: text });
  }

  toggleInformal(): void {
    const showInformal = !this.view.showInformal;
    this.patch({ showInformal });
    if (this.snapshot) {
      this.patch({ chart: deriveChart(this.snapshot.history, showInformal) });
    }
  }

  /** Immediate local update, then pushed to the server. */
  async setSlider(index: number, value: number): Promise<void> {
    if (!this.view.slidersEnabled) return;
    const sliders = [...this.view.sliders];
    sliders[index] = value;
    this.patch({ sliders, banner: null });
    try {
      await this.api.setSliders(this.sessionId, sliders);
    } catch (err) {
      this.fail(err);
    }
  }

  /** "Ask AI for a New Design": empty drafts are fine. */
  async askAi(): Promise<Proposal | null> {
    this.patch({ proposing: true, banner: null });
    try {
      const proposal = await this.api.propose(this.sessionId, this.view.requestDraft);
      this.patch({ sliders: [...proposal.parameters] });
      await this.refresh();
      return proposal;
    } catch (err) {
      this.fail(err);
      return null;
    } finally {
      this.patch({ proposing: false });
    }
  }

  async evaluate(fidelity: "formal" | "informal"): Promise<void> {
    this.patch({ evaluating: true, banner: null });
    try {
      let result = await this.api.evaluate(this.sessionId, this.view.sliders, fidelity);
      while (result.status === "pending") {
        await new Promise((resolve) => setTimeout(resolve, 250));
        result = await this.api.evaluationStatus(this.sessionId, result.evaluation);
      }
      await this.refresh();
    } catch (err) {
      this.fail(err);
    } finally {
      this.patch({ evaluating: false });
    }
  }

  /** PCP click: restore that design's parameter values onto the sliders. */
  async restoreFromHistory(historyIndex: number): Promise<void> {
    const line = this.view.pcp.find((l) => l.historyIndex === historyIndex);
    if (!line) return;
    this.patch({ sliders: [...line.parameters], banner: null });
    try {
      await this.api.setSliders(this.sessionId, line.parameters);
    } catch (err) {
      this.fail(err);
    }
  }

  toggleFeedEntry(index: number): void {
    const feed = this.view.reasoningFeed.map((entry, i) =>
      i === index ? { ...entry, expanded: !entry.expanded } : entry,
    );
    this.patch({ reasoningFeed: feed });
  }
}
