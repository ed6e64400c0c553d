/** Thin DOM layer: renders the view state, forwards events to the store.

Three panels: set-parameters (sliders + ask-AI + reasoning feed), evaluate
(informal/formal buttons), check-and-analyze (objective chart + PCP).
Informal series are blue, formal orange, the latest of each solid, the Pareto
polyline green. Clicking any PCP line restores that design on the sliders.
*/

import { AxisInfo } from "./api.js";
import { Box, chartGeometry, pcpGeometry } from "./geometry.js";
import { CockpitStore, CockpitViewState } from "./state.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export const COLORS = {
  informal: "#1f77b4", // blue
  formal: "#ff7f0e", // orange
  pareto: "#2ca02c", // green
};

const CHART_BOX: Box = {
  width: 420,
  height: 320,
  margin: { top: 16, right: 16, bottom: 36, left: 52 },
};

const PCP_BOX: Box = {
  width: 560,
  height: 280,
  margin: { top: 24, right: 24, bottom: 28, left: 24 },
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function svgEl(tag: string, attrs: Record<string, string | number>): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, String(value));
  }
  return node;
}

export class Cockpit {
  private sliderInputs: HTMLInputElement[] = [];
  private sliderValues: HTMLElement[] = [];
  private requestBox!: HTMLTextAreaElement;
  private askButton!: HTMLButtonElement;
  private informalButton!: HTMLButtonElement;
  private formalButton!: HTMLButtonElement;
  private informalToggle!: HTMLInputElement;
  private feed!: HTMLElement;
  private banner!: HTMLElement;
  private seedingNote!: HTMLElement;
  private statusLine!: HTMLElement;
  private chartSvg!: SVGElement;
  private pcpSvg!: SVGElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly store: CockpitStore,
  ) {}

  mount(): void {
    const app = this.store.app;
    if (!app) throw new Error("store must be started before mounting");
    this.root.replaceChildren();

    const title = el("header", "cockpit-header");
    title.append(el("h1", "", app.description));
    this.statusLine = el("div", "status-line");
    title.append(this.statusLine);
    this.banner = el("div", "banner hidden");
    this.seedingNote = el(
      "div",
      "seeding-note hidden",
      "Seeding: evaluate the required random designs before asking for proposals.",
    );
    this.root.append(title, this.banner, this.seedingNote);

    const panels = el("div", "panels");
    panels.append(this.buildParametersPanel(app.parameters));
    panels.append(this.buildEvaluatePanel());
    panels.append(this.buildResultsPanel());
    this.root.append(panels);

    this.store.subscribe((view) => this.render(view));
    this.render(this.store.state);
  }

  private buildParametersPanel(parameters: AxisInfo[]): HTMLElement {
    const panel = el("section", "panel panel-parameters");
    panel.append(el("h2", "", "Set Parameters"));
    for (const [i, axis] of parameters.entries()) {
      const row = el("div", "slider-row");
      const label = el("label", "", axis.unit ? `${axis.name} (${axis.unit})` : axis.name);
      const input = el("input") as HTMLInputElement;
      input.type = "range";
      input.min = String(axis.min);
      input.max = String(axis.max);
      input.step = String((axis.max - axis.min) / 1000);
      input.dataset.index = String(i);
      input.addEventListener("input", () => {
        void this.store.setSlider(i, Number(input.value));
      });
      const value = el("span", "slider-value");
      row.append(label, input, value);
      panel.append(row);
      this.sliderInputs.push(input);
      this.sliderValues.push(value);
    }

    this.requestBox = el("textarea", "request-box") as HTMLTextAreaElement;
    this.requestBox.placeholder = "Describe what you want (optional)";
    this.requestBox.addEventListener("input", () =>
      this.store.setRequestDraft(this.requestBox.value),
    );
    this.askButton = el("button", "ask-ai", "Ask AI for a New Design") as HTMLButtonElement;
    this.askButton.addEventListener("click", () => void this.store.askAi());
    this.feed = el("div", "reasoning-feed");
    panel.append(this.requestBox, this.askButton, el("h3", "", "Suggestions"), this.feed);
    return panel;
  }

  private buildEvaluatePanel(): HTMLElement {
    const panel = el("section", "panel panel-evaluate");
    panel.append(el("h2", "", "Evaluate"));
    this.informalButton = el("button", "evaluate-informal", "Informal Evaluation") as HTMLButtonElement;
    this.formalButton = el("button", "evaluate-formal", "Formal Evaluation") as HTMLButtonElement;
    this.informalButton.addEventListener("click", () => void this.store.evaluate("informal"));
    this.formalButton.addEventListener("click", () => void this.store.evaluate("formal"));
    panel.append(this.informalButton, this.formalButton);
    return panel;
  }

  private buildResultsPanel(): HTMLElement {
    const panel = el("section", "panel panel-results");
    panel.append(el("h2", "", "Check and Analyze Results"));
    this.chartSvg = svgEl("svg", {
      class: "objective-chart",
      viewBox: `0 0 ${CHART_BOX.width} ${CHART_BOX.height}`,
      width: CHART_BOX.width,
      height: CHART_BOX.height,
    });
    const toggleRow = el("label", "informal-toggle-row");
    this.informalToggle = el("input") as HTMLInputElement;
    this.informalToggle.type = "checkbox";
    this.informalToggle.checked = true;
    this.informalToggle.className = "informal-toggle";
    this.informalToggle.addEventListener("change", () => this.store.toggleInformal());
    toggleRow.append(this.informalToggle, document.createTextNode(" show informal results"));
    this.pcpSvg = svgEl("svg", {
      class: "pcp",
      viewBox: `0 0 ${PCP_BOX.width} ${PCP_BOX.height}`,
      width: PCP_BOX.width,
      height: PCP_BOX.height,
    });
    panel.append(this.chartSvg, toggleRow, el("h3", "", "Explored Parameters"), this.pcpSvg);
    return panel;
  }

  private render(view: CockpitViewState): void {
    const app = this.store.app;
    if (!app) return;
    this.statusLine.textContent = `session ${this.store.session} | ${view.mode ?? ""} | ${view.status}`;

    for (const [i, input] of this.sliderInputs.entries()) {
      if (document.activeElement !== input) {
        input.value = String(view.sliders[i]);
      }
      input.disabled = !view.slidersEnabled;
      this.sliderValues[i].textContent = Number(view.sliders[i]).toFixed(3);
    }
    this.askButton.disabled = view.proposing;
    this.informalButton.disabled = view.evaluating;
    this.formalButton.disabled = view.evaluating;

    this.banner.classList.toggle("hidden", view.banner === null);
    if (view.banner) {
      this.banner.textContent = `${view.banner.code}: ${view.banner.message}`;
      this.banner.dataset.code = view.banner.code;
    }
    this.seedingNote.classList.toggle("hidden", !view.seedingNotice);

    this.renderFeed(view);
    this.renderChart(view);
    this.renderPcp(view);
  }

  private renderFeed(view: CockpitViewState): void {
    this.feed.replaceChildren();
    view.reasoningFeed.forEach((entry, i) => {
      const item = el("div", "feed-entry");
      const head = el("div", "feed-summary");
      head.textContent = entry.request
        ? `"${entry.request}" -> candidate ${entry.candidateIndex}`
        : `(no request) -> candidate ${entry.candidateIndex}`;
      if (entry.fallback) head.textContent += " [fallback]";
      const summary = el("div", "feed-reason", entry.expanded ? entry.reason : entry.summary);
      const toggle = el("button", "feed-toggle", entry.expanded ? "less" : "more");
      toggle.addEventListener("click", () => this.store.toggleFeedEntry(i));
      item.append(head, summary, toggle);
      this.feed.append(item);
    });
  }

  private renderChart(view: CockpitViewState): void {
    const app = this.store.app!;
    const geom = chartGeometry(app.objectives, CHART_BOX);
    this.chartSvg.replaceChildren();
    const axes = svgEl("g", { class: "axes" });
    axes.append(
      svgEl("line", {
        x1: CHART_BOX.margin.left, y1: CHART_BOX.height - CHART_BOX.margin.bottom,
        x2: CHART_BOX.width - CHART_BOX.margin.right,
        y2: CHART_BOX.height - CHART_BOX.margin.bottom, stroke: "#888",
      }),
      svgEl("line", {
        x1: CHART_BOX.margin.left, y1: CHART_BOX.margin.top,
        x2: CHART_BOX.margin.left, y2: CHART_BOX.height - CHART_BOX.margin.bottom,
        stroke: "#888",
      }),
    );
    const xLabel = svgEl("text", {
      x: CHART_BOX.width / 2, y: CHART_BOX.height - 6, "text-anchor": "middle",
      class: "axis-label",
    });
    xLabel.textContent = app.objectives[0].name;
    const yLabel = svgEl("text", {
      x: 12, y: CHART_BOX.height / 2, "text-anchor": "middle",
      transform: `rotate(-90 12 ${CHART_BOX.height / 2})`, class: "axis-label",
    });
    yLabel.textContent = app.objectives[1].name;
    this.chartSvg.append(axes, xLabel, yLabel);

    if (view.chart.paretoPolyline.length > 0) {
      this.chartSvg.append(
        svgEl("path", {
          class: "pareto-line",
          d: geom.polylinePath(view.chart.paretoPolyline),
          fill: "none", stroke: COLORS.pareto, "stroke-width": 2,
        }),
      );
    }
    const dot = (
      p: { x: number; y: number; historyIndex: number },
      color: string,
      solid: boolean,
      cls: string,
    ) => {
      const { px, py } = geom.toPixel(p);
      this.chartSvg.append(
        svgEl("circle", {
          class: cls, cx: px, cy: py, r: 5,
          fill: solid ? color : "none", stroke: color, "stroke-width": 1.5,
          "data-history-index": p.historyIndex,
        }),
      );
    };
    for (const p of view.chart.informal) dot(p, COLORS.informal, false, "pt-informal");
    for (const p of view.chart.formal) dot(p, COLORS.formal, false, "pt-formal");
    if (view.chart.latestInformal) dot(view.chart.latestInformal, COLORS.informal, true, "pt-informal-latest");
    if (view.chart.latestFormal) dot(view.chart.latestFormal, COLORS.formal, true, "pt-formal-latest");
  }

  private renderPcp(view: CockpitViewState): void {
    const app = this.store.app!;
    const geom = pcpGeometry(app.parameters, PCP_BOX);
    this.pcpSvg.replaceChildren();
    app.parameters.forEach((axis, i) => {
      const x = geom.axisX(i);
      this.pcpSvg.append(
        svgEl("line", {
          x1: x, y1: PCP_BOX.margin.top, x2: x,
          y2: PCP_BOX.height - PCP_BOX.margin.bottom, stroke: "#bbb",
        }),
      );
      const label = svgEl("text", {
        x, y: PCP_BOX.height - 8, "text-anchor": "middle", class: "pcp-axis-label",
      });
      label.textContent = axis.name;
      this.pcpSvg.append(label);
    });
    for (const line of view.pcp) {
      const path = svgEl("path", {
        class: `pcp-line pcp-${line.fidelity}${line.latest ? " pcp-latest" : ""}`,
        d: geom.path(line),
        fill: "none",
        stroke: line.fidelity === "informal" ? COLORS.informal : COLORS.formal,
        "stroke-width": line.latest ? 2.5 : 1.2,
        "stroke-dasharray": line.latest ? "none" : "5,4",
        "data-history-index": line.historyIndex,
      });
      path.addEventListener("click", () => void this.store.restoreFromHistory(line.historyIndex));
      this.pcpSvg.append(path);
    }
  }
}
