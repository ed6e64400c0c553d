/** Pure pixel-space geometry for the objective chart and the PCP.

Kept free of DOM types so the mapping logic is unit-testable; the component
layer only turns these into SVG elements.
*/

import { AxisInfo } from "./api.js";
import { ChartPoint, PcpLine } from "./state.js";

export interface Box {
  width: number;
  height: number;
  margin: { top: number; right: number; bottom: number; left: number };
}

export const linearScale = (
  domainMin: number,
  domainMax: number,
  rangeMin: number,
  rangeMax: number,
) => {
  const span = domainMax - domainMin || 1;
  return (v: number) => rangeMin + ((v - domainMin) / span) * (rangeMax - rangeMin);
};

export interface ChartGeometry {
  toPixel(p: { x: number; y: number }): { px: number; py: number };
  polylinePath(points: ChartPoint[]): string;
}

export function chartGeometry(objectives: AxisInfo[], box: Box): ChartGeometry {
  const { margin } = box;
  const sx = linearScale(objectives[0].min, objectives[0].max, margin.left, box.width - margin.right);
  const sy = linearScale(objectives[1].min, objectives[1].max, box.height - margin.bottom, margin.top);
  const toPixel = (p: { x: number; y: number }) => ({ px: sx(p.x), py: sy(p.y) });
  return {
    toPixel,
    polylinePath(points: ChartPoint[]): string {
      return points
        .map((p, i) => {
          const { px, py } = toPixel(p);
          return `${i === 0 ? "M" : "L"}${px.toFixed(1)},${py.toFixed(1)}`;
        })
        .join(" ");
    },
  };
}

export interface PcpGeometry {
  axisX(axisIndex: number): number;
  /** Pixel vertices of one polyline across all parameter axes. */
  lineVertices(line: PcpLine): { px: number; py: number }[];
  path(line: PcpLine): string;
}

export function pcpGeometry(parameters: AxisInfo[], box: Box): PcpGeometry {
  const { margin } = box;
  const innerWidth = box.width - margin.left - margin.right;
  const step = parameters.length > 1 ? innerWidth / (parameters.length - 1) : 0;
  const scales = parameters.map((axis) =>
    linearScale(axis.min, axis.max, box.height - margin.bottom, margin.top),
  );
  const axisX = (i: number) => margin.left + i * step;
  const lineVertices = (line: PcpLine) =>
    line.parameters.map((value, i) => ({ px: axisX(i), py: scales[i](value) }));
  return {
    axisX,
    lineVertices,
    path(line: PcpLine): string {
      return lineVertices(line)
        .map((v, i) => `${i === 0 ? "M" : "L"}${v.px.toFixed(1)},${v.py.toFixed(1)}`)
        .join(" ");
    },
  };
}
