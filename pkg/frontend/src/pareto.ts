/** Client-side dominance and Pareto-front extraction (maximization). */

export function dominates(a: number[], b: number[]): boolean {
  if (a.length !== b.length) {
    throw new Error(`dominance needs equal lengths, got ${a.length} vs ${b.length}`);
  }
  let strict = false;
  for (let i = 0; i < a.length; i++) {
    if (a[i] < b[i]) return false;
    if (a[i] > b[i]) strict = true;
  }
  return strict;
}

/** Indices of non-dominated points; duplicates of a front point are all kept. */
export function paretoFront(points: number[][]): number[] {
  const front: number[] = [];
  for (let i = 0; i < points.length; i++) {
    let dominated = false;
    for (let j = 0; j < points.length && !dominated; j++) {
      if (j !== i && dominates(points[j], points[i])) dominated = true;
    }
    if (!dominated) front.push(i);
  }
  return front;
}
