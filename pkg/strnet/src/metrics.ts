/**
 * Ranking metrics for training-time monitoring. Conventions match the
 * evaluation toolkit this package exports scores to: ties are grouped,
 * AUPRC is step-wise average precision, AUROC is the trapezoidal area.
 */

function groupedCounts(labels: number[], scores: number[]) {
  const order = Array.from(labels.keys()).sort((a, b) => scores[b] - scores[a]);
  const groups: Array<{ pos: number; neg: number }> = [];
  let i = 0;
  while (i < order.length) {
    let j = i;
    let pos = 0;
    let neg = 0;
    while (j < order.length && scores[order[j]] === scores[order[i]]) {
      if (labels[order[j]] === 1) pos++;
      else neg++;
      j++;
    }
    groups.push({ pos, neg });
    i = j;
  }
  return groups;
}

export function averagePrecision(labels: number[], scores: number[]): number {
  const p = labels.reduce((a, b) => a + b, 0);
  if (p === 0) throw new Error("average precision needs at least one positive");
  let tp = 0;
  let taken = 0;
  let prevRecall = 0;
  let ap = 0;
  for (const g of groupedCounts(labels, scores)) {
    tp += g.pos;
    taken += g.pos + g.neg;
    const recall = tp / p;
    ap += (recall - prevRecall) * (tp / taken);
    prevRecall = recall;
  }
  return ap;
}

export function aurocTrapezoid(labels: number[], scores: number[]): number {
  const p = labels.reduce((a, b) => a + b, 0);
  const n = labels.length - p;
  if (p === 0 || n === 0) throw new Error("AUROC needs both classes");
  let tp = 0;
  let fp = 0;
  let prevTpr = 0;
  let prevFpr = 0;
  let area = 0;
  for (const g of groupedCounts(labels, scores)) {
    tp += g.pos;
    fp += g.neg;
    const tpr = tp / p;
    const fpr = fp / n;
    area += ((fpr - prevFpr) * (tpr + prevTpr)) / 2;
    prevTpr = tpr;
    prevFpr = fpr;
  }
  return area;
}

export function sigmoid(x: number): number {
  return x >= 0 ? 1 / (1 + Math.exp(-x)) : Math.exp(x) / (1 + Math.exp(x));
}
