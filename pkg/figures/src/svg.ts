/** Minimal deterministic SVG chart building: multi-panel line/point plots.
 *
 * No randomness, no timestamps, fixed-precision coordinates, so repeated
 * renders of the same data are byte-identical.
 */

export interface Series {
  label: string;
  points: Array<[number, number]>;
  color: string;
  dashed?: boolean;
}

export interface Panel {
  title: string;
  series: Series[];
  referenceY?: number;
}

export interface ChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  panels: Panel[];
  width?: number;
  height?: number;
  yMin?: number;
  yMax?: number;
}

export const PALETTE = ["#1f6fb2", "#d95f02", "#2ca02c", "#7b3294", "#d01c8b", "#636363"];

const fmt = (x: number): string => {
  if (!isFinite(x)) return "0";
  return Number(x.toPrecision(6)).toString();
};

function niceTicks(lo: number, hi: number, count = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const candidates = [step, 2 * step, 2.5 * step, 5 * step, 10 * step];
  const chosen = candidates.find((s) => span / s <= count + 1) ?? 10 * step;
  const start = Math.ceil(lo / chosen) * chosen;
  const ticks: number[] = [];
  for (let t = start; t <= hi + 1e-12 * span; t += chosen) {
    ticks.push(Number(t.toPrecision(12)));
  }
  return ticks;
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderChart(spec: ChartSpec): string {
  const panelW = 300;
  const panelH = 240;
  const margin = { left: 62, right: 16, top: 44, bottom: 48 };
  const cols = spec.panels.length;
  const width = spec.width ?? margin.left + cols * (panelW + 24) + margin.right;
  const height = spec.height ?? margin.top + panelH + margin.bottom + 30;

  const allPoints = spec.panels.flatMap((p) => p.series.flatMap((s) => s.points));
  const xs = allPoints.map((p) => p[0]);
  const ys = allPoints.map((p) => p[1]).concat(
    spec.panels.flatMap((p) => (p.referenceY !== undefined ? [p.referenceY] : []))
  );
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  const yLo = spec.yMin ?? Math.min(...ys);
  const yHi = spec.yMax ?? Math.max(...ys);
  const padY = (yHi - yLo || 1) * 0.08;
  const y0 = spec.yMin ?? yLo - padY;
  const y1 = spec.yMax ?? yHi + padY;
  const padX = (xHi - xLo || 1) * 0.05;
  const x0 = xLo - padX;
  const x1 = xHi + padX;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(
    `<text x="${width / 2}" y="24" text-anchor="middle" font-size="16">${escapeXml(spec.title)}</text>`
  );

  spec.panels.forEach((panel, pi) => {
    const ox = margin.left + pi * (panelW + 24);
    const oy = margin.top;
    const sx = (x: number) => ox + ((x - x0) / (x1 - x0)) * panelW;
    const sy = (y: number) => oy + panelH - ((y - y0) / (y1 - y0)) * panelH;

    parts.push(
      `<rect x="${ox}" y="${oy}" width="${panelW}" height="${panelH}" fill="none" stroke="#999"/>`
    );
    parts.push(
      `<text x="${ox + panelW / 2}" y="${oy - 8}" text-anchor="middle" font-size="12">${escapeXml(panel.title)}</text>`
    );
    for (const t of niceTicks(x0, x1)) {
      parts.push(
        `<line x1="${fmt(sx(t))}" y1="${oy + panelH}" x2="${fmt(sx(t))}" y2="${oy + panelH + 4}" stroke="#333"/>`
      );
      parts.push(
        `<text x="${fmt(sx(t))}" y="${oy + panelH + 16}" text-anchor="middle" font-size="10">${fmt(t)}</text>`
      );
    }
    if (pi === 0) {
      for (const t of niceTicks(y0, y1)) {
        parts.push(
          `<line x1="${ox - 4}" y1="${fmt(sy(t))}" x2="${ox}" y2="${fmt(sy(t))}" stroke="#333"/>`
        );
        parts.push(
          `<text x="${ox - 7}" y="${fmt(sy(t) + 3)}" text-anchor="end" font-size="10">${fmt(t)}</text>`
        );
      }
    }
    if (panel.referenceY !== undefined) {
      parts.push(
        `<line x1="${ox}" y1="${fmt(sy(panel.referenceY))}" x2="${ox + panelW}" ` +
          `y2="${fmt(sy(panel.referenceY))}" stroke="#444" stroke-dasharray="6,4" class="reference-line"/>`
      );
    }
    for (const series of panel.series) {
      const path = series.points
        .map(([x, y], i) => `${i === 0 ? "M" : "L"}${fmt(sx(x))},${fmt(sy(y))}`)
        .join(" ");
      const dash = series.dashed ? ` stroke-dasharray="4,3"` : "";
      parts.push(
        `<path d="${path}" fill="none" stroke="${series.color}" stroke-width="1.6"${dash}/>`
      );
      for (const [x, y] of series.points) {
        parts.push(
          `<circle cx="${fmt(sx(x))}" cy="${fmt(sy(y))}" r="2.4" fill="${series.color}"/>`
        );
      }
    }
  });

  // shared legend from the first panel's series labels
  const labels = spec.panels[0]?.series ?? [];
  labels.forEach((s, i) => {
    const lx = margin.left + i * 170;
    const ly = height - 12;
    parts.push(`<line x1="${lx}" y1="${ly - 4}" x2="${lx + 22}" y2="${ly - 4}" stroke="${s.color}" stroke-width="2"/>`);
    parts.push(`<text x="${lx + 28}" y="${ly}" font-size="11">${escapeXml(s.label)}</text>`);
  });

  parts.push(
    `<text x="${width / 2}" y="${margin.top + panelH + 36}" text-anchor="middle" font-size="12">${escapeXml(spec.xLabel)}</text>`
  );
  parts.push(
    `<text x="16" y="${margin.top + panelH / 2}" text-anchor="middle" font-size="12" ` +
      `transform="rotate(-90 16 ${margin.top + panelH / 2})">${escapeXml(spec.yLabel)}</text>`
  );
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

/** Plain SVG table used for the welfare summary. */
export function renderTable(title: string, header: string[], rows: string[][]): string {
  const rowH = 24;
  const colW = 130;
  const width = 40 + colW * header.length;
  const height = 70 + rowH * (rows.length + 1);
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(`<text x="${width / 2}" y="26" text-anchor="middle" font-size="15">${escapeXml(title)}</text>`);
  const drawRow = (cells: string[], y: number, bold: boolean) => {
    cells.forEach((cell, i) => {
      parts.push(
        `<text x="${30 + i * colW}" y="${y}" font-size="12"${bold ? ' font-weight="bold"' : ""}>${escapeXml(cell)}</text>`
      );
    });
  };
  drawRow(header, 52, true);
  parts.push(`<line x1="20" y1="58" x2="${width - 20}" y2="58" stroke="#333"/>`);
  rows.forEach((row, r) => drawRow(row, 76 + r * rowH, false));
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
