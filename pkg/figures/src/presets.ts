/** Figure presets over the simulation CSV outputs.
 *
 * The five standard presets read the coverage grid (fig3_small) and the
 * local-power grid (fig_power); a density panel and a welfare table are
 * rendered when their optional inputs are present.  All statistics come
 * straight from the CSVs; nothing is recomputed here.
 */

import { existsSync, mkdirSync, writeFileSync } from "fs";
import { join } from "path";
import { num, readCsv, requireColumns, Row } from "./csv";
import { PALETTE, Panel, renderChart, renderTable, Series } from "./svg";

export const EXPECTED_INPUTS = ["fig3_small_results.csv", "fig_power_results.csv"];
export const OPTIONAL_INPUTS = ["fig1_density_density.csv", "welfare.csv"];

const uniqueSorted = (values: number[]): number[] =>
  [...new Set(values)].sort((a, b) => a - b);

function seriesBy(
  rows: Row[],
  keyOf: (r: Row) => string,
  x: (r: Row) => number,
  y: (r: Row) => number
): Series[] {
  const groups = new Map<string, Array<[number, number]>>();
  for (const row of rows) {
    const key = keyOf(row);
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push([x(row), y(row)]);
  }
  const labels = [...groups.keys()].sort();
  return labels.map((label, i) => ({
    label,
    color: PALETTE[i % PALETTE.length],
    points: groups.get(label)!.sort((a, b) => a[0] - b[0]),
  }));
}

function metricVsHeterogeneity(
  rows: Row[],
  metric: string,
  opts: { title: string; yLabel: string; referenceY?: number; yMin?: number; yMax?: number }
): string {
  const withMetric = rows.filter((r) => r[metric] !== "" && r[metric] !== undefined);
  const panels: Panel[] = uniqueSorted(withMetric.map((r) => num(r, "two_j"))).map((twoJ) => ({
    title: `2J = ${twoJ}`,
    referenceY: opts.referenceY,
    series: seriesBy(
      withMetric.filter((r) => num(r, "two_j") === twoJ),
      (r) => (r.ci_method === "none" ? r.estimator : `${r.estimator} ${r.ci_method}`),
      (r) => num(r, "v_tau_true"),
      (r) => num(r, metric)
    ),
  }));
  return renderChart({
    title: opts.title,
    xLabel: "true effect variance",
    yLabel: opts.yLabel,
    panels,
    yMin: opts.yMin,
    yMax: opts.yMax,
  });
}

function localParameterChart(
  rows: Row[],
  metric: string,
  opts: { title: string; yLabel: string; referenceY?: number }
): string {
  const withMetric = rows.filter((r) => r[metric] !== "" && r[metric] !== undefined);
  const panel: Panel = {
    title: "local heterogeneity",
    referenceY: opts.referenceY,
    series: seriesBy(
      withMetric,
      (r) => (r.ci_method === "none" ? r.estimator : `${r.estimator} ${r.ci_method}`),
      (r) => (num(r, "n") / num(r, "K")) * num(r, "v_tau_true"),
      (r) => num(r, metric)
    ),
  };
  return renderChart({
    title: opts.title,
    xLabel: "fold size x effect variance",
    yLabel: opts.yLabel,
    panels: [panel],
  });
}

function densityChart(rows: Row[]): string {
  const panels: Panel[] = [];
  for (const twoJ of uniqueSorted(rows.map((r) => num(r, "two_j")))) {
    for (const vTau of uniqueSorted(rows.map((r) => num(r, "v_tau_true")))) {
      const subset = rows.filter(
        (r) => num(r, "two_j") === twoJ && num(r, "v_tau_true") === vTau
      );
      if (subset.length === 0) continue;
      panels.push({
        title: `V = ${vTau}, 2J = ${twoJ}`,
        series: seriesBy(
          subset,
          (r) => r.estimator,
          (r) => num(r, "x"),
          (r) => num(r, "density")
        ),
      });
    }
  }
  return renderChart({
    title: "Sampling distribution of the estimators",
    xLabel: "estimate",
    yLabel: "density",
    panels,
  });
}

function welfareTable(rows: Row[]): string {
  const fmt3 = (v: number) => v.toFixed(3);
  return renderTable(
    "Targeting gains bounded by the effect variance",
    ["label", "ATE", "sqrt variance", "simple bound", "general bound"],
    rows.map((r) => [
      r.label,
      fmt3(num(r, "ate")),
      fmt3(num(r, "sqrt_vcate")),
      fmt3(num(r, "bound_simple")),
      fmt3(num(r, "bound_general")),
    ])
  );
}

const BASE = ["cell", "estimator", "ci_method", "n", "K", "two_j", "v_tau_true"];

export function renderAll(resultsDir: string, outDir: string): string[] {
  const fig3Path = join(resultsDir, "fig3_small_results.csv");
  const powerPath = join(resultsDir, "fig_power_results.csv");
  const missing = EXPECTED_INPUTS.filter((f) => !existsSync(join(resultsDir, f)));
  if (missing.length === EXPECTED_INPUTS.length) {
    throw new Error(
      `no inputs found in ${resultsDir}; expected files: ${EXPECTED_INPUTS.join(", ")}` +
        ` (optional: ${OPTIONAL_INPUTS.join(", ")})`
    );
  }
  if (missing.length > 0) {
    throw new Error(`missing input file in ${resultsDir}: ${missing.join(", ")}`);
  }

  mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  const emit = (name: string, svg: string) => {
    const path = join(outDir, name);
    writeFileSync(path, svg, "utf8");
    written.push(path);
  };

  const fig3 = readCsv(fig3Path);
  requireColumns(fig3, [...BASE, "coverage", "rmse", "mean_ci_length"], fig3Path);
  emit("coverage.svg", metricVsHeterogeneity(fig3, "coverage", {
    title: "Coverage of the true effect variance (nominal 0.95)",
    yLabel: "coverage",
    referenceY: 0.95,
    yMin: 0,
    yMax: 1.02,
  }));
  emit("rmse.svg", metricVsHeterogeneity(fig3, "rmse", {
    title: "Root mean squared error",
    yLabel: "RMSE",
  }));
  emit("ci_length.svg", metricVsHeterogeneity(fig3, "mean_ci_length", {
    title: "Mean interval length",
    yLabel: "length",
  }));

  const power = readCsv(powerPath);
  requireColumns(power, [...BASE, "reject_rate", "below_rate"], powerPath);
  emit("power.svg", localParameterChart(power, "reject_rate", {
    title: "Power of the homogeneity test",
    yLabel: "rejection rate",
    referenceY: 0.05,
  }));
  emit("onesided.svg", localParameterChart(power, "below_rate", {
    title: "One-sided error: truth below the interval",
    yLabel: "rate",
    referenceY: 0.05,
  }));

  const densityPath = join(resultsDir, "fig1_density_density.csv");
  if (existsSync(densityPath)) {
    const density = readCsv(densityPath);
    requireColumns(density, ["cell", "estimator", "n", "two_j", "v_tau_true", "x", "density"], densityPath);
    emit("density.svg", densityChart(density));
  }
  const welfarePath = join(resultsDir, "welfare.csv");
  if (existsSync(welfarePath)) {
    const welfare = readCsv(welfarePath);
    requireColumns(welfare, ["label", "ate", "sqrt_vcate", "bound_simple", "bound_general"], welfarePath);
    emit("welfare_table.svg", welfareTable(welfare));
  }
  return written;
}
