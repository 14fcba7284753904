/** CSV loading and schema validation for the simulation result tables. */

import { readFileSync } from "fs";
import Papa from "papaparse";

export type Row = Record<string, string>;

export class MissingColumnsError extends Error {
  constructor(file: string, missing: string[]) {
    super(`${file} is missing required columns: ${missing.join(", ")}`);
    this.name = "MissingColumnsError";
  }
}

export function readCsv(path: string): Row[] {
  const text = readFileSync(path, "utf8");
  const parsed = Papa.parse<Row>(text.trim(), { header: true, skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new Error(`${path}: CSV parse error at row ${first.row}: ${first.message}`);
  }
  return parsed.data;
}

/** Throws with the exact list of missing column names. */
export function requireColumns(rows: Row[], columns: string[], file: string): void {
  const present = new Set(rows.length > 0 ? Object.keys(rows[0]) : []);
  const missing = columns.filter((c) => !present.has(c));
  if (missing.length > 0) {
    throw new MissingColumnsError(file, missing);
  }
}

export function num(row: Row, column: string): number {
  const raw = row[column];
  if (raw === undefined || raw === "") return NaN;
  return Number(raw);
}
