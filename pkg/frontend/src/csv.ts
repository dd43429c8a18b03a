/**
 * Strict readers for the run-artifact CSV contract.
 *
 * The producing side writes plain comma-separated values with no quoting,
 * one fixed header per file kind. Readers validate the header column by
 * column (a missing column is reported by name) and surface empty cells as
 * null (statistically undefined entries, e.g. a constant-baseline segment).
 */

import { readFileSync } from "fs";

export class CsvError extends Error {
  constructor(message: string, readonly kind: "header" | "empty") {
    super(message);
  }
}

export interface Table {
  /** column name -> values (null for empty cells) */
  columns: Map<string, (number | string | null)[]>;
  rowCount: number;
}

export function parseCsv(text: string, path: string, requiredColumns: string[]): Table {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new CsvError(`${path}: empty file`, "header");
  }
  const header = lines[0].split(",").map((cell) => cell.trim());
  for (const column of requiredColumns) {
    if (!header.includes(column)) {
      throw new CsvError(`${path}: missing column "${column}" (found: ${header.join(", ")})`, "header");
    }
  }
  const rows = lines.slice(1);
  if (rows.length === 0) {
    throw new CsvError(`${path}: no data rows`, "empty");
  }
  const columns = new Map<string, (number | string | null)[]>(header.map((name) => [name, []]));
  for (const row of rows) {
    const cells = row.split(",");
    header.forEach((name, i) => {
      const raw = (cells[i] ?? "").trim();
      if (raw === "") {
        columns.get(name)!.push(null);
      } else {
        const value = Number(raw);
        columns.get(name)!.push(Number.isNaN(value) ? raw : value);
      }
    });
  }
  return { columns, rowCount: rows.length };
}

export function readCsv(path: string, requiredColumns: string[]): Table {
  return parseCsv(readFileSync(path, "utf-8"), path, requiredColumns);
}

export function numbers(table: Table, column: string): (number | null)[] {
  return (table.columns.get(column) ?? []).map((v) => (typeof v === "number" ? v : null));
}

export function strings(table: Table, column: string): string[] {
  return (table.columns.get(column) ?? []).map((v) => String(v));
}
