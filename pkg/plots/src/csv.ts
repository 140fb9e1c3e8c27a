/**
 * Reader for the CSV files the riskql CLI writes.
 *
 * Every file starts with a comment line of the form
 * `# riskql-csv <schema> v1`, followed by an RFC-4180 header row and data
 * rows.  The schema token travels with the table so figure builders can
 * reject the wrong kind of file by name instead of by guesswork.
 */

import * as fs from "node:fs";

import Papa from "papaparse";

export type Cell = number | string;

export interface Table {
  /** Schema token from the leading comment, e.g. "training-log". */
  schema: string;
  /** Column names in file order. */
  columns: string[];
  rows: Record<string, Cell>[];
  /** Path the table was read from; used in error messages. */
  source: string;
}

export class SchemaError extends Error {}

const HEADER_RE = /^# riskql-csv (\S+) v(\d+)$/;

export function readTable(path: string): Table {
  const text = fs.readFileSync(path, "utf-8");
  const firstBreak = text.indexOf("\n");
  const firstLine = (firstBreak < 0 ? text : text.slice(0, firstBreak)).replace(/\r$/, "");
  const match = HEADER_RE.exec(firstLine);
  if (!match) {
    throw new SchemaError(`${path}: missing '# riskql-csv <schema> v1' header line`);
  }
  if (match[2] !== "1") {
    throw new SchemaError(`${path}: unsupported schema version v${match[2]}`);
  }

  const body = firstBreak < 0 ? "" : text.slice(firstBreak + 1);
  const parsed = Papa.parse<Record<string, Cell>>(body, {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0]!;
    throw new SchemaError(`${path}: CSV parse error: ${first.message}`);
  }
  const columns = (parsed.meta.fields ?? []).slice();
  return { schema: match[1]!, columns, rows: parsed.data, source: path };
}

/** Assert the table carries the expected schema token. */
export function requireSchema(table: Table, schema: string): void {
  if (table.schema !== schema) {
    throw new SchemaError(
      `${table.source}: expected schema '${schema}', found '${table.schema}'`,
    );
  }
}

/** Assert the listed columns exist; the error names the first missing one. */
export function requireColumns(table: Table, names: readonly string[]): void {
  for (const name of names) {
    if (!table.columns.includes(name)) {
      throw new SchemaError(
        `${table.source}: missing column '${name}' (have: ${table.columns.join(", ")})`,
      );
    }
  }
}

/** Pull one column as finite numbers, rejecting non-numeric cells. */
export function numericColumn(table: Table, name: string): number[] {
  requireColumns(table, [name]);
  return table.rows.map((row, i) => {
    const v = row[name];
    if (typeof v !== "number" || !Number.isFinite(v)) {
      throw new SchemaError(
        `${table.source}: column '${name}' row ${i + 1}: expected a finite number, got ${JSON.stringify(v)}`,
      );
    }
    return v;
  });
}

/** Read a name/value table (the oracle-params schema) into a map. */
export function readReferenceValues(path: string): Map<string, number> {
  const table = readTable(path);
  requireColumns(table, ["name", "value"]);
  const values = numericColumn(table, "value");
  const out = new Map<string, number>();
  table.rows.forEach((row, i) => {
    out.set(String(row.name), values[i]!);
  });
  return out;
}
