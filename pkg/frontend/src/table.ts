/** Column-major numeric tables and their CSV serialization.
 *
 * Numbers are written with JavaScript's shortest round-trip decimal
 * formatting, so a reader parsing them back recovers bit-identical doubles.
 */

import { BindingsError } from './errors.js';

export interface Table {
  readonly names: string[];
  readonly columns: Float64Array[];
}

/** Build a table from named columns; insertion order fixes the column order. */
export function tableFromColumns(columns: Record<string, ArrayLike<number>>): Table {
  const names = Object.keys(columns);
  if (names.length === 0) {
    throw new BindingsError('a table needs at least one column');
  }
  const arrays = names.map((name) => Float64Array.from(columns[name]!));
  const length = arrays[0]!.length;
  for (let j = 0; j < arrays.length; j++) {
    if (arrays[j]!.length !== length) {
      throw new BindingsError(
        `column ${names[j]!} has ${arrays[j]!.length} rows, expected ${length}`,
      );
    }
    for (let i = 0; i < length; i++) {
      if (!Number.isFinite(arrays[j]![i]!)) {
        throw new BindingsError(`column ${names[j]!} has a non-finite value at row ${i}`);
      }
    }
  }
  if (length === 0) {
    throw new BindingsError('a table needs at least one row');
  }
  return { names, columns: arrays };
}

export function tableRowCount(table: Table): number {
  return table.columns[0]!.length;
}

/** Row-major view of the table. */
export function tableRows(table: Table): number[][] {
  const n = tableRowCount(table);
  const rows: number[][] = [];
  for (let i = 0; i < n; i++) {
    rows.push(table.columns.map((col) => col[i]!));
  }
  return rows;
}

export function tableToCsv(table: Table): string {
  const lines = [table.names.join(',')];
  for (const row of tableRows(table)) {
    lines.push(row.map((v) => String(v)).join(','));
  }
  return lines.join('\n') + '\n';
}

/** Parse a CSV of floats produced by the engine (no quoting, header row). */
export function parseNumericCsv(text: string): { header: string[]; rows: number[][] } {
  const lines = text
    .split('\n')
    .map((ln) => (ln.endsWith('\r') ? ln.slice(0, -1) : ln))
    .filter((ln) => ln.length > 0);
  if (lines.length === 0) {
    throw new BindingsError('empty CSV');
  }
  const header = lines[0]!.split(',');
  const rows = lines.slice(1).map((ln, i) => {
    const cells = ln.split(',').map(Number);
    if (cells.length !== header.length || cells.some((v) => Number.isNaN(v))) {
      throw new BindingsError(`malformed CSV row ${i + 1}: ${ln}`);
    }
    return cells;
  });
  return { header, rows };
}
