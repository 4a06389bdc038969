import { describe, expect, it } from 'vitest';

import { BindingsError } from '../src/errors.js';
import { parseNumericCsv, tableFromColumns, tableRows, tableToCsv } from '../src/table.js';

describe('tableFromColumns', () => {
  it('keeps insertion order and row count', () => {
    const t = tableFromColumns({ b: [1, 2], a: [3, 4] });
    expect(t.names).toEqual(['b', 'a']);
    expect(tableRows(t)).toEqual([[1, 3], [2, 4]]);
  });

  it('rejects ragged columns', () => {
    expect(() => tableFromColumns({ a: [1], b: [1, 2] })).toThrow(BindingsError);
  });

  it('rejects non-finite values', () => {
    expect(() => tableFromColumns({ a: [1, NaN] })).toThrow(/non-finite/);
    expect(() => tableFromColumns({ a: [Infinity] })).toThrow(/non-finite/);
  });

  it('rejects empty tables', () => {
    expect(() => tableFromColumns({})).toThrow(BindingsError);
    expect(() => tableFromColumns({ a: [] })).toThrow(/at least one row/);
  });
});

describe('csv round trip', () => {
  it('recovers bit-identical doubles through the text format', () => {
    const awkward = [0.1 + 0.2, 1 / 3, Number.MIN_VALUE, -1.2345678901234567e-200, 1e21];
    const t = tableFromColumns({ v: awkward });
    const parsed = parseNumericCsv(tableToCsv(t));
    expect(parsed.header).toEqual(['v']);
    parsed.rows.forEach((row, i) => {
      expect(Object.is(row[0], awkward[i])).toBe(true);
    });
  });

  it('flags malformed rows', () => {
    expect(() => parseNumericCsv('a,b\n1.0\n')).toThrow(/malformed/);
    expect(() => parseNumericCsv('a\nnot-a-number\n')).toThrow(/malformed/);
  });
});
