import { spawn } from 'node:child_process';
import { mkdtempSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { tableFromColumns, tableToCsv, type Table } from '../src/table.js';

/** Deterministic PRNG so fixtures are stable across runs. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function gaussianPair(rand: () => number): [number, number] {
  const u = Math.max(rand(), 1e-12);
  const v = rand();
  const r = Math.sqrt(-2 * Math.log(u));
  return [r * Math.cos(2 * Math.PI * v), r * Math.sin(2 * Math.PI * v)];
}

export interface Fixture {
  xTrain: Table;
  xExplain: Table;
  intercept: number;
  coefficients: Record<string, number>;
}

/** Correlated 3-feature training data plus a linear model. */
export function makeFixture(seed = 42, n = 80): Fixture {
  const rand = mulberry32(seed);
  const cols: Record<string, number[]> = { x1: [], x2: [], x3: [] };
  for (let i = 0; i < n; i++) {
    const [a, b] = gaussianPair(rand);
    const [c] = gaussianPair(rand);
    cols.x1!.push(a);
    cols.x2!.push(0.7 * a + 0.5 * b);
    cols.x3!.push(0.4 * a + 0.6 * c);
  }
  const xTrain = tableFromColumns(cols);
  const xExplain = tableFromColumns({
    x1: cols.x1!.slice(0, 3),
    x2: cols.x2!.slice(0, 3),
    x3: cols.x3!.slice(0, 3),
  });
  return {
    xTrain,
    xExplain,
    intercept: 1.5,
    coefficients: { x1: 2.0, x2: -1.0, x3: 0.5 },
  };
}

/** Batch prediction callback matching the engine's built-in linear model,
 * accumulating in the same order (intercept first, then one coefficient per
 * feature) so the doubles agree bit for bit. */
export function linearCallback(fix: Fixture): (rows: number[][], names: string[]) => number[] {
  return (rows, names) =>
    rows.map((row) => {
      let out = fix.intercept;
      for (const name of Object.keys(fix.coefficients)) {
        out += fix.coefficients[name]! * row[names.indexOf(name)]!;
      }
      return out;
    });
}

export interface CliRun {
  code: number | null;
  stdout: string;
  stderr: string;
  outDir: string;
}

/** Run the engine CLI against the fixture with its built-in linear model. */
export async function runPrimaryCli(
  fix: Fixture,
  settings: Record<string, unknown>,
): Promise<CliRun> {
  const dir = mkdtempSync(join(tmpdir(), 'condshap-cli-'));
  const outDir = join(dir, 'out');
  writeFileSync(join(dir, 'x_train.csv'), tableToCsv(fix.xTrain));
  writeFileSync(join(dir, 'x_explain.csv'), tableToCsv(fix.xExplain));
  writeFileSync(
    join(dir, 'model.json'),
    JSON.stringify({ kind: 'linear', intercept: fix.intercept, coefficients: fix.coefficients }),
  );
  const config = {
    train: join(dir, 'x_train.csv'),
    explain: join(dir, 'x_explain.csv'),
    model: join(dir, 'model.json'),
    ...settings,
  };
  writeFileSync(join(dir, 'config.json'), JSON.stringify(config));
  return new Promise((resolve, reject) => {
    const child = spawn('condshap', ['explain', '--config', join(dir, 'config.json'),
      '--output-dir', outDir]);
    let stdout = '';
    let stderr = '';
    child.stdout.setEncoding('utf8');
    child.stderr.setEncoding('utf8');
    child.stdout.on('data', (c) => { stdout += c; });
    child.stderr.on('data', (c) => { stderr += c; });
    child.on('error', reject);
    child.on('close', (code) => resolve({ code, stdout, stderr, outDir }));
  });
}
