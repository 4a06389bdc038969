/** Callback-based explanation entry point.
 *
 * Marshals the tables and configuration to the engine CLI, hosts the
 * prediction callback behind the subprocess bridge, and wraps the written
 * artifacts in an immutable handle.
 */

import { spawn } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { fileURLToPath } from 'node:url';

import { BridgeServer, type PredictCallback } from './bridge-server.js';
import { BindingsError, CallbackError, EngineError } from './errors.js';
import { parseNumericCsv, tableRowCount, tableRows, tableToCsv, type Table } from './table.js';

const BRIDGE_SCRIPT = fileURLToPath(new URL('./bridge.cjs', import.meta.url));

/** A serializable model understood by the engine directly (no callback). */
export interface LinearModel {
  kind: 'linear';
  intercept: number;
  coefficients: Record<string, number>;
}

export type Model = PredictCallback | LinearModel | { modelPath: string };

export interface ExplainOptions {
  approach?: string;
  seed?: number;
  phi0?: number;
  nMcSamples?: number;
  maxNCoalitions?: number;
  iterative?: boolean;
  nBoot?: number;
  approachOptions?: Record<string, unknown>;
  /** Callbacks always receive batches; 'single-row' is refused. */
  callbackMode?: 'batch' | 'single-row';
  /** Engine executable, overridable for testing. */
  cliCommand?: string[];
  /** Keep the artifact directory at this path instead of a deleted temp dir. */
  artifactDir?: string;
}

export interface MsevSummary {
  score: number;
  sd: number;
}

export interface ConvergenceStep {
  iteration: number;
  n_coalitions: number;
  criterion: number;
  converged: boolean;
  exhaustive: boolean;
}

/** Immutable view over one completed explanation. */
export class ExplainHandle {
  constructor(
    private readonly names: string[],
    private readonly phiTable: number[][],
    private readonly sdTable: number[][],
    private readonly predictions: number[],
    private readonly explainData: number[][],
    private readonly msevSummary: MsevSummary,
    private readonly convergenceTrace: ConvergenceStep[],
  ) {
    Object.freeze(this);
  }

  /** Feature names, in the x_explain column order. */
  featureNames(): string[] {
    return [...this.names];
  }

  /** Attribution matrix (nExplain x (M+1)); column 0 is the baseline. */
  phi(): number[][] {
    return this.phiTable.map((row) => [...row]);
  }

  /** Sampling standard deviations, same layout as phi(). */
  phiSd(): number[][] {
    return this.sdTable.map((row) => [...row]);
  }

  /** Baseline attribution (phi_0). */
  baseValue(): number {
    return this.phiTable[0]![0]!;
  }

  predExplain(): number[] {
    return [...this.predictions];
  }

  msev(): MsevSummary {
    return { ...this.msevSummary };
  }

  trace(): ConvergenceStep[] {
    return this.convergenceTrace.map((step) => ({ ...step }));
  }

  nExplain(): number {
    return this.phiTable.length;
  }

  /** Rows of x_explain as parsed back from the engine artifacts. */
  data(): number[][] {
    return this.explainData.map((row) => [...row]);
  }
}

export interface AttributionBundle {
  /** (nExplain x M) per-feature attributions, columns in x_explain order. */
  values: number[][];
  /** Shared baseline attribution phi_0. */
  baseValue: number;
  /** The explained rows, aligned with values. */
  data: number[][];
  featureNames: string[];
}

/** Plain-table layout consumable by common attribution-plot tooling. */
export function toAttributionBundle(handle: ExplainHandle): AttributionBundle {
  return {
    values: handle.phi().map((row) => row.slice(1)),
    baseValue: handle.baseValue(),
    data: handle.data(),
    featureNames: handle.featureNames(),
  };
}

export async function explain(
  model: Model,
  xTrain: Table,
  xExplain: Table,
  options: ExplainOptions = {},
): Promise<ExplainHandle> {
  if (options.callbackMode === 'single-row') {
    throw new BindingsError(
      'single-row callbacks are refused: prediction callbacks are invoked in batches',
    );
  }
  if (xTrain.names.join(',') !== xExplain.names.join(',')) {
    throw new BindingsError(
      `training and explicand tables disagree on columns: ` +
      `${xTrain.names.join(',')} vs ${xExplain.names.join(',')}`,
    );
  }

  const workDir = options.artifactDir ?? mkdtempSync(join(tmpdir(), 'condshap-'));
  const outDir = join(workDir, 'out');
  const server = typeof model === 'function' ? new BridgeServer(model) : null;
  try {
    writeFileSync(join(workDir, 'x_train.csv'), tableToCsv(xTrain));
    writeFileSync(join(workDir, 'x_explain.csv'), tableToCsv(xExplain));

    const config: Record<string, unknown> = {
      train: join(workDir, 'x_train.csv'),
      explain: join(workDir, 'x_explain.csv'),
      approach: options.approach ?? 'gaussian',
    };
    if (options.seed !== undefined) config['seed'] = options.seed;
    if (options.phi0 !== undefined) config['phi0'] = options.phi0;
    if (options.nMcSamples !== undefined) config['n_mc_samples'] = options.nMcSamples;
    if (options.maxNCoalitions !== undefined) config['max_n_coalitions'] = options.maxNCoalitions;
    if (options.iterative !== undefined) config['iterative'] = options.iterative;
    if (options.nBoot !== undefined) config['n_boot'] = options.nBoot;
    if (options.approachOptions !== undefined) config['approach_options'] = options.approachOptions;

    if (server) {
      const socketPath = join(workDir, 'bridge.sock');
      await server.listen(socketPath);
      config['model_cmd'] = [process.execPath, BRIDGE_SCRIPT, socketPath];
    } else if ('modelPath' in (model as object)) {
      config['model'] = (model as { modelPath: string }).modelPath;
    } else {
      const modelPath = join(workDir, 'model.json');
      writeFileSync(modelPath, JSON.stringify(model));
      config['model'] = modelPath;
    }

    // JSON is a YAML subset, so the engine reads this config file directly.
    const configPath = join(workDir, 'config.json');
    writeFileSync(configPath, JSON.stringify(config, null, 2));

    const cli = options.cliCommand ?? ['condshap'];
    const result = await runEngine(cli, ['explain', '--config', configPath, '--output-dir', outDir]);
    if (server?.callbackError) {
      throw new CallbackError(server.callbackError.message);
    }
    if (result.code !== 0) {
      throw new EngineError(
        `engine exited with code ${result.code}: ${result.stderr.trim()}`,
        result.code,
        result.stderr,
      );
    }
    return readHandle(outDir, tableRowCount(xExplain), xExplain);
  } finally {
    if (server) await server.close();
    if (!options.artifactDir) rmSync(workDir, { recursive: true, force: true });
  }
}

function runEngine(
  cli: string[],
  args: string[],
): Promise<{ code: number | null; stderr: string }> {
  return new Promise((resolve, reject) => {
    const child = spawn(cli[0]!, [...cli.slice(1), ...args], {
      stdio: ['ignore', 'ignore', 'pipe'],
    });
    let stderr = '';
    child.stderr.setEncoding('utf8');
    child.stderr.on('data', (chunk) => { stderr += chunk; });
    child.on('error', (err) => reject(new EngineError(`cannot spawn engine: ${err.message}`, null, '')));
    child.on('close', (code) => resolve({ code, stderr }));
  });
}

function readHandle(outDir: string, nExplain: number, xExplain: Table): ExplainHandle {
  const est = parseNumericCsv(readFileSync(join(outDir, 'shapley_values_est.csv'), 'utf8'));
  const sd = parseNumericCsv(readFileSync(join(outDir, 'shapley_values_sd.csv'), 'utf8'));
  const pred = parseNumericCsv(readFileSync(join(outDir, 'pred_explain.csv'), 'utf8'));
  const msev = JSON.parse(readFileSync(join(outDir, 'msev.json'), 'utf8')) as {
    MSEv: number; MSEv_sd: number;
  };
  const trace = JSON.parse(
    readFileSync(join(outDir, 'convergence_trace.json'), 'utf8'),
  ) as ConvergenceStep[];
  if (est.rows.length !== nExplain) {
    throw new BindingsError(
      `engine wrote ${est.rows.length} attribution rows for ${nExplain} explicands`,
    );
  }
  return new ExplainHandle(
    est.header.slice(1),
    est.rows,
    sd.rows,
    pred.rows.map((row) => row[0]!),
    tableRows(xExplain),
    { score: msev.MSEv, sd: msev.MSEv_sd },
    trace,
  );
}
