export { BindingsError, CallbackError, EngineError } from './errors.js';
export {
  parseNumericCsv,
  tableFromColumns,
  tableRowCount,
  tableRows,
  tableToCsv,
  type Table,
} from './table.js';
export { BridgeServer, type PredictCallback } from './bridge-server.js';
export {
  ExplainHandle,
  explain,
  toAttributionBundle,
  type AttributionBundle,
  type ConvergenceStep,
  type ExplainOptions,
  type LinearModel,
  type Model,
  type MsevSummary,
} from './explain.js';
