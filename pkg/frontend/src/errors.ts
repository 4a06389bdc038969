/** Errors raised by the bindings layer. */

export class BindingsError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'BindingsError';
  }
}

/** A prediction callback threw; carries the callback's original message. */
export class CallbackError extends BindingsError {
  constructor(message: string) {
    super(message);
    this.name = 'CallbackError';
  }
}

/** The engine process failed for a reason other than a callback exception. */
export class EngineError extends BindingsError {
  readonly exitCode: number | null;
  readonly stderr: string;

  constructor(message: string, exitCode: number | null, stderr: string) {
    super(message);
    this.name = 'EngineError';
    this.exitCode = exitCode;
    this.stderr = stderr;
  }
}
