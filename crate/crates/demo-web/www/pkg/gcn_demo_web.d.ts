/* tslint:disable */
/* eslint-disable */

/**
 * IOB tags for `utterance` from a slot label such as `city boston date
 * friday`; `slot_names` is comma-separated. Returns `{tokens, tags}` or
 * `{error}`.
 */
export function align(label: string, utterance: string, slot_names: string): string;

/**
 * Creativity report of newline-separated generated utterances against seed,
 * training and test utterances.
 */
export function creativity_metrics(generated: string, seed: string, train: string, test: string): string;

/**
 * Seed share of every meta-iteration from 0 to `warmup`:
 * `[{i_meta, i_w, n_wb, seed_examples, generated_examples, seed_fraction}]`.
 */
export function curriculum_schedule(warmup: number, learner_iterations: number, batch_size: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly align: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly creativity_metrics: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
    readonly curriculum_schedule: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
