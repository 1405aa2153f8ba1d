/* tslint:disable */
/* eslint-disable */

/**
 * Agreement table from lines of `type group1 group2 intersection`.
 */
export function agreement_table(text: string): string;

/**
 * Viterbi path, log-partition and marginals for an emission matrix (one row
 * per position) and an optional `(K+2)×(K+2)` transition matrix whose last
 * two rows/columns are START and STOP. With `bio` the nine BIO tags are used
 * and invalid transitions are forbidden.
 */
export function crf_explore(emissions: string, transitions: string, bio: boolean): string;

/**
 * Resource type names in tag order.
 */
export function resource_types(): string;

/**
 * Sentences and tokens of `text`; with `tags` (one per token, whitespace
 * separated, `O` or `<Type>_B`/`<Type>_I`) also the decoded mentions.
 */
export function tokenize_and_decode(text: string, tags: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly agreement_table: (a: number, b: number) => [number, number, number, number];
    readonly crf_explore: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly resource_types: () => [number, number];
    readonly tokenize_and_decode: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
