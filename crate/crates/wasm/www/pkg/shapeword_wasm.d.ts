/* tslint:disable */
/* eslint-disable */

export class Discretizer {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * All centroids concatenated in token order.
     */
    centroids(): Float64Array;
    constructor(scale: number, words: number, seed: number);
    scale(): number;
    tokens(series: Float64Array): Uint32Array;
}

export function distanceProfile(query: Float64Array, series: Float64Array): Float64Array;

export function synthSeries(_class: number, length: number, motif: number, sigma: number, seed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_discretizer_free: (a: number, b: number) => void;
    readonly discretizer_centroids: (a: number) => [number, number];
    readonly discretizer_new: (a: number, b: number, c: number) => [number, number, number];
    readonly discretizer_scale: (a: number) => number;
    readonly discretizer_tokens: (a: number, b: number, c: number) => [number, number, number, number];
    readonly distanceProfile: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly synthSeries: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
