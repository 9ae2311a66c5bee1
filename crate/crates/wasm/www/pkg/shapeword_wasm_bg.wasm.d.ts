/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_discretizer_free: (a: number, b: number) => void;
export const discretizer_centroids: (a: number) => [number, number];
export const discretizer_new: (a: number, b: number, c: number) => [number, number, number];
export const discretizer_scale: (a: number) => number;
export const discretizer_tokens: (a: number, b: number, c: number) => [number, number, number, number];
export const distanceProfile: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const synthSeries: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
