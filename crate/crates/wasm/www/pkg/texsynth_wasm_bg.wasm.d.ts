/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const glaConvergence: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const lowpassResponse: (a: number, b: number) => [number, number];
export const materialNames: () => [number, number];
export const textureSpectrum: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
