/* tslint:disable */
/* eslint-disable */

/**
 * Consistency error per iteration, relative to the random-phase start, for
 * a two-tone test signal.
 */
export function glaConvergence(tone_a_hz: number, tone_b_hz: number, iterations: number, momentum: number): Float64Array;

/**
 * Gain in dB of the action low-pass at `points` frequencies from 0 to
 * `max_hz`.
 */
export function lowpassResponse(max_hz: number, points: number): Float64Array;

/**
 * Names of the demo materials, in index order.
 */
export function materialNames(): string[];

/**
 * 101 magnitudes (0..1000 Hz in 10 Hz steps) of the chosen material's
 * vibration at constant force (N) and speed (mm/s).
 */
export function textureSpectrum(material: number, force: number, speed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly glaConvergence: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly lowpassResponse: (a: number, b: number) => [number, number];
    readonly materialNames: () => [number, number];
    readonly textureSpectrum: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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
