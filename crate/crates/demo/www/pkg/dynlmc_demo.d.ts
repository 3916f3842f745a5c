/* tslint:disable */
/* eslint-disable */

export class DemoSample {
    free(): void;
    [Symbol.dispose](): void;
    channel(i: number): Float32Array;
    channels(): number;
    drift(window: number, stride: number): number;
    /**
     * Counts for lags `-max_lag..=max_lag`.
     */
    lag_histogram(max_lag: number): Uint32Array;
    /**
     * Row-major `channels x latents` delays.
     */
    lags(): Int32Array;
    latents(): number;
    length(): number;
    constructor(channels: number, length: number, rho: number, sigma: number, max_lag: number, states: number, seed: number);
    regimes(): Uint32Array;
    /**
     * Rolling correlation of one channel pair; NaN where undefined.
     */
    rolling_pair(a: number, b: number, window: number, stride: number): Float64Array;
    /**
     * `alpha[i, j, t]` over `t`.
     */
    weight(i: number, j: number): Float32Array;
}

/**
 * `p_mix(i)` for `i = 0..=upto` with schedule length `m`.
 */
export function p_mix_curve(m: number, upto: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demosample_free: (a: number, b: number) => void;
    readonly demosample_channel: (a: number, b: number) => [number, number];
    readonly demosample_channels: (a: number) => number;
    readonly demosample_drift: (a: number, b: number, c: number) => [number, number, number];
    readonly demosample_lag_histogram: (a: number, b: number) => [number, number, number, number];
    readonly demosample_lags: (a: number) => [number, number];
    readonly demosample_latents: (a: number) => number;
    readonly demosample_length: (a: number) => number;
    readonly demosample_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly demosample_regimes: (a: number) => [number, number];
    readonly demosample_rolling_pair: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demosample_weight: (a: number, b: number, c: number) => [number, number];
    readonly p_mix_curve: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
