/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demosample_free: (a: number, b: number) => void;
export const demosample_channel: (a: number, b: number) => [number, number];
export const demosample_channels: (a: number) => number;
export const demosample_drift: (a: number, b: number, c: number) => [number, number, number];
export const demosample_lag_histogram: (a: number, b: number) => [number, number, number, number];
export const demosample_lags: (a: number) => [number, number];
export const demosample_latents: (a: number) => number;
export const demosample_length: (a: number) => number;
export const demosample_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const demosample_regimes: (a: number) => [number, number];
export const demosample_rolling_pair: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const demosample_weight: (a: number, b: number, c: number) => [number, number];
export const p_mix_curve: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
