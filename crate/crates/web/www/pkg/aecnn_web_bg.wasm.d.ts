/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_session_free: (a: number, b: number) => void;
export const session_confusion: (a: number, b: number) => [number, number];
export const session_epochs: (a: number) => number;
export const session_error_range: (a: number) => [number, number];
export const session_evaluate: (a: number) => [number, number, number];
export const session_histogram_svg: (a: number, b: number, c: number) => [number, number, number, number];
export const session_new: (a: number, b: number, c: number) => [number, number, number];
export const session_pair_rgba: (a: number, b: number, c: number) => [number, number, number, number];
export const session_percentile_threshold: (a: number, b: number) => [number, number, number];
export const session_roc_points: (a: number) => [number, number, number, number];
export const session_train_epoch: (a: number) => [number, number, number];
export const synth_rgba: (a: number, b: number, c: number, d: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
