/* tslint:disable */
/* eslint-disable */

export class Session {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `[tp, fp, tn, fn]` at `threshold`.
     */
    confusion(threshold: number): Uint32Array;
    epochs(): number;
    /**
     * Smallest and largest held-out error.
     */
    error_range(): Float64Array;
    /**
     * Scores the held-out set and returns the AUC.
     */
    evaluate(): number;
    histogram_svg(threshold: number, bins: number): string;
    /**
     * Synthesizes `n_train` normals for training and `HELD_OUT` normal and
     * anomalous images for evaluation, all from `seed`.
     */
    constructor(size: number, n_train: number, seed: number);
    /**
     * Held-out image `index` of the given class and its reconstruction,
     * side by side as RGBA for a `2·size × size` canvas.
     */
    pair_rgba(index: number, anomalous: boolean): Uint8Array;
    /**
     * Percentile `p` of the training errors.
     */
    percentile_threshold(p: number): number;
    /**
     * ROC points flattened as `fpr0, tpr0, fpr1, tpr1, …`.
     */
    roc_points(): Float64Array;
    /**
     * Runs one epoch and returns its mean training loss.
     */
    train_epoch(): number;
}

export function synth_rgba(size: number, seed: number, anomalous: boolean, index: number): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly session_confusion: (a: number, b: number) => [number, number];
    readonly session_epochs: (a: number) => number;
    readonly session_error_range: (a: number) => [number, number];
    readonly session_evaluate: (a: number) => [number, number, number];
    readonly session_histogram_svg: (a: number, b: number, c: number) => [number, number, number, number];
    readonly session_new: (a: number, b: number, c: number) => [number, number, number];
    readonly session_pair_rgba: (a: number, b: number, c: number) => [number, number, number, number];
    readonly session_percentile_threshold: (a: number, b: number) => [number, number, number];
    readonly session_roc_points: (a: number) => [number, number, number, number];
    readonly session_train_epoch: (a: number) => [number, number, number];
    readonly synth_rgba: (a: number, b: number, c: number, d: number) => [number, number];
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
