/* tslint:disable */
/* eslint-disable */

/**
 * Activity plan of one frame as CSV `n,ap1_label,ap2_label,a1,a2`.
 */
export function frame_plan(frame_len: number, ap1_only: boolean): string;

/**
 * Average SE for frame lengths `1..=max_frame_len`, laid out as
 * `[kalman..., direct..., ap1_only...]`.
 */
export function se_curve(max_frame_len: number, snr_ap_db: number, c_nu: number, n_realizations: number, seed: bigint): Float64Array;

/**
 * Wrapped tracking errors per frame: first `n_frames` raw-measurement errors,
 * then `n_frames` Kalman errors.
 */
export function tracking_errors(frame_len: number, snr_ap_db: number, c_nu: number, n_frames: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly frame_plan: (a: number, b: number) => [number, number, number, number];
    readonly se_curve: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly tracking_errors: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
