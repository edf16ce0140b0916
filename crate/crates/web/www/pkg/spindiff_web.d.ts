/* tslint:disable */
/* eslint-disable */

/**
 * Particle trace sampled every `step_h` hours. Returns `[t_h..., signal...]`.
 */
export function particle_trace(buildup: boolean, radius: number, shell: number, d: number, t1_in: number, t1_out: number, hours: number, step_h: number): Float64Array;

/**
 * `[k_W, k_R]` in h⁻¹.
 */
export function rate_constants(p0: number, tau_h: number, asymptote: number): Float64Array;

/**
 * Reference (u, m) for the ZQ width and D/p0 laws: `[u_zq, m_zq, u_d, m_d]`.
 */
export function reference_exponents(structure_name: string): Float64Array;

/**
 * ZQ line width in Hz from the reference power law at each abundance (percent).
 */
export function zq_width_curve(structure_name: string, gamma: number, a: number, abundances: Float64Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly particle_trace: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly rate_constants: (a: number, b: number, c: number) => [number, number, number, number];
    readonly reference_exponents: (a: number, b: number) => [number, number, number, number];
    readonly zq_width_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
