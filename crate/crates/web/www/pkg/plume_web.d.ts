/* tslint:disable */
/* eslint-disable */

/**
 * Particle system stepped from the page.
 */
export class Plume {
    free(): void;
    [Symbol.dispose](): void;
    advance(steps: number): void;
    counts(half: number): Float64Array;
    live_total(): bigint;
    constructor(p1: number, p2: number, p3: number, p4: number, seed: bigint);
    step_index(): bigint;
}

export function detect(p1: number, p2: number, p3: number, p4: number, alg2: boolean, r: number, seed: bigint): string;

export function expectedField(p1: number, p2: number, p3: number, p4: number, n: number, half: number): Float64Array;

export function greenField(p1: number, p2: number, p3: number, p4: number, half: number, tol: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_plume_free: (a: number, b: number) => void;
    readonly detect: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
    readonly expectedField: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly greenField: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly plume_advance: (a: number, b: number) => void;
    readonly plume_counts: (a: number, b: number) => [number, number];
    readonly plume_live_total: (a: number) => bigint;
    readonly plume_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly plume_step_index: (a: number) => bigint;
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
