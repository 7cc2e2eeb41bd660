/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_plume_free: (a: number, b: number) => void;
export const detect: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
export const expectedField: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const greenField: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const plume_advance: (a: number, b: number) => void;
export const plume_counts: (a: number, b: number) => [number, number];
export const plume_live_total: (a: number) => bigint;
export const plume_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const plume_step_index: (a: number) => bigint;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
