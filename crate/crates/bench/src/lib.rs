// SPDX-License-Identifier: MIT OR Apache-2.0

//! Criterion benchmarks for the engine, tokenizers and metrics live under `benches/`.
