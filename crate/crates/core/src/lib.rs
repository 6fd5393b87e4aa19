//! Functional and performance simulation of content-addressable-memory (CAM)
//! search accelerators.
//!
//! Data is quantized, partitioned onto fixed-size subarrays, searched per
//! subarray with optional device variation, and the partial results merged
//! back into application-level matches. A separate cost rollup estimates
//! latency, energy and area over the bank/mat/array/subarray hierarchy.

pub mod cli;
pub mod config;
pub mod engine;
pub mod mapping;
pub mod merge;
pub mod oracle;
pub mod perf;
pub mod quantization;
pub mod subarray_search;
pub mod variation;
