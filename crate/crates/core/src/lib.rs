//! Deterministic discrete-time simulator of tiered-memory telemetry.
//!
//! A sparse four-level page table records ACCESSED bits for synthetic access
//! streams. Telemetry engines (linear scanning, region sampling, event
//! sampling and page-table-tree profiling) observe those bits, report hot
//! ranges, and are scored against the workload's ground truth. Reports can
//! drive a two-tier placement whose throughput is modeled from access
//! latencies.

pub mod engines;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod pagetable;
pub mod par;
pub mod regions;
pub mod repro;
pub mod tiering;
pub mod units;
pub mod workload;

pub use error::{Error, Result};
