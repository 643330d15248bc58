//! Read-only analyses of a model: the representational-collapse probe,
//! per-head attention statistics and OV eigenvalue positivity, training
//! step timing, and attention-map images.

mod bench;
mod collapse;
mod diagnostics;
mod export;

pub use bench::{timing_bench, BenchEntry, BenchReport};
pub use collapse::{
    build_task_pair, collapse_probe, collapse_probe_with, final_representation, linf_distance, ProbeEntry, ProbeReport,
    ProbeTask, Representation,
};
pub use diagnostics::{
    attn_diagnostics, attn_diagnostics_tokens, eigenvalue_positivity, ov_positivity, DiagnosticsReport, HeadDiagnostics,
    HeadStats,
};
pub use export::{attention_ppm, export_attention_maps, weight_to_rgb};
