//! Associative memory built from a "cue ball" of trigger neurons and a
//! one-layer "recall net".
//!
//! Each stored pattern gets a dedicated cue neuron with two weight rows:
//! `w` (cue → recall net) holds the pattern itself after one gradient step,
//! and `v` (recall net → cue) is tuned in one step so the cue's response to
//! its own pattern lands exactly on the teacher signal. Because every cue
//! neuron is independent, patterns can be added at any time without
//! disturbing earlier memories, and a firing threshold on the response
//! turns the store into a content-addressable memory: lowering the
//! threshold surfaces similar patterns alongside exact matches.
//!
//! The crate is organized around the pipeline:
//!
//! - [`idx`]: IDX image ingestion, pattern normalization, probe construction
//! - [`memory`]: the dual weight structure, learning, response and recall
//! - [`metrics`]: Hamming / shading fidelity and memory-rate evaluation
//! - [`store`]: bit-exact binary persistence with incremental append
//!
//! All numeric kernels are generic over [`Real`] (`f64` by default, `f32`
//! for reproducing single-precision published runs).

pub mod idx;
pub mod memory;
pub mod metrics;
pub mod precision;
pub mod store;

pub use idx::{binarize, binarize_above, normalize, parse_idx, partial_probe};
pub use idx::{HalfRegion, Pattern, RawImageSet};
pub use memory::{
    closed_form_response, Candidate, CueRecord, Hyperparams, LearnReport, MemoryStore, RecallEntry,
    RecallResult, Spectrum,
};
pub use metrics::{
    evaluate, hamming_distance, memory_rate, quantize_to_u8, shading_distance, spectrum_summary,
    EvalReport, ShadingMetric, SpectrumSummary,
};
pub use precision::{Precision, Real};
pub use store::{append_learned, load, read_meta, save, StoreMeta};

pub use idx::IngestError;
pub use memory::MemoryError;
pub use metrics::MetricsError;
pub use store::StoreError;
