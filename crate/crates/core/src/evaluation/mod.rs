//! Frozen-feature protocols: linear probe, nearest-neighbour retrieval and
//! distance-correlation diagnostics.

mod dcor;
mod probe;
mod report;
mod representations;
mod retrieval;

pub use dcor::distance_correlation;
pub use probe::{linear_probe, linear_probe_with, stratified_subsample, ProbeConfig};
pub use report::{modality_contribution, ContributionReport, EvaluationReport};
pub use representations::{extract_representations, flatten_modality, RepresentationSet, EXTRACT_BATCH};
pub use retrieval::{knn_retrieve, nearest_neighbours};
