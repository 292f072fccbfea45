//! Trajectory-based estimation of committors, reactive probability currents
//! and current streamlines on grid and Voronoi tessellations, with
//! finite-difference reference solutions and error analysis.

pub mod analysis;
pub mod committor;
pub mod dynamics;
pub mod error;
pub mod flux;
pub mod io;
pub mod reference;
pub mod regions;
pub mod streamlines;
pub mod tessellation;

pub use analysis::{
    cell_potential, direction_error, direction_scaling, error_report, histogram, l2_mu_error,
    l2_mu_error_nodal, loglog_slope, metastable_node_mask, DirectionScalingReport, ErrorReport,
    Histogram, MaskProbe, PowerFit,
};
pub use committor::{
    estimate_committor, project_committor, CommittorField, CommittorOptions, HittingRule,
};
pub use dynamics::{
    em_step, run_until, triple_well, BoxDomain, DiffusionModel, DoubleWell1d, FreeDiffusion,
    HitRecord, Potential, StreamKey, TrajectoryStepper, TripleWell,
};
pub use error::{Error, Result};
pub use flux::{
    alpha_hat, count_crossings, evaluate_current, project_labels, reactive_segments,
    reconstruct_current, sample_reactive_ledgers, solve_cell, CrossingLedger, CurrentField,
    LabelPath, ReactiveCounter, ReactiveSegments, SamplerOptions,
};
pub use reference::{
    fd_convergence_check, partition_function, reference_current, restrict, solve_committor_fd,
    ConvergenceReport, ConvergenceRow, FdCommittor, FdGrid, GridScalarField, GridVectorField,
    NodeClass, ReferenceCurrent,
};
pub use regions::Regions;
pub use streamlines::{
    boundary_starts, bundle, integrate, max_deviation, FieldSource, Streamline, StreamlineOptions,
    StreamlineStatus,
};
pub use tessellation::{
    assign_metastable, build_grid, build_voronoi2d, cell_conditioning, conditioning, mu_weights,
    representation_mismatch, CellConditioning, CellWeights, ConditioningReport, Facet, GridSpec,
    MetastableIndexSets, Tessellation, TessellationKind,
};
