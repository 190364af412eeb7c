//! Block-level cost modeling, CSP rewriting and compound scaling for CNN
//! detectors.
//!
//! The crate is organised bottom-up:
//!
//! - [`ir`]: the architecture representation, its file format and the
//!   unrolling of blocks into convolutions.
//! - [`oracle`]: brute-force counting over unrolled convolutions.
//! - [`cost`]: closed-form cost formulas and a whole-network analyzer.
//! - [`rewrite`]: CSP-ization, PCB partition planning, reversion, pruning.
//! - [`scale`]: receptive field, tiny-model checks, compound scaling.
//! - [`presets`]: built-in networks.

pub mod cost;
pub mod ir;
pub mod oracle;
pub mod presets;
pub mod rewrite;
pub mod scale;

pub use cost::{analyze, CostReport, StageCost};
pub use ir::{
    expand, parse_spec, serialize_spec, BlockKind, BlockSpec, ConvPrimitive, ExpandError,
    NetworkSpec, ParseError, Role, ScalingFactors, SpecError, Stage, TensorShape,
};
pub use oracle::oracle_cost;
pub use presets::{preset, Preset, PresetError, PRESET_NAMES};
pub use rewrite::{
    cspize, plan_pcb_partition, prune_heads, revert_first_stage, PartitionPlan, RewriteError,
    RewriteReport, Scope,
};
pub use scale::{
    check_tiny_principles, compound_scale_up, derive_tiny_growth, receptive_field, Budget,
    ScaleError, ScalePlan, TinyReport,
};
