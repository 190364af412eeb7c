//! Architecture-to-architecture transforms.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{analyze, reduction, CostReport};
use crate::ir::{BlockKind, ExpandError, NetworkSpec, Role, SpecError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("first stage not CSP")]
    FirstStageNotCsp,
    #[error("network has no block stage in its backbone")]
    NoBackboneBlock,
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("non-contiguous removal: {requested} does not form the top of the pyramid (top is P{top})")]
    NonContiguous { requested: String, top: usize },
    #[error("removal would leave no detection level")]
    NothingLeft,
    #[error("stage {stage} consumes removed stage {source_name}")]
    Dangling { stage: String, source_name: String },
    #[error("rewritten network is invalid: {0}")]
    Invalid(#[from] SpecError),
    #[error(transparent)]
    Expand(ExpandError),
}

impl From<ExpandError> for RewriteError {
    fn from(e: ExpandError) -> Self {
        match e {
            ExpandError::Spec(s) => RewriteError::Invalid(s),
            other => RewriteError::Expand(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Backbone,
    Neck,
    All,
}

impl Scope {
    pub fn covers(self, role: Role) -> bool {
        match self {
            Scope::Backbone => role == Role::Backbone,
            Scope::Neck => role.is_neck(),
            Scope::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteReport {
    pub before: CostReport,
    pub after: CostReport,
    /// `1 - after/before` on FLOPs.
    pub flops_delta: f64,
    /// `1 - after/before` on parameters.
    pub params_delta: f64,
    pub transform_log: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RewriteReport {
    fn new(before: CostReport, after: CostReport, log: Vec<String>, warnings: Vec<String>) -> Self {
        Self {
            flops_delta: reduction(before.flops, after.flops),
            params_delta: reduction(before.params, after.params),
            before,
            after,
            transform_log: log,
            warnings,
        }
    }
}

/// Replaces every stage in `scope` that has a CSP counterpart. Repeats, base
/// channels and shortcut settings are kept.
pub fn cspize(spec: &NetworkSpec, scope: Scope) -> Result<(NetworkSpec, RewriteReport), RewriteError> {
    let before = analyze(spec)?;
    let mut out = spec.clone();
    let mut log = Vec::new();
    let mut warnings = Vec::new();

    for (i, stage) in out.stages.iter_mut().enumerate() {
        if !scope.covers(stage.role) {
            continue;
        }
        let kind = stage.block.kind;
        let Some(target) = kind.csp_counterpart() else {
            continue;
        };
        let label = stage.label(i);
        if target == BlockKind::CspOsa {
            let g = stage.block.growth.unwrap_or(0);
            if g >= stage.block.base_channels {
                warnings.push(format!(
                    "{label}: OSA with g={g} >= b={} has no CspOSA form, left unchanged",
                    stage.block.base_channels
                ));
                continue;
            }
        }
        stage.block.kind = target;
        log.push(format!("{label}: {kind} -> {target}"));
    }

    if log.is_empty() {
        warnings.push("no rewritable stage in scope".to_string());
    }
    let after = analyze(&out)?;
    Ok((out, RewriteReport::new(before, after, log, warnings)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub total_channels: u32,
    pub split_point: u32,
    pub bandwidth: u32,
    pub rounded_split: u32,
}

impl PartitionPlan {
    /// True when `width` lies between the even split and its rounded value.
    pub fn accepts(&self, width: u32) -> bool {
        (self.split_point..=self.rounded_split).contains(&width)
    }
}

/// Active-path width of a PCB block, rounded up to a multiple of the memory
/// bandwidth `tau` and clamped to the total width.
pub fn plan_pcb_partition(b: u32, k: u32, g: u32, tau: u32) -> PartitionPlan {
    let tau = tau.max(1);
    let total = b + k * g;
    let split_point = total.div_ceil(2);
    let rounded = total.div_ceil(2 * tau) * tau;
    PartitionPlan {
        total_channels: total,
        split_point,
        bandwidth: tau,
        rounded_split: rounded.max(split_point).min(total),
    }
}

/// Turns the first backbone block stage back into its plain form.
pub fn revert_first_stage(spec: &NetworkSpec) -> Result<NetworkSpec, RewriteError> {
    let index = spec
        .stages
        .iter()
        .position(|s| s.role == Role::Backbone && s.block.kind.is_block())
        .ok_or(RewriteError::NoBackboneBlock)?;
    let mut out = spec.clone();
    let block = &mut out.stages[index].block;
    let plain = block.kind.plain_counterpart().ok_or(RewriteError::FirstStageNotCsp)?;
    block.kind = plain;
    block.partition_width = None;
    out.validate()?;
    Ok(out)
}

fn level_number(group: &str) -> Option<usize> {
    group.strip_prefix('P')?.parse().ok()
}

/// Removes whole pyramid levels (`"P7"`, `"P6"`, ...) from the top down.
pub fn prune_heads(
    spec: &NetworkSpec,
    remove: &[impl AsRef<str>],
) -> Result<(NetworkSpec, RewriteReport), RewriteError> {
    let headed: BTreeSet<usize> = spec
        .stages
        .iter()
        .filter(|s| s.role == Role::Head)
        .filter_map(|s| s.level_group().and_then(level_number))
        .collect();
    let groups: BTreeSet<&str> = spec.stages.iter().filter_map(|s| s.level_group()).collect();

    let mut levels = BTreeSet::new();
    for name in remove {
        let name = name.as_ref();
        if !groups.contains(name) {
            return Err(RewriteError::UnknownStage(name.to_string()));
        }
        levels.insert(level_number(name).expect("level groups are numbered"));
    }

    let top = headed.iter().next_back().copied().unwrap_or(0);
    let mut expected = top;
    for &level in levels.iter().rev() {
        if level != expected {
            return Err(RewriteError::NonContiguous {
                requested: format!("P{level}"),
                top,
            });
        }
        expected = expected.saturating_sub(1);
    }
    if headed.iter().all(|l| levels.contains(l)) {
        return Err(RewriteError::NothingLeft);
    }

    let removed = |i: usize| {
        spec.stages[i]
            .level_group()
            .and_then(level_number)
            .is_some_and(|l| levels.contains(&l))
    };
    let mut out = spec.clone();
    out.stages.clear();
    let mut log = Vec::new();
    for (i, stage) in spec.stages.iter().enumerate() {
        if removed(i) {
            log.push(format!("removed {}", stage.label(i)));
            continue;
        }
        let dangling = if stage.from.is_empty() {
            (i > 0 && removed(i - 1)).then(|| spec.stages[i - 1].label(i - 1))
        } else {
            stage
                .from
                .iter()
                .find(|src| spec.stage_index(src).is_some_and(removed))
                .cloned()
        };
        if let Some(source_name) = dangling {
            return Err(RewriteError::Dangling {
                stage: stage.label(i),
                source_name,
            });
        }
        out.stages.push(stage.clone());
    }

    let before = analyze(spec)?;
    let after = analyze(&out)?;
    Ok((out, RewriteReport::new(before, after, log, Vec::new())))
}
