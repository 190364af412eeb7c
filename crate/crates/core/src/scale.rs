//! Receptive field, tiny-model design checks and compound scaling.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{analyze, cio_argmin, layer_flops, mac, CioVariant, CostReport};
use crate::ir::{
    expand, BlockKind, ExpandError, NetworkSpec, Part, Role, ScalingFactors, Source, SpecError,
};
use crate::presets::{large_model, round_to_8, schedule_depth, width_grid};
use crate::rewrite::plan_pcb_partition;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaleError {
    #[error("target input {target} is smaller than the base input {base}")]
    TargetTooSmall { target: u32, base: u32 },
    #[error("budget of {budget} FLOPs is infeasible: the cheapest candidate needs {needed}")]
    InfeasibleBudget { budget: u128, needed: u128 },
    #[error("budget must be positive")]
    EmptyBudget,
    #[error("k = {numer}/{denom} is not an integer")]
    NonIntegerDepth { numer: u128, denom: u128 },
    #[error("b = {0} has no integer half")]
    OddWidth(u32),
    #[error("base network is neither a large-model preset nor a backbone-only network")]
    UnsupportedBase,
    #[error(transparent)]
    Expand(#[from] ExpandError),
}

impl From<SpecError> for ScaleError {
    fn from(e: SpecError) -> Self {
        ScaleError::Expand(e.into())
    }
}

/// Receptive field after each stage, walked stage by stage: a `K x K`
/// convolution adds `(K - 1) * jump`, a stride-2 convolution doubles `jump`,
/// an upsample halves it. Concatenations take the widest source.
pub fn receptive_field(spec: &NetworkSpec) -> Result<Vec<u128>, SpecError> {
    let shapes = spec.resolve()?;
    let one = Ratio::<u128>::from_integer(1);
    let mut walk: Vec<(Ratio<u128>, Ratio<u128>)> = Vec::with_capacity(shapes.len());

    for (stage, shape) in spec.stages.iter().zip(&shapes) {
        let mut rf = Ratio::from_integer(0);
        let mut jump = Ratio::from_integer(0);
        for src in &shape.sources {
            let (r, j) = match *src {
                Source::Network => (one, one),
                Source::Stage(i) => walk[i],
            };
            rf = rf.max(r);
            jump = jump.max(j);
        }
        let block = &stage.block;
        let k = block.repeats as u128;
        if block.kind == BlockKind::Upsample {
            jump /= 2;
        }
        if stage.downsample {
            // The stride-2 3x3 opens the stage (for Conv stages it is the
            // first of the repeats).
            rf += jump * 2;
            jump *= 2;
        }
        let convs_3x3 = match block.kind {
            BlockKind::Conv if block.kernel_size() == 3 => k - u128::from(stage.downsample),
            BlockKind::Conv => 0,
            kind if kind.has_shortcut_option() => k,
            _ => 0,
        };
        rf += jump * 2 * convs_3x3;
        walk.push((rf, jump));
    }
    Ok(walk.into_iter().map(|(r, _)| r.ceil().to_integer()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub stage: String,
    pub detail: String,
    /// Extra memory access over the best channel split with the same product.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac_penalty: Option<u128>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleResult {
    pub id: u8,
    pub title: String,
    pub status: Status,
    pub summary: String,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyReport {
    pub tau: u32,
    pub principles: Vec<PrincipleResult>,
}

impl TinyReport {
    pub fn all_pass(&self) -> bool {
        self.principles.iter().all(|p| p.status != Status::Fail)
    }

    pub fn status(&self, id: u8) -> Option<Status> {
        self.principles.iter().find(|p| p.id == id).map(|p| p.status)
    }
}

fn verdict(checked: usize, violations: &[Violation]) -> Status {
    if checked == 0 {
        Status::NotApplicable
    } else if violations.is_empty() {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// Smallest MAC over integer pairs `(c_in, c_out)` with the given product.
fn best_split_mac(h: u32, w: u32, product: u64, kernel_area: u32) -> u128 {
    (1..=product)
        .take_while(|d| d * d <= product)
        .filter(|d| product.is_multiple_of(*d))
        .map(|d| mac(h, w, d as u32, (product / d) as u32, kernel_area))
        .min()
        .unwrap_or(0)
}

/// Evaluates the four tiny-model design principles on `spec`.
pub fn check_tiny_principles(spec: &NetworkSpec, tau: u32) -> Result<TinyReport, ExpandError> {
    let shapes = spec.resolve()?;
    let expanded = expand(spec)?;

    // 1: block cost grows slower than b^2.
    let mut checked = 0;
    let mut v1 = Vec::new();
    for (i, (stage, shape)) in spec.stages.iter().zip(&shapes).enumerate() {
        let block = &stage.block;
        if !block.kind.is_block() {
            continue;
        }
        checked += 1;
        let (w, h) = (shape.block_input.width, shape.block_input.height);
        let at = |b| layer_flops(block.kind, w, h, block.repeats, b, block.growth).unwrap_or(0);
        let base = at(block.base_channels);
        let doubled = at(2 * block.base_channels);
        if base == 0 || doubled >= 4 * base {
            v1.push(Violation {
                stage: stage.label(i),
                detail: format!(
                    "{}: cost ratio at 2b is {:.3} (needs < 4)",
                    block.kind,
                    doubled as f64 / base.max(1) as f64
                ),
                mac_penalty: None,
            });
        }
    }
    let p1 = PrincipleResult {
        id: 1,
        title: "computation grows slower than whkb^2".into(),
        status: verdict(checked, &v1),
        summary: format!("{checked} block stage(s) checked, {} grow quadratically in b", v1.len()),
        violations: v1,
    };

    // 2: balanced PCB partitions.
    let mut checked = 0;
    let mut v2 = Vec::new();
    for (i, stage) in spec.stages.iter().enumerate() {
        let block = &stage.block;
        if block.kind != BlockKind::CspOsaPcb {
            continue;
        }
        checked += 1;
        let plan = plan_pcb_partition(
            block.base_channels,
            block.repeats,
            block.growth.unwrap_or(0),
            tau,
        );
        let width = block.partition_width.unwrap_or(0);
        if !plan.accepts(width) {
            v2.push(Violation {
                stage: stage.label(i),
                detail: format!(
                    "partition {width} of {} outside [{}, {}]",
                    plan.total_channels, plan.split_point, plan.rounded_split
                ),
                mac_penalty: None,
            });
        }
    }
    let p2 = PrincipleResult {
        id: 2,
        title: "feature maps balanced within bandwidth rounding".into(),
        status: verdict(checked, &v2),
        summary: format!("{checked} PCB stage(s) checked at tau={tau}"),
        violations: v2,
    };

    // 3: C_in == C_out on block-body convolutions.
    let mut checked = 0;
    let mut v3 = Vec::new();
    for e in &expanded {
        if matches!(e.part, Part::Downsample | Part::Plain) {
            continue;
        }
        checked += 1;
        let p = &e.conv;
        if p.in_channels != p.out_channels {
            let area = p.kernel * p.kernel;
            let actual = mac(p.height, p.width, p.in_channels, p.out_channels, area);
            let product = p.in_channels as u64 * p.out_channels as u64;
            let best = best_split_mac(p.height, p.width, product, area);
            v3.push(Violation {
                stage: spec.stages[e.stage].label(e.stage),
                detail: format!("{}x{} conv {}->{}", p.kernel, p.kernel, p.in_channels, p.out_channels),
                mac_penalty: Some(actual - best),
            });
        }
    }
    let balanced = checked - v3.len();
    let p3 = PrincipleResult {
        id: 3,
        title: "same number of input and output channels".into(),
        status: verdict(checked, &v3),
        summary: format!("{balanced}/{checked} block convolutions have C_in = C_out"),
        violations: v3,
    };

    // 4: OSA-family stages use the CIO-minimal variant.
    let mut checked = 0;
    let mut v4 = Vec::new();
    for (i, stage) in spec.stages.iter().enumerate() {
        let block = &stage.block;
        let Some(chosen) = CioVariant::of_kind(block.kind) else {
            continue;
        };
        checked += 1;
        let g = block.growth.unwrap_or(0);
        let best = cio_argmin(block.base_channels, g, block.repeats);
        if best != chosen {
            v4.push(Violation {
                stage: stage.label(i),
                detail: format!("{} chosen, {} has lower CIO", chosen.kind(), best.kind()),
                mac_penalty: None,
            });
        }
    }
    let p4 = PrincipleResult {
        id: 4,
        title: "minimal convolutional input/output".into(),
        status: verdict(checked, &v4),
        summary: format!("{checked} OSA-family stage(s) checked"),
        violations: v4,
    };

    Ok(TinyReport {
        tau,
        principles: vec![p1, p2, p3, p4],
    })
}

/// Growth rate `g = b/2` and the layer count `k` that widens a block of
/// `b` channels to `target * b`.
pub fn derive_tiny_growth(b: u32, target: Ratio<u128>) -> Result<(u32, u32), ScaleError> {
    if !b.is_multiple_of(2) {
        return Err(ScaleError::OddWidth(b));
    }
    let g = b / 2;
    let grown = target * b as u128;
    let half = Ratio::from_integer(g as u128);
    if grown <= half {
        return Err(ScaleError::NonIntegerDepth { numer: 0, denom: 1 });
    }
    let k = (grown - half) / g as u128;
    if !k.is_integer() {
        return Err(ScaleError::NonIntegerDepth {
            numer: *k.numer(),
            denom: *k.denom(),
        });
    }
    Ok((g, k.to_integer() as u32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Absolute FLOP ceiling.
    Flops(u128),
    /// Ceiling as a multiple of the base network's FLOPs.
    RatioToBase(f64),
}

impl Budget {
    pub fn limit(&self, base_flops: u128) -> u128 {
        match *self {
            Budget::Flops(f) => f,
            Budget::RatioToBase(r) => (base_flops as f64 * r).floor() as u128,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalePlan {
    pub factors: ScalingFactors,
    /// Repeats of each downsampling backbone stage.
    pub stage_depths: Vec<u32>,
    pub width_multiplier: Ratio<u128>,
    pub resulting_spec: NetworkSpec,
    pub cost: CostReport,
    pub budget: u128,
}

fn ratio_f64(r: Ratio<u128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn depths(spec: &NetworkSpec) -> Vec<u32> {
    spec.stages
        .iter()
        .filter(|s| s.role == Role::Backbone && s.downsample && s.block.kind.is_block())
        .map(|s| s.block.repeats)
        .collect()
}

/// Number of pyramid stages to add for a given input growth: one per
/// doubling of the input area.
pub fn added_stages(base: u32, target: u32) -> i32 {
    let area = (target as f64 / base as f64).powi(2);
    area.log2().round() as i32
}

enum Family {
    Large { levels: usize, width: Ratio<u128> },
    Backbone,
}

fn identify(base: &NetworkSpec) -> Option<Family> {
    let size = base.input.width;
    for levels in 1..=7 {
        for width in width_grid() {
            let candidate = large_model(levels, size, width);
            if candidate.input == base.input && candidate.stages == base.stages {
                return Some(Family::Large { levels, width });
            }
        }
    }
    base.stages
        .iter()
        .all(|s| s.role == Role::Backbone)
        .then_some(Family::Backbone)
}

/// Generic growth of a backbone-only network: widen every stage by `width`,
/// reset depths from the schedule and append `extra` downsampling stages
/// of the last block kind with doubled channels.
fn grow_backbone(base: &NetworkSpec, target: u32, extra: usize, width: Ratio<u128>) -> NetworkSpec {
    let mut spec = base.with_input_size(target);
    let scale = |c: u32| round_to_8(Ratio::from_integer(c as u128) * width);
    let mut pyramid = 0;
    for stage in &mut spec.stages {
        let block = &mut stage.block;
        block.base_channels = scale(block.base_channels);
        if block.kind.is_grouped() {
            block.base_channels = block.base_channels.div_ceil(64) * 64;
        }
        block.growth = block.growth.map(scale);
        if stage.downsample && block.kind.is_block() {
            block.repeats = schedule_depth(pyramid);
            pyramid += 1;
        }
        if block.kind == BlockKind::CspOsaPcb {
            let g = block.growth.unwrap_or(0);
            block.partition_width = Some((block.base_channels + block.repeats * g).div_ceil(2));
        }
    }
    let last = spec
        .stages
        .iter()
        .rev()
        .find(|s| s.block.kind.is_block())
        .cloned();
    if let Some(last) = last {
        let mut b = last.block.base_channels;
        for n in 0..extra {
            b *= 2;
            let mut s = last.clone();
            s.downsample = true;
            s.from.clear();
            s.name = last.name.as_ref().map(|name| format!("{name}+{}", n + 1));
            s.block.base_channels = b;
            s.block.growth = s.block.growth.map(|g| g * 2);
            s.block.repeats = schedule_depth(pyramid);
            if s.block.kind == BlockKind::CspOsaPcb {
                let g = s.block.growth.unwrap_or(0);
                s.block.partition_width = Some((b + s.block.repeats * g).div_ceil(2));
            }
            pyramid += 1;
            spec.stages.push(s);
        }
    }
    spec
}

/// Compound scaling: first input size together with the number of stages,
/// then depth from the schedule, then the widest grid width that fits the
/// budget.
pub fn compound_scale_up(
    base: &NetworkSpec,
    target_input: u32,
    budget: Budget,
) -> Result<ScalePlan, ScaleError> {
    let base_size = base.input.width;
    if target_input < base_size {
        return Err(ScaleError::TargetTooSmall {
            target: target_input,
            base: base_size,
        });
    }
    let base_cost = analyze(base)?;
    let limit = budget.limit(base_cost.flops);
    if limit == 0 {
        return Err(ScaleError::EmptyBudget);
    }

    if target_input == base_size {
        if base_cost.flops > limit {
            return Err(ScaleError::InfeasibleBudget {
                budget: limit,
                needed: base_cost.flops,
            });
        }
        return Ok(ScalePlan {
            factors: ScalingFactors::IDENTITY,
            stage_depths: depths(base),
            width_multiplier: Ratio::from_integer(1),
            resulting_spec: base.clone(),
            cost: base_cost,
            budget: limit,
        });
    }

    let delta = added_stages(base_size, target_input);
    let family = identify(base).ok_or(ScaleError::UnsupportedBase)?;
    let build = |gamma: Ratio<u128>| -> NetworkSpec {
        match family {
            Family::Large { levels, width } => {
                let levels = (levels as i32 + delta).clamp(1, 7) as usize;
                large_model(levels, target_input, width * gamma)
            }
            Family::Backbone => grow_backbone(base, target_input, delta.max(0) as usize, gamma),
        }
    };

    let candidates: Vec<(Ratio<u128>, Result<CostReport, ExpandError>, NetworkSpec)> = width_grid()
        .into_par_iter()
        .map(|gamma| {
            let spec = build(gamma);
            (gamma, analyze(&spec), spec)
        })
        .collect();

    let mut cheapest = u128::MAX;
    let mut chosen = None;
    for (gamma, cost, spec) in candidates {
        let cost = cost?;
        cheapest = cheapest.min(cost.flops);
        if cost.flops <= limit {
            chosen = Some((gamma, cost, spec));
        }
    }
    let (gamma, cost, spec) = chosen.ok_or(ScaleError::InfeasibleBudget {
        budget: limit,
        needed: cheapest,
    })?;

    let base_depth: u32 = depths(base).iter().sum();
    let new_depths = depths(&spec);
    let new_depth: u32 = new_depths.iter().sum();
    let factors = ScalingFactors {
        alpha_size: target_input as f64 / base_size as f64,
        beta_depth: if base_depth == 0 {
            1.0
        } else {
            new_depth as f64 / base_depth as f64
        },
        gamma_width: ratio_f64(gamma),
        delta_stages: delta,
    };
    Ok(ScalePlan {
        factors,
        stage_depths: new_depths,
        width_multiplier: gamma,
        resulting_spec: spec,
        cost,
        budget: limit,
    })
}
