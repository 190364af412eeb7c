//! Built-in networks.
//!
//! Backbones are named `C1..Cn` by pyramid level (stride `2^i`). Neck stages
//! on the top-down path are named `td<i>.*`, backbone laterals `C<i>.lat`,
//! and everything on the bottom-up path or in a detection head is grouped as
//! `P<i>.*` so that [`crate::prune_heads`] can address whole levels.
//!
//! Besides the fixed names, [`preset`] accepts `<backbone>+<neck>` composites
//! (backbones `darknet53`, `cspdarknet53`, `cd53s`; necks `fpnspp`,
//! `cfpnspp`, `panspp`, `cpanspp`) and a trailing `\P7\P6`-style suffix that
//! prunes the listed levels.

use num_rational::Ratio;
use thiserror::Error;

use crate::ir::{BlockKind, BlockSpec, NetworkSpec, Role, Stage, TensorShape};
use crate::rewrite::{prune_heads, RewriteError};

pub const PRESET_NAMES: [&str; 10] = [
    "darknet53",
    "cspdarknet53",
    "cd53s",
    "yolov4-csp",
    "yolov4-tiny",
    "yolov4-p5",
    "yolov4-p6",
    "yolov4-p7",
    "pan-spp-neck",
    "csppan-spp-neck",
];

pub const BACKBONES: [&str; 3] = ["darknet53", "cspdarknet53", "cd53s"];
pub const NECKS: [&str; 4] = ["fpnspp", "cfpnspp", "panspp", "cpanspp"];

/// Per-stage depths of the large models, indexed from the first backbone
/// stage. Stages past the end reuse the last entry.
pub const DEPTH_SCHEDULE: [u32; 7] = [1, 3, 15, 15, 7, 7, 7];

/// Width multipliers the scaling search may choose from.
pub fn width_grid() -> [Ratio<u128>; 5] {
    [
        Ratio::new(1, 1),
        Ratio::new(9, 8),
        Ratio::new(5, 4),
        Ratio::new(11, 8),
        Ratio::new(3, 2),
    ]
}

/// Output channels of a COCO detection head: 3 anchors x (4 box + 1 + 80).
pub const COCO_PRED: u32 = 255;

const DARKNET_DEPTHS: [u32; 5] = [1, 2, 8, 8, 4];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preset {
    pub name: String,
    pub spec: NetworkSpec,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PresetError {
    #[error("unknown preset `{0}`")]
    Unknown(String),
    #[error("preset `{name}`: {source}")]
    Prune {
        name: String,
        #[source]
        source: RewriteError,
    },
}

pub fn schedule_depth(stage: usize) -> u32 {
    DEPTH_SCHEDULE[stage.min(DEPTH_SCHEDULE.len() - 1)]
}

/// Rounds `x` to the nearest multiple of 8 (at least 8).
pub fn round_to_8(x: Ratio<u128>) -> u32 {
    let eighths = (x / 8).round().to_integer().max(1);
    (eighths * 8) as u32
}

fn stage(block: BlockSpec, role: Role, name: impl Into<String>) -> Stage {
    Stage::new(block, role).named(name)
}

fn push_from(spec: &mut NetworkSpec, s: Stage, from: &[&str]) {
    spec.push(s.from_stages(from.iter().copied()));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Topology {
    Fpn,
    Pan,
}

#[derive(Debug, Clone, Copy)]
struct NeckPlan {
    kind: BlockKind,
    depth: u32,
    topology: Topology,
    top: usize,
}

fn neck_block(kind: BlockKind, n: u32, depth: u32) -> BlockSpec {
    BlockSpec::new(kind, depth, 2 * n).without_shortcut()
}

fn head(spec: &mut NetworkSpec, level: usize, n: u32, source: &str) {
    push_from(
        spec,
        stage(BlockSpec::conv(3, 2 * n), Role::Head, format!("P{level}.head")),
        &[source],
    );
    spec.push(stage(
        BlockSpec::conv(1, COCO_PRED),
        Role::Head,
        format!("P{level}.pred"),
    ));
}

/// Appends an SPP-topped neck over levels `3..=plan.top`. `width(i)` is the
/// neck width at level `i`; backbone stage `C<i>` must already exist.
fn add_neck(spec: &mut NetworkSpec, plan: NeckPlan, width: impl Fn(usize) -> u32) {
    let td = Role::NeckTopdown;
    let t = plan.top;
    let nt = width(t);
    let ct = format!("C{t}");

    push_from(spec, stage(neck_block(plan.kind, nt, 1), td, format!("td{t}.pre")), &[&ct]);
    spec.push(stage(BlockSpec::conv(1, nt), td, format!("td{t}.reduce")));
    spec.push(stage(BlockSpec::new(BlockKind::Spp, 1, nt), td, format!("td{t}.spp")));
    spec.push(stage(neck_block(plan.kind, nt, 1), td, format!("td{t}.post")));
    spec.push(stage(BlockSpec::conv(1, nt), td, format!("td{t}.out")));
    if plan.topology == Topology::Fpn {
        head(spec, t, nt, &format!("td{t}.out"));
    }

    for i in (3..t).rev() {
        let n = width(i);
        let upper = format!("td{}.out", i + 1);
        let up = format!("td{i}.up");
        push_from(spec, stage(BlockSpec::conv(1, n), td, format!("td{i}.lat")), &[&upper]);
        spec.push(stage(BlockSpec::new(BlockKind::Upsample, 1, n), td, up.clone()));
        let ci = format!("C{i}");
        let block = stage(neck_block(plan.kind, n, plan.depth), td, format!("td{i}.block"));
        match plan.topology {
            Topology::Pan => {
                let lat = format!("C{i}.lat");
                push_from(spec, stage(BlockSpec::conv(1, n), td, lat.clone()), &[&ci]);
                push_from(spec, block, &[&lat, &up]);
            }
            Topology::Fpn => push_from(spec, block, &[&up, &ci]),
        }
        spec.push(stage(BlockSpec::conv(1, n), td, format!("td{i}.out")));
        if plan.topology == Topology::Fpn {
            head(spec, i, n, &format!("td{i}.out"));
        }
    }

    if plan.topology == Topology::Pan {
        let bu = Role::NeckBottomup;
        head(spec, 3, width(3), "td3.out");
        for i in 4..=t {
            let n = width(i);
            let prev = if i == 4 {
                "td3.out".to_string()
            } else {
                format!("P{}.out", i - 1)
            };
            let down = format!("P{i}.down");
            push_from(
                spec,
                stage(BlockSpec::conv(3, n), bu, down.clone()).downsampled(),
                &[&prev],
            );
            push_from(
                spec,
                stage(neck_block(plan.kind, n, plan.depth), bu, format!("P{i}.block")),
                &[&down, &format!("td{i}.out")],
            );
            spec.push(stage(BlockSpec::conv(1, n), bu, format!("P{i}.out")));
            head(spec, i, n, &format!("P{i}.out"));
        }
    }
}

/// Darknet-53 style backbone: a 3x3 stem and five downsampling stages with
/// depths 1-2-8-8-4. `kinds[i]` selects the block family of stage `C<i+1>`.
fn darknet_backbone(name: &str, input: u32, kinds: [BlockKind; 5]) -> NetworkSpec {
    let mut spec = NetworkSpec::new(name, TensorShape::new(input, input, 3));
    spec.push(stage(BlockSpec::conv(3, 32), Role::Backbone, "stem"));
    for (i, (&k, kind)) in DARKNET_DEPTHS.iter().zip(kinds).enumerate() {
        let b = 64 << i;
        spec.push(stage(BlockSpec::new(kind, k, b), Role::Backbone, format!("C{}", i + 1)).downsampled());
    }
    spec
}

fn backbone_kinds(name: &str) -> Option<[BlockKind; 5]> {
    use BlockKind::{CspDark, Dark};
    match name {
        "darknet53" => Some([Dark; 5]),
        "cspdarknet53" => Some([CspDark; 5]),
        "cd53s" => Some([Dark, CspDark, CspDark, CspDark, CspDark]),
        _ => None,
    }
}

fn neck_kind(name: &str) -> Option<(BlockKind, Topology)> {
    match name {
        "fpnspp" => Some((BlockKind::Dark, Topology::Fpn)),
        "cfpnspp" => Some((BlockKind::CspDark, Topology::Fpn)),
        "panspp" => Some((BlockKind::Dark, Topology::Pan)),
        "cpanspp" => Some((BlockKind::CspDark, Topology::Pan)),
        _ => None,
    }
}

const DARKNET_INPUT: u32 = 608;

fn darknet_detector(name: &str, backbone: &str, neck: &str) -> Option<NetworkSpec> {
    let kinds = backbone_kinds(backbone)?;
    let (kind, topology) = neck_kind(neck)?;
    let mut spec = darknet_backbone(name, DARKNET_INPUT, kinds);
    let plan = NeckPlan {
        kind,
        depth: 2,
        topology,
        top: 5,
    };
    // 512-256-128 halvings from the top level down.
    add_neck(&mut spec, plan, |i| 128 << (i - 3));
    Some(spec)
}

/// Backbone channels of stage `C<i>` in the large-model family.
pub fn large_stage_width(i: usize, width: Ratio<u128>) -> u32 {
    round_to_8(Ratio::from_integer(64u128 << (i - 1)) * width)
}

/// Large-model family: CSPDarknet backbone with `levels` downsampling stages
/// (depths from [`DEPTH_SCHEDULE`]) and a CSP-PAN neck over levels
/// `3..=levels`. Every added stage doubles the channels.
pub fn large_model(levels: usize, input: u32, width: Ratio<u128>) -> NetworkSpec {
    let name = format!("yolov4-p{levels}");
    let mut spec = NetworkSpec::new(name, TensorShape::new(input, input, 3));
    spec.push(stage(
        BlockSpec::conv(3, round_to_8(Ratio::from_integer(32) * width)),
        Role::Backbone,
        "stem",
    ));
    for i in 1..=levels {
        let b = large_stage_width(i, width);
        spec.push(
            stage(
                BlockSpec::new(BlockKind::CspDark, schedule_depth(i - 1), b),
                Role::Backbone,
                format!("C{i}"),
            )
            .downsampled(),
        );
    }
    if levels >= 3 {
        let plan = NeckPlan {
            kind: BlockKind::CspDark,
            depth: 3,
            topology: Topology::Pan,
            top: levels,
        };
        add_neck(&mut spec, plan, |i| large_stage_width(i, width) / 2);
    }
    spec
}

/// Input resolution and width multiplier of the shipped large models.
pub fn large_model_config(levels: usize) -> Option<(u32, Ratio<u128>)> {
    match levels {
        5 => Some((896, Ratio::from_integer(1))),
        6 => Some((1280, Ratio::from_integer(1))),
        7 => Some((1536, Ratio::new(5, 4))),
        _ => None,
    }
}

fn yolov4_tiny() -> NetworkSpec {
    let bb = Role::Backbone;
    let mut spec = NetworkSpec::new("yolov4-tiny", TensorShape::new(416, 416, 3));
    spec.push(stage(BlockSpec::conv(3, 32), bb, "stem1").downsampled());
    spec.push(stage(BlockSpec::conv(3, 64), bb, "stem2").downsampled());
    for (i, b) in [64u32, 128, 256].into_iter().enumerate() {
        let g = b / 2;
        let k = 3;
        let block = BlockSpec::new(BlockKind::CspOsaPcb, k, b)
            .with_growth(g)
            .with_partition((b + k * g).div_ceil(2));
        let s = stage(block, bb, format!("C{}", i + 2));
        spec.push(if i == 0 { s } else { s.downsampled() });
    }
    spec.push(stage(BlockSpec::conv(3, 512), bb, "C5").downsampled());

    spec.push(stage(BlockSpec::conv(1, 256), Role::NeckTopdown, "td5.out"));
    head(&mut spec, 5, 256, "td5.out");
    push_from(
        &mut spec,
        stage(BlockSpec::conv(1, 128), Role::NeckTopdown, "td4.lat"),
        &["td5.out"],
    );
    spec.push(stage(
        BlockSpec::new(BlockKind::Upsample, 1, 128),
        Role::NeckTopdown,
        "td4.up",
    ));
    push_from(
        &mut spec,
        stage(BlockSpec::conv(3, 256), Role::Head, "P4.head"),
        &["td4.up", "C4"],
    );
    spec.push(stage(BlockSpec::conv(1, COCO_PRED), Role::Head, "P4.pred"));
    spec
}

fn notes_for(name: &str) -> String {
    let text = match name {
        "darknet53" => "Darknet-53 backbone: 3x3 stem, five stride-2 stages of Dark layers, depths 1-2-8-8-4, widths 64..1024. 608x608 input.",
        "cspdarknet53" => "CSPDarknet-53 backbone: Darknet-53 layout with every stage CSP-ized.",
        "cd53s" => "CSPDarknet-53 with the first (k=1) stage reverted to plain Dark layers.",
        "yolov4-csp" => "cd53s backbone with an SPP-topped CSP-PAN neck and three COCO heads (255 outputs).",
        "yolov4-tiny" => "Two stride-2 stems, three CspOSA_PCB stages with g=b/2 and k=3, a 3x3 stride-2 conv to 512, two heads.",
        "yolov4-p5" => "CSPDarknet backbone, 5 stages, depths 1-3-15-15-7, width 1.0, CSP-PAN neck (depth 3), 896 input.",
        "yolov4-p6" => "As p5 with a sixth stage (depth 7), width 1.0, 1280 input.",
        "yolov4-p7" => "As p6 with a seventh stage (depth 7), width 1.25, 1536 input.",
        "pan-spp-neck" => "darknet53 backbone with an SPP-topped PAN neck of Dark blocks without shortcuts.",
        "csppan-spp-neck" => "darknet53 backbone with the neck of pan-spp-neck CSP-ized.",
        _ => "Composite of a Darknet-family backbone and an SPP-topped neck. Neck widths 512-256-128.",
    };
    text.to_string()
}

fn base_preset(name: &str) -> Option<NetworkSpec> {
    if let Some(kinds) = backbone_kinds(name) {
        return Some(darknet_backbone(name, DARKNET_INPUT, kinds));
    }
    if let Some((backbone, neck)) = name.split_once('+') {
        return darknet_detector(name, backbone, neck);
    }
    match name {
        "yolov4-csp" => darknet_detector(name, "cd53s", "cpanspp"),
        "yolov4-tiny" => Some(yolov4_tiny()),
        "pan-spp-neck" => darknet_detector(name, "darknet53", "panspp"),
        "csppan-spp-neck" => darknet_detector(name, "darknet53", "cpanspp"),
        _ => {
            let levels = match name {
                "yolov4-p5" => 5,
                "yolov4-p6" => 6,
                "yolov4-p7" => 7,
                _ => return None,
            };
            let (input, width) = large_model_config(levels)?;
            Some(large_model(levels, input, width))
        }
    }
}

/// Resolves a preset name, a `<backbone>+<neck>` composite, or either with a
/// `\P<n>...` pruning suffix.
pub fn preset(name: &str) -> Result<Preset, PresetError> {
    let mut parts = name.split('\\');
    let base = parts.next().unwrap_or_default();
    let levels: Vec<String> = parts.map(str::to_string).collect();
    let mut spec = base_preset(base).ok_or_else(|| PresetError::Unknown(name.to_string()))?;
    spec.name = name.to_string();
    let mut notes = notes_for(base);
    if !levels.is_empty() {
        let (pruned, _) = prune_heads(&spec, &levels).map_err(|source| PresetError::Prune {
            name: name.to_string(),
            source,
        })?;
        spec = pruned;
        notes.push_str(&format!(" Levels removed: {}.", levels.join(", ")));
    }
    Ok(Preset {
        name: name.to_string(),
        spec,
        notes,
    })
}
