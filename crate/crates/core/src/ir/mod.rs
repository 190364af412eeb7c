//! Block-level architecture representation.
//!
//! A [`NetworkSpec`] is an ordered list of [`Stage`]s. Each stage wraps one
//! [`BlockSpec`] (a block family with repeats `k`, base channels `b` and an
//! optional growth rate `g`) plus placement metadata: whether the stage opens
//! with a stride-2 convolution, which part of the detector it belongs to, and
//! which earlier stages feed it.
//!
//! Stages consume the output of the previous stage unless `from` names other
//! stages, in which case their outputs are concatenated along channels.

pub mod expand;
pub mod format;
mod validate;

use serde::{Deserialize, Serialize};
use std::fmt;

pub use expand::{expand, ConvPrimitive, ExpandError, ExpandedConv, Part};
pub use format::{parse_spec, serialize_spec, ParseError};
pub use validate::{Source, SpecError, StageShapes};

/// Group count of the grouped 3x3 convolution inside ResX layers.
pub const RESX_GROUPS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorShape {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
}

impl TensorShape {
    pub fn new(width: u32, height: u32, channels: u32) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    /// Spatial halving across a stride-2 boundary (ceiling division).
    pub fn halved(self) -> Self {
        Self {
            width: self.width.div_ceil(2),
            height: self.height.div_ceil(2),
            ..self
        }
    }

    pub fn doubled(self) -> Self {
        Self {
            width: self.width * 2,
            height: self.height * 2,
            ..self
        }
    }

    pub fn with_channels(self, channels: u32) -> Self {
        Self { channels, ..self }
    }

    pub fn pixels(&self) -> u128 {
        self.width as u128 * self.height as u128
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    Res,
    ResX,
    Dark,
    Dense,
    #[serde(rename = "OSA")]
    Osa,
    CspRes,
    CspResX,
    CspDark,
    #[serde(rename = "CspOSA")]
    CspOsa,
    #[serde(rename = "CspOSA_PCB")]
    CspOsaPcb,
    /// Plain convolution(s); used for stems, laterals and detection heads.
    Conv,
    /// Spatial pyramid pooling. Zero cost, quadruples channels.
    Spp,
    /// Nearest-neighbour 2x upsampling. Zero cost.
    Upsample,
}

impl BlockKind {
    /// The ten computational block families.
    pub const BLOCKS: [BlockKind; 10] = [
        BlockKind::Res,
        BlockKind::ResX,
        BlockKind::Dark,
        BlockKind::Dense,
        BlockKind::Osa,
        BlockKind::CspRes,
        BlockKind::CspResX,
        BlockKind::CspDark,
        BlockKind::CspOsa,
        BlockKind::CspOsaPcb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Res => "Res",
            BlockKind::ResX => "ResX",
            BlockKind::Dark => "Dark",
            BlockKind::Dense => "Dense",
            BlockKind::Osa => "OSA",
            BlockKind::CspRes => "CspRes",
            BlockKind::CspResX => "CspResX",
            BlockKind::CspDark => "CspDark",
            BlockKind::CspOsa => "CspOSA",
            BlockKind::CspOsaPcb => "CspOSA_PCB",
            BlockKind::Conv => "Conv",
            BlockKind::Spp => "Spp",
            BlockKind::Upsample => "Upsample",
        }
    }

    /// True for the ten block families (everything except plain convs and
    /// zero-cost annotations).
    pub fn is_block(self) -> bool {
        !matches!(self, BlockKind::Conv | BlockKind::Spp | BlockKind::Upsample)
    }

    pub fn is_annotation(self) -> bool {
        matches!(self, BlockKind::Spp | BlockKind::Upsample)
    }

    pub fn is_csp(self) -> bool {
        matches!(
            self,
            BlockKind::CspRes
                | BlockKind::CspResX
                | BlockKind::CspDark
                | BlockKind::CspOsa
                | BlockKind::CspOsaPcb
        )
    }

    pub fn needs_growth(self) -> bool {
        matches!(
            self,
            BlockKind::Dense | BlockKind::Osa | BlockKind::CspOsa | BlockKind::CspOsaPcb
        )
    }

    pub fn is_osa_family(self) -> bool {
        matches!(self, BlockKind::Osa | BlockKind::CspOsa | BlockKind::CspOsaPcb)
    }

    pub fn is_grouped(self) -> bool {
        matches!(self, BlockKind::ResX | BlockKind::CspResX)
    }

    /// Kinds whose layers may carry residual shortcuts.
    pub fn has_shortcut_option(self) -> bool {
        matches!(
            self,
            BlockKind::Res
                | BlockKind::ResX
                | BlockKind::Dark
                | BlockKind::CspRes
                | BlockKind::CspResX
                | BlockKind::CspDark
        )
    }

    /// CSP counterpart used by CSP-ization, if the kind has one.
    pub fn csp_counterpart(self) -> Option<BlockKind> {
        match self {
            BlockKind::Res => Some(BlockKind::CspRes),
            BlockKind::ResX => Some(BlockKind::CspResX),
            BlockKind::Dark => Some(BlockKind::CspDark),
            BlockKind::Osa => Some(BlockKind::CspOsa),
            _ => None,
        }
    }

    /// Non-CSP counterpart of a CSP kind.
    pub fn plain_counterpart(self) -> Option<BlockKind> {
        match self {
            BlockKind::CspRes => Some(BlockKind::Res),
            BlockKind::CspResX => Some(BlockKind::ResX),
            BlockKind::CspDark => Some(BlockKind::Dark),
            BlockKind::CspOsa | BlockKind::CspOsaPcb => Some(BlockKind::Osa),
            _ => None,
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockSpec {
    pub kind: BlockKind,
    /// Layer repeats (`k`).
    pub repeats: u32,
    /// Base channel count (`b`).
    pub base_channels: u32,
    /// Growth rate (`g`) for Dense/OSA families.
    pub growth: Option<u32>,
    /// Active-path width of a PCB partition.
    pub partition_width: Option<u32>,
    /// Kernel side of a `Conv` stage (1 or 3, default 1).
    pub kernel: Option<u32>,
    /// Residual shortcuts inside the layers (default true where allowed).
    pub shortcut: Option<bool>,
}

impl BlockSpec {
    pub fn new(kind: BlockKind, repeats: u32, base_channels: u32) -> Self {
        Self {
            kind,
            repeats,
            base_channels,
            growth: None,
            partition_width: None,
            kernel: None,
            shortcut: None,
        }
    }

    pub fn with_growth(mut self, growth: u32) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn with_partition(mut self, width: u32) -> Self {
        self.partition_width = Some(width);
        self
    }

    pub fn with_kernel(mut self, kernel: u32) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn without_shortcut(mut self) -> Self {
        self.shortcut = Some(false);
        self
    }

    pub fn conv(kernel: u32, out_channels: u32) -> Self {
        Self::new(BlockKind::Conv, 1, out_channels).with_kernel(kernel)
    }

    /// Group width of the grouped convolution (ResX kinds only).
    pub fn group_width(&self) -> Option<u32> {
        self.kind.is_grouped().then_some(RESX_GROUPS)
    }

    pub fn kernel_size(&self) -> u32 {
        self.kernel.unwrap_or(1)
    }

    pub fn has_shortcut(&self) -> bool {
        self.kind.has_shortcut_option() && self.shortcut.unwrap_or(true)
    }

    /// Channels leaving the block given `b`, `g`, `k`.
    pub fn output_channels(&self) -> u32 {
        let b = self.base_channels;
        let k = self.repeats;
        let g = self.growth.unwrap_or(0);
        match self.kind {
            BlockKind::Dense | BlockKind::CspOsaPcb => b + k * g,
            BlockKind::Osa => (b + k * g).div_ceil(2),
            BlockKind::CspOsa => b - g + k * g,
            BlockKind::Spp => 4 * b,
            _ => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Backbone,
    NeckTopdown,
    NeckBottomup,
    Head,
}

impl Role {
    pub fn is_neck(self) -> bool {
        matches!(self, Role::NeckTopdown | Role::NeckBottomup)
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Backbone => "backbone",
            Role::NeckTopdown => "neck_topdown",
            Role::NeckBottomup => "neck_bottomup",
            Role::Head => "head",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Stage {
    pub name: Option<String>,
    pub block: BlockSpec,
    pub downsample: bool,
    pub role: Role,
    /// Names of earlier stages whose outputs are concatenated as input.
    /// Empty means "the previous stage" (or the network input).
    pub from: Vec<String>,
}

impl Stage {
    pub fn new(block: BlockSpec, role: Role) -> Self {
        Self {
            name: None,
            block,
            downsample: false,
            role,
            from: Vec::new(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn downsampled(mut self) -> Self {
        self.downsample = true;
        self
    }

    pub fn from_stages<I, S>(mut self, sources: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.from = sources.into_iter().map(Into::into).collect();
        self
    }

    /// Pyramid level group this stage belongs to (`P7` for `P7.head`).
    pub fn level_group(&self) -> Option<&str> {
        let name = self.name.as_deref()?;
        let group = name.split('.').next()?;
        let digits = group.strip_prefix('P')?;
        (!digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())).then_some(group)
    }

    pub fn label(&self, index: usize) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!("#{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    pub name: String,
    pub input: TensorShape,
    pub stages: Vec<Stage>,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, input: TensorShape) -> Self {
        Self {
            name: name.into(),
            input,
            stages: Vec::new(),
        }
    }

    pub fn push(&mut self, stage: Stage) -> &mut Self {
        self.stages.push(stage);
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        self.resolve().map(|_| ())
    }

    /// Validates the spec and resolves every stage's sources and shapes.
    pub fn resolve(&self) -> Result<Vec<StageShapes>, SpecError> {
        validate::resolve(self)
    }

    pub fn stage_index(&self, name: &str) -> Option<usize> {
        self.stages
            .iter()
            .position(|s| s.name.as_deref() == Some(name))
    }

    /// Same network at a different square input resolution.
    pub fn with_input_size(&self, size: u32) -> Self {
        let mut out = self.clone();
        out.input.width = size;
        out.input.height = size;
        out
    }

    /// Highest pyramid level carrying a detection head, or the number of
    /// downsampling stages when the network has no heads.
    pub fn pyramid_levels(&self) -> usize {
        let headed = self
            .stages
            .iter()
            .filter(|s| s.role == Role::Head)
            .filter_map(|s| s.level_group())
            .filter_map(|g| g[1..].parse::<usize>().ok())
            .max();
        headed.unwrap_or_else(|| self.stages.iter().filter(|s| s.downsample).count())
    }
}

/// Scaling factors relative to a base network: input size, depth, width and
/// number of stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    pub alpha_size: f64,
    pub beta_depth: f64,
    pub gamma_width: f64,
    pub delta_stages: i32,
}

impl ScalingFactors {
    pub const IDENTITY: ScalingFactors = ScalingFactors {
        alpha_size: 1.0,
        beta_depth: 1.0,
        gamma_width: 1.0,
        delta_stages: 0,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

impl Default for ScalingFactors {
    fn default() -> Self {
        Self::IDENTITY
    }
}
