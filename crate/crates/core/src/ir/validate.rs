use std::collections::HashMap;

use thiserror::Error;

use super::{BlockKind, NetworkSpec, TensorShape, RESX_GROUPS};

/// Semantic violations of the architecture invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("network has no stages")]
    NoStages,
    #[error("input {field} must be at least 1")]
    ZeroInput { field: &'static str },
    #[error("stage {stage}: {field} must be at least 1")]
    ZeroField { stage: String, field: &'static str },
    #[error("stage {stage}: growth forbidden for kind {kind}")]
    GrowthForbidden { stage: String, kind: BlockKind },
    #[error("stage {stage}: growth required for kind {kind}")]
    GrowthRequired { stage: String, kind: BlockKind },
    #[error("stage {stage}: partition_width forbidden for kind {kind}")]
    PartitionForbidden { stage: String, kind: BlockKind },
    #[error("stage {stage}: partition_width required for kind {kind}")]
    PartitionRequired { stage: String, kind: BlockKind },
    #[error("stage {stage}: partition_width {width} outside 1..={total}")]
    PartitionOutOfRange { stage: String, width: u32, total: u32 },
    #[error("stage {stage}: kernel forbidden for kind {kind}")]
    KernelForbidden { stage: String, kind: BlockKind },
    #[error("stage {stage}: kernel must be 1 or 3, got {kernel}")]
    KernelUnsupported { stage: String, kernel: u32 },
    #[error("stage {stage}: downsampling Conv stage needs a 3x3 kernel")]
    StridedPointwise { stage: String },
    #[error("stage {stage}: shortcut option forbidden for kind {kind}")]
    ShortcutForbidden { stage: String, kind: BlockKind },
    #[error("stage {stage}: base_channels {channels} of {kind} must be divisible by {divisor}")]
    GroupDivisibility {
        stage: String,
        kind: BlockKind,
        channels: u32,
        divisor: u32,
    },
    #[error("stage {stage}: growth {growth} must be below base_channels {channels} for {kind}")]
    GrowthTooWide {
        stage: String,
        kind: BlockKind,
        growth: u32,
        channels: u32,
    },
    #[error("stage {stage}: {kind} cannot downsample")]
    DownsampleForbidden { stage: String, kind: BlockKind },
    #[error("stage {stage}: {kind} takes exactly one repeat")]
    SingleRepeat { stage: String, kind: BlockKind },
    #[error("stage {stage}: channel-chain mismatch: block expects {expected} input channels, got {actual}")]
    ChannelMismatch {
        stage: String,
        expected: u32,
        actual: u32,
    },
    #[error("stage {stage}: bypass needs at least {needed} input channels, got {actual}")]
    BypassTooNarrow {
        stage: String,
        needed: u32,
        actual: u32,
    },
    #[error("stage {stage}: duplicate stage name")]
    DuplicateName { stage: String },
    #[error("stage {stage}: source `{source_name}` is not an earlier stage")]
    UnknownSource { stage: String, source_name: String },
    #[error("stage {stage}: concatenated inputs disagree on spatial size ({a}x{b} vs {c}x{d})")]
    SpatialMismatch {
        stage: String,
        a: u32,
        b: u32,
        c: u32,
        d: u32,
    },
}

/// Where a stage's input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Network,
    Stage(usize),
}

/// Resolved wiring and shapes of one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageShapes {
    pub sources: Vec<Source>,
    /// Concatenated input, before any downsampling or upsampling.
    pub input: TensorShape,
    /// Input seen by the block body: after the stride-2 convolution (channels
    /// become `b`) or after upsampling.
    pub block_input: TensorShape,
    pub output: TensorShape,
}

pub(super) fn resolve(spec: &NetworkSpec) -> Result<Vec<StageShapes>, SpecError> {
    let input = spec.input;
    if input.width == 0 {
        return Err(SpecError::ZeroInput { field: "width" });
    }
    if input.height == 0 {
        return Err(SpecError::ZeroInput { field: "height" });
    }
    if input.channels == 0 {
        return Err(SpecError::ZeroInput { field: "channels" });
    }
    if spec.stages.is_empty() {
        return Err(SpecError::NoStages);
    }

    let mut names: HashMap<&str, usize> = HashMap::new();
    let mut resolved: Vec<StageShapes> = Vec::with_capacity(spec.stages.len());

    for (i, stage) in spec.stages.iter().enumerate() {
        let label = stage.label(i);
        let block = &stage.block;
        let kind = block.kind;
        let b = block.base_channels;
        let k = block.repeats;

        if k == 0 {
            return Err(SpecError::ZeroField {
                stage: label,
                field: "repeats",
            });
        }
        if b == 0 {
            return Err(SpecError::ZeroField {
                stage: label,
                field: "base_channels",
            });
        }

        match (kind.needs_growth(), block.growth) {
            (false, Some(_)) => return Err(SpecError::GrowthForbidden { stage: label, kind }),
            (true, None) => return Err(SpecError::GrowthRequired { stage: label, kind }),
            (true, Some(0)) => {
                return Err(SpecError::ZeroField {
                    stage: label,
                    field: "growth",
                })
            }
            _ => {}
        }
        let g = block.growth.unwrap_or(0);

        if kind == BlockKind::CspOsa && g >= b {
            return Err(SpecError::GrowthTooWide {
                stage: label,
                kind,
                growth: g,
                channels: b,
            });
        }
        if kind == BlockKind::CspOsaPcb && g > b {
            return Err(SpecError::GrowthTooWide {
                stage: label,
                kind,
                growth: g,
                channels: b,
            });
        }

        match (kind == BlockKind::CspOsaPcb, block.partition_width) {
            (false, Some(_)) => {
                return Err(SpecError::PartitionForbidden { stage: label, kind })
            }
            (true, None) => return Err(SpecError::PartitionRequired { stage: label, kind }),
            (true, Some(w)) => {
                let total = b + k * g;
                if w == 0 || w > total {
                    return Err(SpecError::PartitionOutOfRange {
                        stage: label,
                        width: w,
                        total,
                    });
                }
            }
            _ => {}
        }

        match (kind, block.kernel) {
            (BlockKind::Conv, Some(kernel)) if kernel != 1 && kernel != 3 => {
                return Err(SpecError::KernelUnsupported {
                    stage: label,
                    kernel,
                })
            }
            (BlockKind::Conv, _) => {}
            (_, Some(_)) => return Err(SpecError::KernelForbidden { stage: label, kind }),
            _ => {}
        }
        if kind == BlockKind::Conv && stage.downsample && block.kernel_size() != 3 {
            return Err(SpecError::StridedPointwise { stage: label });
        }

        if block.shortcut.is_some() && !kind.has_shortcut_option() {
            return Err(SpecError::ShortcutForbidden { stage: label, kind });
        }

        if kind.is_grouped() && b % (2 * RESX_GROUPS) != 0 {
            return Err(SpecError::GroupDivisibility {
                stage: label,
                kind,
                channels: b,
                divisor: 2 * RESX_GROUPS,
            });
        }

        if kind.is_annotation() {
            if stage.downsample {
                return Err(SpecError::DownsampleForbidden { stage: label, kind });
            }
            if k != 1 {
                return Err(SpecError::SingleRepeat { stage: label, kind });
            }
        }

        // Sources.
        let sources: Vec<Source> = if stage.from.is_empty() {
            if i == 0 {
                vec![Source::Network]
            } else {
                vec![Source::Stage(i - 1)]
            }
        } else {
            let mut out = Vec::with_capacity(stage.from.len());
            for src in &stage.from {
                let idx = if src == "input" {
                    Source::Network
                } else {
                    match names.get(src.as_str()) {
                        Some(&j) => Source::Stage(j),
                        None => {
                            return Err(SpecError::UnknownSource {
                                stage: label,
                                source_name: src.clone(),
                            })
                        }
                    }
                };
                out.push(idx);
            }
            out
        };

        let mut concat: Option<TensorShape> = None;
        for src in &sources {
            let shape = match *src {
                Source::Network => input,
                Source::Stage(j) => resolved[j].output,
            };
            concat = Some(match concat {
                None => shape,
                Some(acc) => {
                    if acc.width != shape.width || acc.height != shape.height {
                        return Err(SpecError::SpatialMismatch {
                            stage: label,
                            a: acc.width,
                            b: acc.height,
                            c: shape.width,
                            d: shape.height,
                        });
                    }
                    acc.with_channels(acc.channels + shape.channels)
                }
            });
        }
        let stage_input = concat.expect("at least one source");

        let block_input = if stage.downsample {
            stage_input.halved().with_channels(b)
        } else if kind == BlockKind::Upsample {
            stage_input.doubled()
        } else {
            stage_input
        };
        let c = block_input.channels;

        // Channel chaining.
        let exact_input = match kind {
            BlockKind::Conv => false,
            BlockKind::Spp | BlockKind::Upsample => true,
            BlockKind::Dense | BlockKind::Osa | BlockKind::CspOsa | BlockKind::CspOsaPcb => true,
            _ => block.has_shortcut(),
        };
        if exact_input && c != b {
            return Err(SpecError::ChannelMismatch {
                stage: label,
                expected: b,
                actual: c,
            });
        }
        if matches!(
            kind,
            BlockKind::CspRes | BlockKind::CspResX | BlockKind::CspDark
        ) {
            let bypass = b - b / 2;
            if c < bypass {
                return Err(SpecError::BypassTooNarrow {
                    stage: label,
                    needed: bypass,
                    actual: c,
                });
            }
        }

        let output = block_input.with_channels(block.output_channels());

        if let Some(name) = stage.name.as_deref() {
            if name == "input" || names.insert(name, i).is_some() {
                return Err(SpecError::DuplicateName { stage: label });
            }
        }

        resolved.push(StageShapes {
            sources,
            input: stage_input,
            block_input,
            output,
        });
    }

    Ok(resolved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{BlockSpec, Role, Stage};

    fn one(block: BlockSpec, input: TensorShape) -> NetworkSpec {
        let mut s = NetworkSpec::new("t", input);
        s.push(Stage::new(block, Role::Backbone));
        s
    }

    #[test]
    fn growth_on_dark_is_rejected() {
        let spec = one(
            BlockSpec::new(BlockKind::Dark, 1, 16).with_growth(8),
            TensorShape::new(32, 32, 16),
        );
        let err = spec.validate().unwrap_err();
        assert_eq!(err.to_string(), "stage #0: growth forbidden for kind Dark");
    }

    #[test]
    fn osa_requires_growth() {
        let spec = one(
            BlockSpec::new(BlockKind::Osa, 3, 64),
            TensorShape::new(8, 8, 64),
        );
        assert!(matches!(
            spec.validate(),
            Err(SpecError::GrowthRequired { .. })
        ));
    }

    #[test]
    fn residual_block_needs_matching_input() {
        let spec = one(
            BlockSpec::new(BlockKind::Dark, 1, 64),
            TensorShape::new(8, 8, 32),
        );
        assert!(matches!(
            spec.validate(),
            Err(SpecError::ChannelMismatch {
                expected: 64,
                actual: 32,
                ..
            })
        ));

        let open = one(
            BlockSpec::new(BlockKind::Dark, 1, 64).without_shortcut(),
            TensorShape::new(8, 8, 32),
        );
        open.validate().unwrap();
    }

    #[test]
    fn downsample_sets_block_width_and_halves_with_ceiling() {
        let mut spec = NetworkSpec::new("t", TensorShape::new(15, 9, 3));
        spec.push(Stage::new(BlockSpec::new(BlockKind::Dark, 1, 32), Role::Backbone).downsampled());
        let shapes = spec.resolve().unwrap();
        assert_eq!(shapes[0].block_input, TensorShape::new(8, 5, 32));
        assert_eq!(shapes[0].output, TensorShape::new(8, 5, 32));
    }

    #[test]
    fn resx_divisibility() {
        let spec = one(
            BlockSpec::new(BlockKind::ResX, 1, 32),
            TensorShape::new(8, 8, 32),
        );
        assert!(matches!(
            spec.validate(),
            Err(SpecError::GroupDivisibility { divisor: 64, .. })
        ));
    }

    #[test]
    fn concat_sums_channels_and_checks_spatial() {
        let mut spec = NetworkSpec::new("t", TensorShape::new(16, 16, 8));
        spec.push(Stage::new(BlockSpec::conv(1, 8), Role::Backbone).named("a"));
        spec.push(Stage::new(BlockSpec::conv(3, 16), Role::Backbone).named("b").downsampled());
        spec.push(Stage::new(BlockSpec::new(BlockKind::Upsample, 1, 16), Role::NeckTopdown).named("up"));
        spec.push(Stage::new(BlockSpec::conv(1, 4), Role::NeckTopdown).from_stages(["up", "a"]));
        let shapes = spec.resolve().unwrap();
        assert_eq!(shapes[3].input, TensorShape::new(16, 16, 24));

        spec.stages[3].from = vec!["b".into(), "a".into()];
        assert!(matches!(
            spec.validate(),
            Err(SpecError::SpatialMismatch { .. })
        ));
    }

    #[test]
    fn unknown_and_forward_sources_rejected() {
        let mut spec = NetworkSpec::new("t", TensorShape::new(16, 16, 8));
        spec.push(Stage::new(BlockSpec::conv(1, 8), Role::Backbone).from_stages(["later"]));
        spec.push(Stage::new(BlockSpec::conv(1, 8), Role::Backbone).named("later"));
        assert!(matches!(
            spec.validate(),
            Err(SpecError::UnknownSource { .. })
        ));
    }

    #[test]
    fn pcb_partition_range() {
        let spec = one(
            BlockSpec::new(BlockKind::CspOsaPcb, 3, 64)
                .with_growth(32)
                .with_partition(161),
            TensorShape::new(8, 8, 64),
        );
        assert!(matches!(
            spec.validate(),
            Err(SpecError::PartitionOutOfRange { total: 160, .. })
        ));
    }
}
