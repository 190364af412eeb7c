//! Unrolling of stages into individual convolutions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BlockKind, NetworkSpec, SpecError, StageShapes, RESX_GROUPS};

/// One convolution. Spatial dims are the output resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvPrimitive {
    pub width: u32,
    pub height: u32,
    pub in_channels: u32,
    pub out_channels: u32,
    pub kernel: u32,
    pub groups: u32,
    pub stride: u32,
}

impl ConvPrimitive {
    pub fn new(width: u32, height: u32, in_channels: u32, out_channels: u32, kernel: u32) -> Self {
        Self {
            width,
            height,
            in_channels,
            out_channels,
            kernel,
            groups: 1,
            stride: 1,
        }
    }

    pub fn grouped(mut self, groups: u32) -> Self {
        self.groups = groups;
        self
    }

    pub fn strided(mut self) -> Self {
        self.stride = 2;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.groups >= 1
            && self.in_channels.is_multiple_of(self.groups)
            && matches!(self.kernel, 1 | 3)
            && matches!(self.stride, 1 | 2)
            && self.width >= 1
            && self.height >= 1
            && self.in_channels >= 1
            && self.out_channels >= 1
    }
}

/// Which part of a stage a convolution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    /// Stride-2 3x3 convolution opening a downsampling stage.
    Downsample,
    /// Convolutions of the repeated layers.
    Layer,
    /// CSP split onto the active path.
    Split,
    /// CSP transition closing the active path.
    Transition,
    /// OSA aggregation over the concatenated layer outputs.
    Aggregation,
    /// Plain `Conv` stage.
    Plain,
}

impl Part {
    /// Parts counted by the per-layer closed forms.
    pub fn in_layer_formula(self) -> bool {
        matches!(self, Part::Layer | Part::Split | Part::Transition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpandedConv {
    pub stage: usize,
    pub part: Part,
    pub conv: ConvPrimitive,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpandError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("stage {stage}: {channels} channels cannot be split into a {path} path")]
    Unsplittable {
        stage: usize,
        channels: u32,
        path: &'static str,
    },
}

/// Unrolls every stage into its primitive convolutions, in execution order.
pub fn expand(spec: &NetworkSpec) -> Result<Vec<ExpandedConv>, ExpandError> {
    let shapes = spec.resolve()?;
    let mut out = Vec::new();
    for (i, shape) in shapes.iter().enumerate() {
        expand_stage(spec, i, shape, &mut out)?;
    }
    Ok(out)
}

pub(crate) fn expand_stage(
    spec: &NetworkSpec,
    index: usize,
    shape: &StageShapes,
    out: &mut Vec<ExpandedConv>,
) -> Result<(), ExpandError> {
    let stage = &spec.stages[index];
    let block = &stage.block;
    let b = block.base_channels;
    let k = block.repeats;
    let g = block.growth.unwrap_or(0);
    let w = shape.block_input.width;
    let h = shape.block_input.height;
    let c = shape.block_input.channels;

    let mut push = |part: Part, conv: ConvPrimitive| {
        out.push(ExpandedConv {
            stage: index,
            part,
            conv,
        })
    };
    let conv = |cin: u32, cout: u32, kernel: u32| ConvPrimitive::new(w, h, cin, cout, kernel);

    let half = |path: &'static str| -> Result<u32, ExpandError> {
        match b / 2 {
            0 => Err(ExpandError::Unsplittable {
                stage: index,
                channels: b,
                path,
            }),
            n => Ok(n),
        }
    };

    if stage.downsample && block.kind != BlockKind::Conv {
        push(
            Part::Downsample,
            conv(shape.input.channels, b, 3).strided(),
        );
    }

    match block.kind {
        BlockKind::Conv => {
            let kernel = block.kernel_size();
            for r in 0..k {
                let cin = if r == 0 { c } else { b };
                let mut p = conv(cin, b, kernel);
                if r == 0 && stage.downsample {
                    p = p.strided();
                    p.in_channels = shape.input.channels;
                }
                push(Part::Plain, p);
            }
        }
        BlockKind::Spp | BlockKind::Upsample => {}
        BlockKind::Dark => {
            let mid = half("b/2")?;
            for r in 0..k {
                let cin = if r == 0 { c } else { b };
                push(Part::Layer, conv(cin, mid, 1));
                push(Part::Layer, conv(mid, b, 3));
            }
        }
        BlockKind::Res => {
            let mid = quarter(b, index)?;
            for r in 0..k {
                let cin = if r == 0 { c } else { b };
                push(Part::Layer, conv(cin, mid, 1));
                push(Part::Layer, conv(mid, mid, 3));
                push(Part::Layer, conv(mid, b, 1));
            }
        }
        BlockKind::ResX => {
            let mid = half("b/2")?;
            for r in 0..k {
                let cin = if r == 0 { c } else { b };
                push(Part::Layer, conv(cin, mid, 1));
                push(Part::Layer, conv(mid, mid, 3).grouped(RESX_GROUPS));
                push(Part::Layer, conv(mid, b, 1));
            }
        }
        BlockKind::CspDark => {
            let act = half("active")?;
            push(Part::Split, conv(c, act, 1));
            for _ in 0..k {
                push(Part::Layer, conv(act, act, 1));
                push(Part::Layer, conv(act, act, 3));
            }
            push(Part::Transition, conv(act, act, 1));
        }
        BlockKind::CspRes => {
            let act = half("active")?;
            let mid = quarter(b, index)?;
            push(Part::Split, conv(c, act, 1));
            for _ in 0..k {
                push(Part::Layer, conv(act, mid, 1));
                push(Part::Layer, conv(mid, mid, 3));
                push(Part::Layer, conv(mid, act, 1));
            }
            push(Part::Transition, conv(act, act, 1));
        }
        BlockKind::CspResX => {
            let act = half("active")?;
            push(Part::Split, conv(c, act, 1));
            for _ in 0..k {
                push(Part::Layer, conv(act, act, 1));
                push(Part::Layer, conv(act, act, 3).grouped(RESX_GROUPS));
                push(Part::Layer, conv(act, act, 1));
            }
            push(Part::Transition, conv(act, act, 1));
        }
        BlockKind::Dense => {
            for j in 0..k {
                push(Part::Layer, conv(b + j * g, g, 1));
            }
        }
        BlockKind::Osa => {
            push(Part::Layer, conv(b, g, 1));
            for _ in 1..k {
                push(Part::Layer, conv(g, g, 1));
            }
            let total = b + k * g;
            push(Part::Aggregation, conv(total, total.div_ceil(2), 1));
        }
        BlockKind::CspOsa => {
            for _ in 0..k {
                push(Part::Layer, conv(g, g, 1));
            }
            push(Part::Transition, conv(k * g, k * g, 1));
        }
        BlockKind::CspOsaPcb => {
            for _ in 0..k {
                push(Part::Layer, conv(g, g, 1));
            }
            let active = block
                .partition_width
                .expect("validated PCB stages record a partition");
            push(Part::Transition, conv(active, active, 1));
        }
    }
    Ok(())
}

fn quarter(b: u32, stage: usize) -> Result<u32, ExpandError> {
    match b / 4 {
        0 => Err(ExpandError::Unsplittable {
            stage,
            channels: b,
            path: "b/4",
        }),
        n => Ok(n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{BlockSpec, Role, Stage, TensorShape};

    fn single(block: BlockSpec, size: u32) -> NetworkSpec {
        let c = block.base_channels;
        let mut spec = NetworkSpec::new("t", TensorShape::new(size, size, c));
        spec.push(Stage::new(block, Role::Backbone));
        spec
    }

    fn channels(list: &[ExpandedConv]) -> Vec<(u32, u32)> {
        list.iter()
            .map(|e| (e.conv.in_channels, e.conv.out_channels))
            .collect()
    }

    #[test]
    fn dark_layer_is_pointwise_then_3x3() {
        let out = expand(&single(BlockSpec::new(BlockKind::Dark, 1, 64), 16)).unwrap();
        assert_eq!(channels(&out), vec![(64, 32), (32, 64)]);
        assert_eq!(out[0].conv.kernel, 1);
        assert_eq!(out[1].conv.kernel, 3);
    }

    #[test]
    fn res_two_repeats_gives_six_primitives() {
        let out = expand(&single(BlockSpec::new(BlockKind::Res, 2, 64), 16)).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(channels(&out[..3]), vec![(64, 16), (16, 16), (16, 64)]);
    }

    #[test]
    fn resx_uses_32_groups() {
        let out = expand(&single(BlockSpec::new(BlockKind::ResX, 1, 64), 8)).unwrap();
        assert_eq!(channels(&out), vec![(64, 32), (32, 32), (32, 64)]);
        assert_eq!(out[1].conv.groups, 32);
    }

    #[test]
    fn osa_plan_and_transition() {
        let spec = single(BlockSpec::new(BlockKind::Osa, 3, 64).with_growth(32), 8);
        let out = expand(&spec).unwrap();
        assert_eq!(
            channels(&out),
            vec![(64, 32), (32, 32), (32, 32), (160, 80)]
        );
        assert_eq!(out[3].part, Part::Aggregation);
    }

    #[test]
    fn downsampling_prepends_strided_3x3() {
        let mut spec = NetworkSpec::new("t", TensorShape::new(32, 32, 32));
        spec.push(Stage::new(BlockSpec::new(BlockKind::Dark, 1, 64), Role::Backbone).downsampled());
        let out = expand(&spec).unwrap();
        assert_eq!(out[0].part, Part::Downsample);
        assert_eq!(out[0].conv.stride, 2);
        assert_eq!((out[0].conv.width, out[0].conv.in_channels), (16, 32));
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn odd_channels_round_down_on_inner_paths() {
        let out = expand(&single(BlockSpec::new(BlockKind::Dark, 1, 65), 4)).unwrap();
        assert_eq!(channels(&out), vec![(65, 32), (32, 65)]);
        let out = expand(&single(BlockSpec::new(BlockKind::Res, 1, 67), 4)).unwrap();
        assert_eq!(channels(&out), vec![(67, 16), (16, 16), (16, 67)]);
    }

    #[test]
    fn unsplittable_channels_report_stage() {
        let err = expand(&single(BlockSpec::new(BlockKind::Res, 1, 3), 4)).unwrap_err();
        assert_eq!(
            err,
            ExpandError::Unsplittable {
                stage: 0,
                channels: 3,
                path: "b/4"
            }
        );
        assert!(expand(&single(BlockSpec::new(BlockKind::Dark, 1, 1), 4)).is_err());
    }

    #[test]
    fn every_primitive_is_valid_and_chains_within_layers() {
        let spec = single(BlockSpec::new(BlockKind::CspRes, 3, 128), 8);
        let out = expand(&spec).unwrap();
        assert!(out.iter().all(|e| e.conv.is_valid()));
        for pair in out.windows(2) {
            assert_eq!(pair[0].conv.out_channels, pair[1].conv.in_channels);
        }
    }
}
