//! Brute-force cost counting over expanded convolutions.
//!
//! Everything here is computed by walking [`expand`]'s output one
//! convolution at a time. It shares no formulas with [`crate::cost`] and is
//! the reference the closed forms are checked against.

use num_rational::Ratio;

use crate::cost::{CostReport, StageCost};
use crate::ir::{expand, BlockKind, ConvPrimitive, ExpandError, ExpandedConv, NetworkSpec, Source};

/// Multiply-accumulates of one convolution (one MAC counted as one FLOP).
pub fn primitive_flops(p: &ConvPrimitive) -> u128 {
    p.width as u128 * p.height as u128 * primitive_params(p)
}

/// Weights of one convolution, bias excluded.
pub fn primitive_params(p: &ConvPrimitive) -> u128 {
    let k = p.kernel as u128;
    k * k * p.in_channels as u128 * p.out_channels as u128 / p.groups as u128
}

/// Memory access cost: `hw(C_in + C_out) + K C_in C_out` with `K` the kernel
/// area (grouped weights divided by the group count).
pub fn primitive_mac(p: &ConvPrimitive) -> u128 {
    let hw = p.width as u128 * p.height as u128;
    hw * (p.in_channels as u128 + p.out_channels as u128) + primitive_params(p)
}

/// Channel-product I/O of one convolution.
pub fn primitive_cio(p: &ConvPrimitive) -> u128 {
    p.in_channels as u128 * p.out_channels as u128
}

/// Sums of the four additive metrics over a set of convolutions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub flops: u128,
    pub params: u128,
    pub mac: u128,
    pub cio: u128,
}

impl Tally {
    pub fn add(&mut self, p: &ConvPrimitive) {
        self.flops += primitive_flops(p);
        self.params += primitive_params(p);
        self.mac += primitive_mac(p);
        self.cio += primitive_cio(p);
    }

    pub fn of<'a>(convs: impl IntoIterator<Item = &'a ConvPrimitive>) -> Self {
        let mut t = Tally::default();
        for p in convs {
            t.add(p);
        }
        t
    }
}

/// FLOPs of the parts covered by the per-layer closed forms (layers, CSP
/// split and transition; no downsampling or OSA aggregation).
pub fn layer_part_flops(expanded: &[ExpandedConv]) -> u128 {
    expanded
        .iter()
        .filter(|e| e.part.in_layer_formula())
        .map(|e| primitive_flops(&e.conv))
        .sum()
}

/// Full cost report by enumeration.
pub fn oracle_cost(spec: &NetworkSpec) -> Result<CostReport, ExpandError> {
    let shapes = spec.resolve()?;
    let expanded = expand(spec)?;

    let mut tallies = vec![Tally::default(); spec.stages.len()];
    for e in &expanded {
        tallies[e.stage].add(&e.conv);
    }

    // Receptive field: walk each stage's convolutions in order, starting from
    // the widest field among its sources.
    let mut fields: Vec<(Ratio<u128>, Ratio<u128>)> = Vec::with_capacity(spec.stages.len());
    let mut cursor = 0usize;
    for (i, shape) in shapes.iter().enumerate() {
        let (mut rf, mut jump) = shape
            .sources
            .iter()
            .map(|s| match *s {
                Source::Network => (Ratio::from_integer(1), Ratio::from_integer(1)),
                Source::Stage(j) => fields[j],
            })
            .fold(None, |acc: Option<(Ratio<u128>, Ratio<u128>)>, (r, j)| match acc {
                None => Some((r, j)),
                Some((ar, aj)) => Some((ar.max(r), aj)),
            })
            .expect("stages have at least one source");
        if spec.stages[i].block.kind == BlockKind::Upsample {
            jump /= 2;
        }
        while cursor < expanded.len() && expanded[cursor].stage == i {
            let p = &expanded[cursor].conv;
            rf += jump * (p.kernel as u128 - 1);
            if p.stride == 2 {
                jump *= 2;
            }
            cursor += 1;
        }
        fields.push((rf, jump));
    }

    let per_stage = spec
        .stages
        .iter()
        .enumerate()
        .map(|(i, stage)| {
            let t = tallies[i];
            StageCost {
                index: i,
                name: stage.name.clone(),
                role: stage.role,
                kind: stage.block.kind,
                flops: t.flops,
                params: t.params,
                mac: t.mac,
                cio: t.cio,
                receptive_field: fields[i].0.ceil().to_integer(),
            }
        })
        .collect();
    Ok(CostReport::from_stages(per_stage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{BlockSpec, Role, Stage, TensorShape};

    fn single(kind: BlockKind, k: u32, b: u32, size: u32) -> NetworkSpec {
        let mut spec = NetworkSpec::new("t", TensorShape::new(size, size, b));
        spec.push(Stage::new(BlockSpec::new(kind, k, b), Role::Backbone));
        spec
    }

    #[test]
    fn primitive_flop_examples() {
        assert_eq!(
            primitive_flops(&ConvPrimitive::new(16, 16, 64, 32, 1)),
            524_288
        );
        assert_eq!(
            primitive_flops(&ConvPrimitive::new(16, 16, 32, 64, 3)),
            4_718_592
        );
        assert_eq!(
            primitive_flops(&ConvPrimitive::new(1, 1, 32, 32, 3).grouped(32)),
            288
        );
    }

    #[test]
    fn table_one_layers_at_16x16() {
        let dark = oracle_cost(&single(BlockKind::Dark, 1, 64, 16)).unwrap();
        assert_eq!(dark.flops, 5_242_880);
        let res = oracle_cost(&single(BlockKind::Res, 1, 64, 16)).unwrap();
        assert_eq!(res.flops, 1_114_112);
        let resx = oracle_cost(&single(BlockKind::ResX, 1, 64, 16)).unwrap();
        assert_eq!(resx.flops, 1_122_304);
    }

    #[test]
    fn params_exclude_bias_and_mac_follows_eq_form() {
        let p = ConvPrimitive::new(8, 8, 32, 32, 3);
        assert_eq!(primitive_params(&p), 9 * 32 * 32);
        assert_eq!(primitive_mac(&p), 13_312);
    }

    #[test]
    fn receptive_field_of_stacked_convs() {
        let mut spec = NetworkSpec::new("t", TensorShape::new(32, 32, 8));
        spec.push(Stage::new(BlockSpec::conv(3, 8), Role::Backbone));
        assert_eq!(oracle_cost(&spec).unwrap().receptive_field, 3);
        spec.push(Stage::new(BlockSpec::conv(3, 8), Role::Backbone));
        assert_eq!(oracle_cost(&spec).unwrap().receptive_field, 5);
    }
}
