use proptest::prelude::*;

use cspscale::cost::{apply_scaling, cio, layer_flops, CioVariant, Rational, ScaleAxis};
use cspscale::ir::{BlockKind, BlockSpec, NetworkSpec, Role, Stage, TensorShape};
use cspscale::presets::{large_model, width_grid};
use cspscale::{
    analyze, cspize, expand, oracle_cost, parse_spec, preset, receptive_field, serialize_spec,
    Scope, PRESET_NAMES,
};

fn kind_strategy() -> impl Strategy<Value = BlockKind> {
    prop::sample::select(BlockKind::BLOCKS.to_vec())
}

/// A valid block whose input width equals `b`.
fn block_for(kind: BlockKind, k: u32, b_units: u32, g_frac: u32) -> BlockSpec {
    let b = if kind.is_grouped() { 64 * b_units } else { 8 * b_units };
    let g = (b * g_frac / 4).max(1);
    let g = if kind == BlockKind::CspOsa { g.min(b - 1) } else { g };
    let block = BlockSpec::new(kind, k, b);
    match kind {
        BlockKind::CspOsaPcb => block.with_growth(g).with_partition((b + k * g).div_ceil(2)),
        kind if kind.needs_growth() => block.with_growth(g),
        _ => block,
    }
}

/// Chains of blocks separated by stride-2 transitions so every stage gets
/// exactly `b` input channels.
fn spec_strategy() -> impl Strategy<Value = NetworkSpec> {
    (
        4u32..=40,
        prop::collection::vec((kind_strategy(), 1u32..=4, 1u32..=4, 1u32..=3, any::<bool>()), 1..5),
    )
        .prop_map(|(size, blocks)| {
            let mut spec = NetworkSpec::new("random", TensorShape::new(size, size + 3, 3));
            for (kind, k, bu, gf, ds) in blocks {
                let block = block_for(kind, k, bu, gf);
                let b = block.base_channels;
                spec.push(Stage::new(BlockSpec::conv(3, b), Role::Backbone).downsampled());
                let mut stage = Stage::new(block, if ds { Role::Backbone } else { Role::NeckTopdown });
                stage.name = None;
                spec.push(stage);
                let out = spec.stages.last().unwrap().block.output_channels();
                if out != b {
                    spec.push(Stage::new(BlockSpec::conv(1, b), Role::Head));
                }
            }
            spec
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_specs_validate_and_round_trip(spec in spec_strategy()) {
        spec.validate().unwrap();
        let again = parse_spec(&serialize_spec(&spec)).unwrap();
        prop_assert_eq!(again, spec);
    }

    #[test]
    fn closed_form_matches_oracle(spec in spec_strategy()) {
        prop_assert_eq!(analyze(&spec).unwrap(), oracle_cost(&spec).unwrap());
    }

    #[test]
    fn expansion_is_deterministic(spec in spec_strategy()) {
        prop_assert_eq!(expand(&spec).unwrap(), expand(&spec).unwrap());
    }

    #[test]
    fn totals_are_sums_of_stages(spec in spec_strategy()) {
        let r = oracle_cost(&spec).unwrap();
        prop_assert_eq!(r.flops, r.per_stage.iter().map(|s| s.flops).sum::<u128>());
        prop_assert_eq!(r.params, r.per_stage.iter().map(|s| s.params).sum::<u128>());
        prop_assert_eq!(r.mac, r.per_stage.iter().map(|s| s.mac).sum::<u128>());
        prop_assert_eq!(r.cio, r.per_stage.iter().map(|s| s.cio).sum::<u128>());
    }

    #[test]
    fn concatenated_specs_add_up(a in spec_strategy(), b in spec_strategy()) {
        // Appending b's stages after a: b's first stage is a stride-2 conv
        // and thus insensitive to a's output width.
        let mut joined = a.clone();
        let mut tail = b.clone();
        tail.input = joined.resolve().unwrap().last().unwrap().output;
        joined.stages.extend(tail.stages.iter().cloned());
        let whole = oracle_cost(&joined).unwrap();
        let head = oracle_cost(&a).unwrap();
        let rest = oracle_cost(&tail).unwrap();
        prop_assert_eq!(whole.flops, head.flops + rest.flops);
        prop_assert_eq!(whole.params, head.params + rest.params);
    }

    #[test]
    fn cspize_is_idempotent_and_structural(spec in spec_strategy()) {
        let (once, _) = cspize(&spec, Scope::All).unwrap();
        let (twice, report) = cspize(&once, Scope::All).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(report.transform_log.is_empty());
        prop_assert_eq!(once.input, spec.input);
        prop_assert_eq!(once.stages.len(), spec.stages.len());
        for (x, y) in once.stages.iter().zip(&spec.stages) {
            prop_assert_eq!(x.block.repeats, y.block.repeats);
            prop_assert_eq!(x.block.base_channels, y.block.base_channels);
        }
    }

    #[test]
    fn layer_flops_monotone(kind in kind_strategy(), w in 1u32..32, h in 1u32..32, k in 1u32..8, bu in 1u32..8) {
        let b = if kind.is_grouped() { 64 * bu } else { 16 * bu };
        let g = kind.needs_growth().then_some(b / 2);
        let base = layer_flops(kind, w, h, k, b, g).unwrap();
        prop_assert!(layer_flops(kind, w + 1, h, k, b, g).unwrap() >= base);
        prop_assert!(layer_flops(kind, w, h + 1, k, b, g).unwrap() >= base);
        prop_assert!(layer_flops(kind, w, h, k + 1, b, g).unwrap() >= base);
        let wider = if kind.is_grouped() { b + 64 } else { b + 16 };
        let g2 = kind.needs_growth().then_some(b / 2);
        prop_assert!(layer_flops(kind, w, h, k, wider, g2).unwrap() >= base);
    }

    #[test]
    fn oracle_metrics_monotone_in_size(kind in kind_strategy(), k in 1u32..4, bu in 1u32..4, side in 2u32..20) {
        let block = block_for(kind, k, bu, 2);
        let b = block.base_channels;
        let at = |s: u32| {
            let mut spec = NetworkSpec::new("m", TensorShape::new(s, s, b));
            spec.push(Stage::new(block.clone(), Role::Backbone));
            oracle_cost(&spec).unwrap()
        };
        let (small, big) = (at(side), at(side + 1));
        prop_assert!(big.flops >= small.flops && big.mac >= small.mac);
        prop_assert!(big.params == small.params && big.cio == small.cio);
    }

    #[test]
    fn size_scaling_composes(x in 0u128..1_000_000_000, a in 1u128..6, b in 1u128..6) {
        let a = Rational::new(a, 2);
        let b = Rational::new(b, 3);
        let once = apply_scaling(x * 36, ScaleAxis::Size, a * b);
        let twice = apply_scaling(apply_scaling(x * 36, ScaleAxis::Size, a), ScaleAxis::Size, b);
        prop_assert_eq!(once, twice);
        prop_assert_eq!(apply_scaling(x, ScaleAxis::Depth, Rational::from_integer(1)), x);
    }

    #[test]
    fn pcb_beats_csp_osa_exactly_when_b_below_kg(b in 1u32..64, g in 1u32..64, k in 1u32..9) {
        let (b, g) = (4 * b, 4 * g);
        let pcb = cio(CioVariant::CspOsaPcb, b, g, k);
        let csp = cio(CioVariant::CspOsa, b, g, k);
        prop_assert_eq!(pcb < csp, b < k * g);
    }

    #[test]
    fn receptive_field_ignores_input_size(cells in 1u32..64) {
        // Necks concatenate upsampled maps, so inputs must divide by the stride.
        let size = 32 * cells;
        let spec = preset("yolov4-csp").unwrap().spec;
        prop_assert_eq!(
            receptive_field(&spec.with_input_size(size)).unwrap(),
            receptive_field(&spec).unwrap()
        );
    }
}

#[test]
fn receptive_field_ignores_width() {
    let reference = receptive_field(&large_model(6, 1280, Rational::from_integer(1))).unwrap();
    for w in width_grid() {
        assert_eq!(receptive_field(&large_model(6, 1280, w)).unwrap(), reference);
    }
}

#[test]
fn dense_and_osa_orders_of_growth_are_bounded() {
    for b in [64u32, 128, 256, 512, 1024] {
        let g = b / 4;
        for k in 1..=4u32 {
            let (w, h) = (8u32, 8u32);
            let wh = (w * h) as f64;
            let dense = layer_flops(BlockKind::Dense, w, h, k, b, Some(g)).unwrap() as f64;
            assert!(dense / (wh * (g * b * k) as f64) <= 2.0);
            let osa = layer_flops(BlockKind::Osa, w, h, k, b, Some(g)).unwrap() as f64;
            let lead = (wh * (b * g) as f64).max(wh * (k * g * g) as f64);
            assert!(osa / lead <= 2.0);
        }
    }
}

#[test]
fn presets_round_trip_and_agree_with_oracle() {
    for name in PRESET_NAMES {
        let spec = preset(name).unwrap().spec;
        assert_eq!(parse_spec(&serialize_spec(&spec)).unwrap(), spec, "{name}");
        assert_eq!(analyze(&spec).unwrap(), oracle_cost(&spec).unwrap(), "{name}");
    }
}
