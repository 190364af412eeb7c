//! Closed-form cost model.
//!
//! Per-layer FLOP formulas for every block family, scaling multipliers, the
//! memory access cost of a convolution, block-level CIO, and a whole-network
//! analyzer that evaluates each stage algebraically (no expansion). FLOPs are
//! multiply-accumulates.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{BlockKind, ExpandError, NetworkSpec, Role, RESX_GROUPS};
use crate::scale::receptive_field;

pub type Rational = Ratio<u128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("growth rate required for kind {0}")]
    MissingGrowth(BlockKind),
    #[error("{0} is not a computational block")]
    NotABlock(BlockKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCost {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub role: Role,
    pub kind: BlockKind,
    pub flops: u128,
    pub params: u128,
    pub mac: u128,
    pub cio: u128,
    pub receptive_field: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub flops: u128,
    pub params: u128,
    pub mac: u128,
    pub cio: u128,
    /// Largest receptive field over all stages.
    pub receptive_field: u128,
    pub per_stage: Vec<StageCost>,
}

impl CostReport {
    pub fn from_stages(per_stage: Vec<StageCost>) -> Self {
        let mut r = CostReport {
            flops: 0,
            params: 0,
            mac: 0,
            cio: 0,
            receptive_field: 0,
            per_stage,
        };
        for s in &r.per_stage {
            r.flops += s.flops;
            r.params += s.params;
            r.mac += s.mac;
            r.cio += s.cio;
            r.receptive_field = r.receptive_field.max(s.receptive_field);
        }
        r
    }

    /// FLOPs summed over the stages matching `pred`.
    pub fn flops_where(&self, pred: impl Fn(&StageCost) -> bool) -> u128 {
        self.per_stage.iter().filter(|s| pred(s)).map(|s| s.flops).sum()
    }

    pub fn params_where(&self, pred: impl Fn(&StageCost) -> bool) -> u128 {
        self.per_stage.iter().filter(|s| pred(s)).map(|s| s.params).sum()
    }

    pub fn neck_flops(&self) -> u128 {
        self.flops_where(|s| s.role.is_neck())
    }
}

fn round_nearest(r: Rational) -> u128 {
    (r.numer() * 2 + r.denom()) / (r.denom() * 2)
}

/// FLOPs of `k` layers of one block family at `w x h` with base channels `b`.
///
/// CSP forms include the split and transition; the OSA form counts the layers
/// only (not the aggregation). `CspOSA_PCB` uses the unrounded even partition.
pub fn layer_flops(
    kind: BlockKind,
    w: u32,
    h: u32,
    k: u32,
    b: u32,
    g: Option<u32>,
) -> Result<u128, CostError> {
    let wh = w as u128 * h as u128;
    let k = k as u128;
    let b = b as u128;
    let bb = b * b;
    let growth = || g.map(u128::from).ok_or(CostError::MissingGrowth(kind));
    let exact = |num: u128, den: u128| round_nearest(Rational::new(num, den));
    Ok(match kind {
        BlockKind::Res => exact(17 * wh * k * bb, 16),
        BlockKind::ResX => exact(137 * wh * k * bb, 128),
        BlockKind::Dark => 5 * wh * k * bb,
        // whb^2 (3/4 + 13k/16) = whb^2 (12 + 13k) / 16
        BlockKind::CspRes => exact(wh * bb * (12 + 13 * k), 16),
        // whb^2 (3/4 + 73k/128) = whb^2 (96 + 73k) / 128
        BlockKind::CspResX => exact(wh * bb * (96 + 73 * k), 128),
        // whb^2 (3/4 + 5k/2) = whb^2 (3 + 10k) / 4
        BlockKind::CspDark => exact(wh * bb * (3 + 10 * k), 4),
        BlockKind::Dense => {
            let g = growth()?;
            wh * g * b * k + exact(wh * g * g * k * (k - 1), 2)
        }
        BlockKind::Osa => {
            let g = growth()?;
            wh * b * g + wh * g * g * (k - 1)
        }
        BlockKind::CspOsa => {
            let g = growth()?;
            wh * (k * g * g + k * k * g * g)
        }
        BlockKind::CspOsaPcb => {
            let g = growth()?;
            let s = (b + k * g).div_ceil(2);
            wh * (k * g * g + s * s)
        }
        other => return Err(CostError::NotABlock(other)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleAxis {
    Size,
    Depth,
    Width,
}

/// Cost multiplier of one scaling factor: size and width act quadratically,
/// depth linearly.
pub fn apply_scaling(base: u128, axis: ScaleAxis, factor: Rational) -> u128 {
    let m = match axis {
        ScaleAxis::Size | ScaleAxis::Width => factor * factor,
        ScaleAxis::Depth => factor,
    };
    round_nearest(m * base)
}

/// Memory access cost `hw(C_in + C_out) + K C_in C_out`, `K` = kernel area.
pub fn mac(h: u32, w: u32, c_in: u32, c_out: u32, kernel_area: u32) -> u128 {
    let hw = h as u128 * w as u128;
    hw * (c_in as u128 + c_out as u128) + kernel_area as u128 * c_in as u128 * c_out as u128
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CioVariant {
    Osa,
    CspOsa,
    CspOsaPcb,
}

impl CioVariant {
    pub const ALL: [CioVariant; 3] = [CioVariant::Osa, CioVariant::CspOsa, CioVariant::CspOsaPcb];

    pub fn kind(self) -> BlockKind {
        match self {
            CioVariant::Osa => BlockKind::Osa,
            CioVariant::CspOsa => BlockKind::CspOsa,
            CioVariant::CspOsaPcb => BlockKind::CspOsaPcb,
        }
    }

    pub fn of_kind(kind: BlockKind) -> Option<Self> {
        match kind {
            BlockKind::Osa => Some(CioVariant::Osa),
            BlockKind::CspOsa => Some(CioVariant::CspOsa),
            BlockKind::CspOsaPcb => Some(CioVariant::CspOsaPcb),
            _ => None,
        }
    }
}

/// Block CIO of the three OSA variants.
pub fn cio(variant: CioVariant, b: u32, g: u32, k: u32) -> u128 {
    let (b, g, k) = (b as u128, g as u128, k as u128);
    let total = b + k * g;
    match variant {
        CioVariant::Osa => b * g + (k - 1) * g * g + round_nearest(Rational::new(total * total, 2)),
        CioVariant::CspOsa => k * g * g + (k * g) * (k * g),
        CioVariant::CspOsaPcb => k * g * g + round_nearest(Rational::new(total * total, 4)),
    }
}

/// The variant with the smallest CIO; ties resolve in declaration order.
pub fn cio_argmin(b: u32, g: u32, k: u32) -> CioVariant {
    CioVariant::ALL
        .into_iter()
        .min_by_key(|&v| cio(v, b, g, k))
        .expect("three variants")
}

/// CSPDarknet stage including its downsampling: `whb^2 (9/4 + 3/4 + 5k/2)`.
pub fn csp_stage_flops(w: u32, h: u32, k: u32, b: u32) -> u128 {
    let wh = w as u128 * h as u128;
    let bb = b as u128 * b as u128;
    // (9 + 3 + 10k) / 4
    round_nearest(Rational::new(wh * bb * (12 + 10 * k as u128), 4))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualFamily {
    Res,
    Resx,
    Dark,
}

impl ResidualFamily {
    pub const ALL: [ResidualFamily; 3] = [ResidualFamily::Res, ResidualFamily::Resx, ResidualFamily::Dark];

    pub fn kinds(self) -> (BlockKind, BlockKind) {
        match self {
            ResidualFamily::Res => (BlockKind::Res, BlockKind::CspRes),
            ResidualFamily::Resx => (BlockKind::ResX, BlockKind::CspResX),
            ResidualFamily::Dark => (BlockKind::Dark, BlockKind::CspDark),
        }
    }

    /// Per-layer coefficients (of `whb^2`) without and with CSP-ization.
    fn coefficients(self) -> (Rational, Rational) {
        match self {
            ResidualFamily::Res => (Rational::new(17, 16), Rational::new(13, 16)),
            ResidualFamily::Resx => (Rational::new(137, 128), Rational::new(73, 128)),
            ResidualFamily::Dark => (Rational::new(5, 1), Rational::new(5, 2)),
        }
    }
}

/// Limit of `1 - csp/original` as the number of layers grows without bound.
pub fn asymptotic_csp_saving(family: ResidualFamily) -> Rational {
    let (orig, csp) = family.coefficients();
    Rational::from_integer(1) - csp / orig
}

/// `1 - csp/original` at a finite layer count (overhead `3/4 whb^2` included).
pub fn csp_saving_at(family: ResidualFamily, k: u32) -> Rational {
    let (orig, csp) = family.coefficients();
    let k = Rational::from_integer(k as u128);
    let overhead = Rational::new(3, 4);
    Rational::from_integer(1) - (overhead + csp * k) / (orig * k)
}

/// Per-pixel weight count, summed `C_in + C_out`, and summed `C_in C_out`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct PerPixel {
    weights: u128,
    io: u128,
    products: u128,
}

impl std::ops::Add for PerPixel {
    type Output = PerPixel;
    fn add(self, o: PerPixel) -> PerPixel {
        PerPixel {
            weights: self.weights + o.weights,
            io: self.io + o.io,
            products: self.products + o.products,
        }
    }
}

fn unsplittable(stage: usize, channels: u32, path: &'static str) -> ExpandError {
    ExpandError::Unsplittable {
        stage,
        channels,
        path,
    }
}

/// Closed-form cost of one stage body. `c` is the channel count entering
/// the block (after any downsampling), `c_prev` the stage input.
#[allow(clippy::too_many_arguments)]
fn stage_per_pixel(
    index: usize,
    kind: BlockKind,
    c_prev: u128,
    c: u128,
    b: u32,
    g: u128,
    k: u128,
    kernel: u128,
    partition: u128,
    downsample: bool,
) -> Result<PerPixel, ExpandError> {
    let bw = b as u128;
    let half = || match b / 2 {
        0 => Err(unsplittable(index, b, "b/2")),
        n => Ok(n as u128),
    };
    let quarter = || match b / 4 {
        0 => Err(unsplittable(index, b, "b/4")),
        n => Ok(n as u128),
    };
    let groups = RESX_GROUPS as u128;

    let ds = if downsample && kind != BlockKind::Conv {
        PerPixel {
            weights: 9 * c_prev * bw,
            io: c_prev + bw,
            products: c_prev * bw,
        }
    } else {
        PerPixel::default()
    };

    let body = match kind {
        BlockKind::Spp | BlockKind::Upsample => PerPixel::default(),
        BlockKind::Conv => {
            let kk = kernel * kernel;
            let first = if downsample { c_prev } else { c };
            PerPixel {
                weights: kk * (first * bw + (k - 1) * bw * bw),
                io: first + bw + (k - 1) * 2 * bw,
                products: first * bw + (k - 1) * bw * bw,
            }
        }
        BlockKind::Dark => {
            let m = half()?;
            PerPixel {
                weights: c * m + 9 * m * bw + (k - 1) * 10 * bw * m,
                io: (c + m) + (m + bw) + (k - 1) * 2 * (bw + m),
                products: c * m + m * bw + (k - 1) * 2 * bw * m,
            }
        }
        BlockKind::Res => {
            let q = quarter()?;
            PerPixel {
                weights: c * q + 9 * q * q + q * bw + (k - 1) * (2 * bw * q + 9 * q * q),
                io: (c + q) + 2 * q + (q + bw) + (k - 1) * (2 * bw + 4 * q),
                products: c * q + q * q + q * bw + (k - 1) * (2 * bw * q + q * q),
            }
        }
        BlockKind::ResX => {
            let m = half()?;
            PerPixel {
                weights: c * m + 9 * m * m / groups + m * bw + (k - 1) * (2 * bw * m + 9 * m * m / groups),
                io: (c + m) + 2 * m + (m + bw) + (k - 1) * (2 * bw + 4 * m),
                products: c * m + m * m + m * bw + (k - 1) * (2 * bw * m + m * m),
            }
        }
        BlockKind::CspDark => {
            let a = half()?;
            PerPixel {
                weights: c * a + k * 10 * a * a + a * a,
                io: (c + a) + k * 4 * a + 2 * a,
                products: c * a + k * 2 * a * a + a * a,
            }
        }
        BlockKind::CspRes => {
            let a = half()?;
            let q = quarter()?;
            PerPixel {
                weights: c * a + k * (2 * a * q + 9 * q * q) + a * a,
                io: (c + a) + k * (2 * a + 4 * q) + 2 * a,
                products: c * a + k * (2 * a * q + q * q) + a * a,
            }
        }
        BlockKind::CspResX => {
            let a = half()?;
            PerPixel {
                weights: c * a + k * (2 * a * a + 9 * a * a / groups) + a * a,
                io: (c + a) + k * 6 * a + 2 * a,
                products: c * a + k * 3 * a * a + a * a,
            }
        }
        BlockKind::Dense => {
            let w = k * bw * g + g * g * k * (k - 1) / 2;
            PerPixel {
                weights: w,
                io: k * bw + g * k * (k - 1) / 2 + k * g,
                products: w,
            }
        }
        BlockKind::Osa => {
            let total = bw + k * g;
            let t = total.div_ceil(2);
            let w = bw * g + (k - 1) * g * g + total * t;
            PerPixel {
                weights: w,
                io: (bw + g) + (k - 1) * 2 * g + total + t,
                products: w,
            }
        }
        BlockKind::CspOsa => {
            let w = k * g * g + k * g * k * g;
            PerPixel {
                weights: w,
                io: 4 * k * g,
                products: w,
            }
        }
        BlockKind::CspOsaPcb => {
            let s = partition;
            let w = k * g * g + s * s;
            PerPixel {
                weights: w,
                io: 2 * k * g + 2 * s,
                products: w,
            }
        }
    };
    Ok(ds + body)
}

/// Closed-form cost report of a whole network.
pub fn analyze(spec: &NetworkSpec) -> Result<CostReport, ExpandError> {
    let shapes = spec.resolve()?;
    let fields = receptive_field(spec)?;
    let mut per_stage = Vec::with_capacity(spec.stages.len());
    for (i, (stage, shape)) in spec.stages.iter().zip(&shapes).enumerate() {
        let block = &stage.block;
        let pp = stage_per_pixel(
            i,
            block.kind,
            shape.input.channels as u128,
            shape.block_input.channels as u128,
            block.base_channels,
            block.growth.unwrap_or(0) as u128,
            block.repeats as u128,
            block.kernel_size() as u128,
            block.partition_width.unwrap_or(0) as u128,
            stage.downsample,
        )?;
        let wh = shape.block_input.pixels();
        per_stage.push(StageCost {
            index: i,
            name: stage.name.clone(),
            role: stage.role,
            kind: block.kind,
            flops: wh * pp.weights,
            params: pp.weights,
            mac: wh * pp.io + pp.weights,
            cio: pp.products,
            receptive_field: fields[i],
        });
    }
    Ok(CostReport::from_stages(per_stage))
}

/// Relative reduction `1 - after/before` (zero when `before` is zero).
pub fn reduction(before: u128, after: u128) -> f64 {
    if before == 0 {
        0.0
    } else {
        1.0 - after as f64 / before as f64
    }
}
