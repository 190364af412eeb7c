//! Shared inputs for the benchmarks.

use cspscale::{preset, NetworkSpec};

/// Presets exercised by the benchmarks, from smallest to largest.
pub const BENCH_PRESETS: [&str; 4] = ["yolov4-tiny", "yolov4-csp", "yolov4-p5", "yolov4-p7"];

pub fn bench_spec(name: &str) -> NetworkSpec {
    preset(name).expect("benchmark presets exist").spec
}
