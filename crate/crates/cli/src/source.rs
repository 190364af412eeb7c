use std::path::Path;

use anyhow::{Context, Result};
use cspscale::{parse_spec, preset, NetworkSpec};

use crate::error::usage;

pub const MIN_INPUT: u32 = 32;

/// Loads an architecture file if `source` names an existing file, otherwise
/// resolves it as a preset.
pub fn load(source: &str) -> Result<NetworkSpec> {
    let path = Path::new(source);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {source}"))?;
        return parse_spec(&text).with_context(|| format!("in {source}"));
    }
    if source.ends_with(".toml") || source.contains('/') {
        return Err(usage(format!("cannot read architecture file {source}")));
    }
    Ok(preset(source)?.spec)
}

/// Loads `source` and applies an optional square input override.
pub fn load_with_input(source: &str, input: Option<u32>) -> Result<NetworkSpec> {
    let spec = load(source)?;
    match input {
        None => Ok(spec),
        Some(size) if size < MIN_INPUT => Err(usage(format!(
            "--input must be at least {MIN_INPUT}, got {size}"
        ))),
        Some(size) => {
            let spec = spec.with_input_size(size);
            spec.validate()
                .with_context(|| format!("{} at input {size}", spec.name))?;
            Ok(spec)
        }
    }
}
