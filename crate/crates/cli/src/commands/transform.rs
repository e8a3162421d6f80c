//! `walshnet transform`: applies the 1D transform to a vector read from a
//! text file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use walshnet_core::{fwht_1d, Normalization, Ordering, WalshSpec};

use crate::error::{CliError, Result};
use crate::output::{render, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderingArg {
    Hadamard,
    WalshSequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizationArg {
    None,
    Orthonormal,
    Inverse,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// File of whitespace-separated reals; its length must be a power of two.
    pub input: PathBuf,
    /// Expected log2 of the input length.
    #[arg(long = "order", short = 'k')]
    pub order: Option<u32>,
    #[arg(long, value_enum, default_value = "hadamard")]
    pub ordering: OrderingArg,
    #[arg(long, value_enum, default_value = "none")]
    pub normalization: NormalizationArg,
    /// Apply the transform and then its inverse, which reproduces the input.
    #[arg(long)]
    pub round_trip: bool,
    /// Write the result here instead of standard output.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Entry {
    index: usize,
    value: f64,
}

/// Parses whitespace-separated finite reals.
pub fn parse_vector(path: &Path, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .enumerate()
        .map(|(i, tok)| match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(CliError::input(path, format!("value {} (`{tok}`) is not a finite number", i + 1))),
        })
        .collect()
}

fn spec_for(len: usize, args: &TransformArgs, inverse: bool) -> Result<WalshSpec> {
    let ordering = match args.ordering {
        OrderingArg::Hadamard => Ordering::Hadamard,
        OrderingArg::WalshSequency => Ordering::WalshSequency,
    };
    let normalization = match (args.normalization, inverse) {
        (NormalizationArg::Orthonormal, _) => Normalization::Orthonormal,
        (NormalizationArg::None, false) | (NormalizationArg::Inverse, true) => Normalization::None,
        (NormalizationArg::Inverse, false) | (NormalizationArg::None, true) => Normalization::Inverse,
    };
    Ok(WalshSpec::for_len(len, ordering, normalization)?)
}

/// The transformed vector, or with `round_trip` the transform followed by
/// its inverse.
pub fn transform_values(values: &[f64], args: &TransformArgs) -> Result<Vec<f64>> {
    let once = fwht_1d(values, spec_for(values.len(), args, false)?)?;
    Ok(if args.round_trip {
        fwht_1d(&once, spec_for(values.len(), args, true)?)?
    } else {
        once
    })
}

pub fn run(args: &TransformArgs, format: Format) -> Result<()> {
    let text = std::fs::read_to_string(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let values = parse_vector(&args.input, &text)?;
    if values.is_empty() {
        return Err(CliError::input(&args.input, "no values"));
    }
    if let Some(k) = args.order {
        let expected = 1usize.checked_shl(k).filter(|_| k < usize::BITS);
        if expected != Some(values.len()) {
            return Err(CliError::input(
                &args.input,
                format!("expected 2^{k} values, found {}", values.len()),
            ));
        }
    }
    let result = transform_values(&values, args).map_err(|e| CliError::input(&args.input, e.to_string()))?;
    let text = match format {
        Format::Human => result.iter().map(f64::to_string).collect::<Vec<_>>().join(" ") + "\n",
        other => {
            let entries: Vec<Entry> = result.iter().enumerate().map(|(index, &value)| Entry { index, value }).collect();
            render(other, &entries)
        }
    };
    match &args.output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
