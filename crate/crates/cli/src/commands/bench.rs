//! `walshnet bench`: forward-pass timings, operation counts and memory
//! estimates of a WHT layer and its convolutional alternatives.

use clap::Args;
use walshnet_core::Dims4;
use walshnet_train::bench::{run_bench, BenchKind, BenchOptions, MIN_REPETITIONS, MIN_WARMUPS};

use crate::error::{CliError, Result};
use crate::output::{render, Format};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Layer to time; repeat the flag or pass `all` for every layer.
    #[arg(long = "layer", required = true)]
    pub layers: Vec<String>,
    /// Input dims as `n,w,h,c`.
    #[arg(long, default_value = "10,8,8,1024")]
    pub dims: String,
    #[arg(long, default_value_t = MIN_REPETITIONS)]
    pub repetitions: usize,
    #[arg(long, default_value_t = MIN_WARMUPS)]
    pub warmups: usize,
}

/// Parses `n,w,h,c` with every entry positive.
pub fn parse_dims(s: &str) -> Result<Dims4> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().ok().filter(|&v| v > 0))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Usage(format!("--dims `{s}`: expected four positive integers n,w,h,c")))?;
    match parts[..] {
        [n, w, h, c] => Ok(Dims4::new(n, w, h, c)),
        _ => Err(CliError::Usage(format!("--dims `{s}`: expected four positive integers n,w,h,c"))),
    }
}

pub fn parse_layers(names: &[String]) -> Result<Vec<BenchKind>> {
    let mut kinds = Vec::new();
    for name in names {
        if name == "all" {
            kinds.extend(BenchKind::ALL);
        } else {
            kinds.push(BenchKind::parse(name)?);
        }
    }
    Ok(kinds)
}

pub fn run(args: &BenchArgs, seed: u64, format: Format) -> Result<()> {
    let dims = parse_dims(&args.dims)?;
    let kinds = parse_layers(&args.layers)?;
    let opts = BenchOptions {
        repetitions: args.repetitions,
        warmups: args.warmups,
        seed,
    };
    let results = kinds
        .into_iter()
        .map(|k| run_bench(k, dims, &opts))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    print!("{}", render(format, &results));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parse_strictly() {
        assert_eq!(parse_dims("10,8,8,1024").unwrap(), Dims4::new(10, 8, 8, 1024));
        assert_eq!(parse_dims(" 1, 2,3 ,4").unwrap(), Dims4::new(1, 2, 3, 4));
        for bad in ["1,2,3", "1,2,3,4,5", "1,0,3,4", "a,b,c,d", ""] {
            assert!(parse_dims(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn layer_names_expand_all() {
        assert_eq!(parse_layers(&["all".into()]).unwrap().len(), BenchKind::ALL.len());
        assert_eq!(parse_layers(&["conv3x3".into()]).unwrap(), vec![BenchKind::Conv3x3]);
        assert!(parse_layers(&["conv5x5".into()]).is_err());
    }
}
