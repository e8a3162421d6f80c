//! `walshnet paramcount`: per-layer and total parameter counts of a model
//! or of a single WHT layer.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use walshnet_core::{param_count, LayerConfig};
use walshnet_train::{presets, ExperimentConfig, Model, ModelSpec};

use crate::error::{CliError, Result};
use crate::output::{render, Format};

#[derive(Debug, Args)]
pub struct ParamcountArgs {
    /// Named model preset, instead of `--config`.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Compare the report with this file instead of printing it.
    #[arg(long)]
    pub golden: Option<PathBuf>,
}

/// What a parameter-count config describes.
#[derive(Debug, Clone, PartialEq)]
pub enum CountTarget {
    Model(ModelSpec),
    Layer(LayerConfig),
}

#[derive(Debug, Serialize)]
struct ModelRow {
    index: String,
    layer: String,
    output: String,
    trainable: usize,
    non_trainable: usize,
    replaced_conv: Option<usize>,
}

#[derive(Debug, Serialize)]
struct LayerRow {
    kind: String,
    in_channels: usize,
    out_channels: usize,
    block_size: Option<usize>,
    trainable: usize,
    replaced_conv: usize,
    reduction: f64,
}

/// Reads an experiment config, a model spec or a layer config, told apart
/// by their top-level keys.
pub fn parse_target(path: &Path, text: &str) -> Result<CountTarget> {
    let table: toml::Table = toml::from_str(text).map_err(|e| CliError::input(path, e.message().to_string()))?;
    let bad = |e: toml::de::Error| CliError::input(path, e.message().to_string());
    if table.contains_key("train") || table.contains_key("dataset") {
        let cfg = ExperimentConfig::parse(text).map_err(|e| CliError::input(path, e.to_string()))?;
        Ok(CountTarget::Model(cfg.model_spec()?))
    } else if table.contains_key("layers") {
        Ok(CountTarget::Model(toml::from_str(text).map_err(bad)?))
    } else if table.contains_key("kind") {
        Ok(CountTarget::Layer(toml::from_str(text).map_err(bad)?))
    } else {
        Err(CliError::input(
            path,
            "expected an experiment config, a model spec (`layers`) or a layer config (`kind`)",
        ))
    }
}

pub fn load_target(path: &Path) -> Result<CountTarget> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_target(path, &text)
}

/// The report for `target` rendered in `format`.
pub fn report(target: &CountTarget, format: Format) -> Result<String> {
    match target {
        CountTarget::Model(spec) => {
            let mut model = Model::<f64>::new(spec.clone())?;
            let totals = model.param_totals();
            let mut rows: Vec<ModelRow> = model
                .layer_summaries()
                .into_iter()
                .map(|s| ModelRow {
                    index: s.index.to_string(),
                    layer: s.label,
                    output: format!("{}x{}x{}", s.output.0, s.output.1, s.output.2),
                    trainable: s.trainable,
                    non_trainable: s.non_trainable,
                    replaced_conv: s.replaced_conv,
                })
                .collect();
            rows.push(ModelRow {
                index: String::new(),
                layer: "total".into(),
                output: String::new(),
                trainable: totals.trainable,
                non_trainable: totals.non_trainable,
                replaced_conv: None,
            });
            Ok(render(format, &rows))
        }
        CountTarget::Layer(cfg) => {
            let count = param_count(cfg)?;
            let row = LayerRow {
                kind: cfg.kind.name().into(),
                in_channels: cfg.in_channels,
                out_channels: cfg.out_channels()?,
                block_size: cfg.block_size,
                trainable: count.trainable,
                replaced_conv: count.comparison_conv,
                reduction: 1.0 - count.trainable as f64 / count.comparison_conv as f64,
            };
            Ok(render(format, &[row]))
        }
    }
}

/// First line where `actual` and `expected` differ, ignoring trailing
/// whitespace and line-ending style.
pub fn golden_diff(expected: &str, actual: &str) -> Option<String> {
    let norm = |s: &str| -> Vec<String> {
        let mut lines: Vec<String> = s.lines().map(|l| l.trim_end().to_string()).collect();
        while lines.last().is_some_and(String::is_empty) {
            lines.pop();
        }
        lines
    };
    let (e, a) = (norm(expected), norm(actual));
    (0..e.len().max(a.len())).find_map(|i| {
        let (want, got) = (e.get(i).map_or("<end>", String::as_str), a.get(i).map_or("<end>", String::as_str));
        (want != got).then(|| format!("line {}: expected `{want}`, got `{got}`", i + 1))
    })
}

pub fn run(args: &ParamcountArgs, config: Option<&Path>, format: Format) -> Result<()> {
    let target = match (&args.preset, config) {
        (Some(name), _) => CountTarget::Model(presets::by_name(name)?),
        (None, Some(path)) => load_target(path)?,
        (None, None) => return Err(CliError::Usage("paramcount needs --preset or --config".into())),
    };
    let text = report(&target, format)?;
    match &args.golden {
        Some(path) => {
            let expected = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            match golden_diff(&expected, &text) {
                None => {
                    println!("golden match: {}", path.display());
                    Ok(())
                }
                Some(diff) => Err(CliError::Failed(format!("golden mismatch in {}: {diff}", path.display()))),
            }
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
