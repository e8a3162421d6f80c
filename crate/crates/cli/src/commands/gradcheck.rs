//! `walshnet gradcheck`: finite-difference suites for the thresholds, the
//! WHT layers and a toy model.

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walshnet_core::gradcheck::{
    check_layer, check_smooth_threshold, check_weighted_threshold, toy_layer_suite, GradCheckReport,
};
use walshnet_core::LayerKind;
use walshnet_train::gradcheck::{check_model, toy_model_spec};

use crate::error::{CliError, Result};
use crate::output::{render, Format};

/// Upper bound on `--points`.
pub const MAX_POINTS: usize = 100_000;
const MODEL_BATCH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    /// Unweighted smooth threshold.
    Smooth,
    /// Weighted smooth threshold with weights in (1e-3, 2).
    Weighted,
    /// Weighted smooth threshold with weights close to zero.
    WeightedEdge,
    FwhtExpand,
    FwhtProject,
    BwhtExpand,
    BwhtProject,
    #[value(name = "fwht-2d")]
    Fwht2d,
    /// Every layer kind.
    Layers,
    /// BWHT expansion, weighted 2D WHT, pooling and a dense head.
    FullModel,
    All,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub scope: Scope,
    /// Random points per threshold suite.
    #[arg(long, default_value_t = 10_000)]
    pub points: usize,
}

fn layer_kind(scope: Scope) -> Option<LayerKind> {
    Some(match scope {
        Scope::FwhtExpand => LayerKind::FwhtExpand,
        Scope::FwhtProject => LayerKind::FwhtProject,
        Scope::BwhtExpand => LayerKind::BwhtExpand,
        Scope::BwhtProject => LayerKind::BwhtProject,
        Scope::Fwht2d => LayerKind::Fwht2d,
        _ => return None,
    })
}

fn layer_reports(rng: &mut ChaCha8Rng, only: Option<LayerKind>) -> Result<Vec<GradCheckReport>> {
    let mut out = Vec::new();
    for (cfg, dims) in toy_layer_suite() {
        if only.is_some_and(|k| k != cfg.kind) {
            continue;
        }
        out.push(check_layer(rng, &cfg, dims)?);
    }
    Ok(out)
}

/// Runs the suites selected by `scope` with a generator seeded by `seed`.
pub fn run_suites(scope: Scope, points: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    if points == 0 || points > MAX_POINTS {
        return Err(CliError::Usage(format!("--points must be between 1 and {MAX_POINTS}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    let all = scope == Scope::All;
    if all || scope == Scope::Smooth {
        reports.push(check_smooth_threshold(&mut rng, points));
    }
    if all || scope == Scope::Weighted {
        reports.push(check_weighted_threshold(&mut rng, points, (1e-3, 2.0), "weighted")?);
    }
    if all || scope == Scope::WeightedEdge {
        reports.push(check_weighted_threshold(&mut rng, points, (1e-5, 1e-2), "weighted-edge")?);
    }
    if all || scope == Scope::Layers {
        reports.extend(layer_reports(&mut rng, None)?);
    } else if let Some(kind) = layer_kind(scope) {
        reports.extend(layer_reports(&mut rng, Some(kind))?);
    }
    if all || scope == Scope::FullModel {
        reports.push(check_model(&mut rng, toy_model_spec(seed), MODEL_BATCH)?);
    }
    Ok(reports)
}

#[derive(serde::Serialize)]
struct Row<'a> {
    suite: &'a str,
    checked: usize,
    skipped: usize,
    max_rel_err: String,
    tolerance: f64,
    result: &'static str,
}

pub fn run(args: &GradcheckArgs, seed: u64, format: Format) -> Result<()> {
    let reports = run_suites(args.scope, args.points, seed)?;
    let rows: Vec<Row> = reports
        .iter()
        .map(|r| Row {
            suite: &r.name,
            checked: r.checked,
            skipped: r.skipped,
            max_rel_err: format!("{:.3e}", r.max_rel_err),
            tolerance: r.tolerance,
            result: if r.passed() { "pass" } else { "fail" },
        })
        .collect();
    print!("{}", render(format, &rows));
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(CliError::Failed(format!(
            "gradient check failed: {failed} of {} suites",
            reports.len()
        )));
    }
    Ok(())
}
