//! `lossforge shape`: tabulate a loss curve over y_pred in [0,1] at a fixed
//! y_real, report the minimizer, and optionally dump the grid as CSV.

use std::path::PathBuf;

use clap::Args;
use lossforge_core::losses::shape_report;

use crate::emit::{f64_json, f64_text, json_str, write_atomic};
use crate::{io_error, CliError, CliResult};

#[derive(Args, Debug)]
pub struct ShapeArgs {
    /// Built-in loss name or .sexp file
    #[arg(long)]
    pub loss: String,

    /// Fixed real-label input
    #[arg(long, default_value_t = 1.0)]
    pub y_real: f64,

    /// Sample count across [0,1] (at least 16)
    #[arg(long, default_value_t = 512)]
    pub grid: usize,

    /// Optional CSV output: y_pred,loss,gradient
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn run(args: ShapeArgs) -> CliResult<()> {
    if !args.y_real.is_finite() {
        return Err(CliError::Config("--y-real must be finite".into()));
    }
    let loss = super::resolve_loss(&args.loss)?;
    let report = shape_report(&loss, args.y_real, args.grid)
        .map_err(|e| CliError::Config(e.to_string()))?;

    if let Some(path) = &args.out {
        let mut csv = String::from("y_pred,loss,gradient\n");
        for (i, (y_pred, value)) in report.samples.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{}\n",
                f64_text(*y_pred),
                f64_text(*value),
                f64_text(report.gradient[i])
            ));
        }
        write_atomic(path, &csv).map_err(|e| io_error("cannot write", path, e))?;
    }

    println!(
        "{{\"loss\":{},\"y_real\":{},\"grid\":{},\"argmin\":{},\"min_value\":{}}}",
        json_str(loss.name()),
        f64_json(args.y_real),
        args.grid,
        f64_json(report.argmin),
        f64_json(report.min_value)
    );
    Ok(())
}
