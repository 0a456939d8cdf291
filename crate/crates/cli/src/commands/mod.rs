//! One module per subcommand.

pub mod compare;
pub mod eval;
pub mod search;
pub mod shape;
pub mod train;

use std::path::Path;

use lossforge_core::expr::ExprTree;
use lossforge_core::losses::{LossFunction, BUILTIN_NAMES};

use crate::{CliError, CliResult};

/// Resolves `--loss`: a built-in name, or a path to an s-expression file.
pub fn resolve_loss(spec: &str) -> CliResult<LossFunction> {
    if let Some(loss) = LossFunction::builtin(spec) {
        return Ok(loss);
    }
    let path = Path::new(spec);
    if spec.ends_with(".sexp") || path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read loss file {spec}: {e}")))?;
        let tree = ExprTree::parse(text.trim())
            .map_err(|e| CliError::Config(format!("{spec}: {e}")))?;
        return LossFunction::from_tree(tree)
            .map_err(|e| CliError::Config(format!("{spec}: {e}")));
    }
    Err(CliError::Config(format!(
        "unknown loss `{spec}`; built-ins are {} (or pass a .sexp file)",
        BUILTIN_NAMES.join(", ")
    )))
}

fn create_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::io_error("cannot create", dir, e))
}
