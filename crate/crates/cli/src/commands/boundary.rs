use std::io::Write;

use smpl_core::data::{eval_grid, GridBounds};
use smpl_core::nn::{predict, softmax};
use smpl_core::trainers::load_checkpoint;

use super::output;
use crate::args::ExportBoundaryArgs;
use crate::{CliError, Context};

pub const BOUNDARY_HEADER: &str = "x,y,class,max_prob";

/// Writes `x,y,class,max_prob` for every grid point; `y` is the outer loop.
pub fn run(args: &ExportBoundaryArgs) -> Result<(), CliError> {
    let [x_min, x_max, y_min, y_max] = args.bounds[..] else {
        return Err(CliError::usage("--bounds takes x_min,x_max,y_min,y_max"));
    };
    let bounds = GridBounds {
        x_min,
        x_max,
        y_min,
        y_max,
    };
    let grid = eval_grid(&bounds, args.resolution)?;
    let params = load_checkpoint(&args.checkpoint)
        .context(format!("loading {}", args.checkpoint.display()))?;
    if params.input_dim() != 2 {
        return Err(CliError::runtime(format!(
            "{} expects {} inputs; a decision-boundary grid has 2",
            args.checkpoint.display(),
            params.input_dim()
        )));
    }
    let p = softmax(&predict(&params, &grid)?, 1.0);
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{BOUNDARY_HEADER}")?;
    for (point, probs) in grid.iter_rows().zip(p.iter_rows()) {
        let class = smpl_core::nn::argmax(probs);
        writeln!(out, "{},{},{class},{}", point[0], point[1], probs[class])?;
    }
    out.flush()?;
    Ok(())
}
