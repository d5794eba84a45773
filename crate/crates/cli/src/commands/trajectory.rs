use std::io::Write;

use smpl_core::trainers::TrajectoryDump;

use super::output;
use super::train::TRAJECTORY_JSON;
use crate::args::ExportTrajectoryArgs;
use crate::CliError;

/// CSV `step,phase,x,y,loss`. Two-step trainers give a `step_one` and a
/// `step_two` row per recorded step, single-update trainers one `update` row.
pub fn run(args: &ExportTrajectoryArgs) -> Result<(), CliError> {
    let path = args.run_dir.join(TRAJECTORY_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::runtime(format!(
            "no trajectory in {} ({}: {e}); train with train.trajectory_every >= 1",
            args.run_dir.display(),
            TRAJECTORY_JSON
        ))
    })?;
    let dump: TrajectoryDump = serde_json::from_str(&text)
        .map_err(|e| CliError::runtime(format!("{} is not a trajectory: {e}", path.display())))?;
    let mut out = output(args.out.as_deref())?;
    dump.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}
