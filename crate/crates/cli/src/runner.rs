//! Runs an experiment and writes its files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::RunError;
use crate::experiments::execute;
use crate::summary::Summary;

/// Files written by a run, in write order.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Summary,
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

/// Executes `cfg` and writes `config.txt`, one CSV per report and
/// `summary.txt` into `dir`. Tables containing NaN are not written; they
/// become failed assertions instead.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput, RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    let echo = dir.join("config.txt");
    write(&echo, &cfg.echo())?;
    files.push(echo);

    let mut outcome = execute(cfg)?;
    for (name, table) in &outcome.tables {
        if table.has_nan() {
            outcome.summary.check(format!("finite_output {name}"), false, "table contains NaN; not written");
            continue;
        }
        let path = dir.join(name);
        write(&path, &table.to_csv_string())?;
        files.push(path);
    }
    let path = dir.join("summary.txt");
    write(&path, &outcome.summary.render())?;
    files.push(path);
    Ok(RunOutput { dir: dir.to_path_buf(), files, summary: outcome.summary })
}

/// Runs on a dedicated pool of `threads` workers when given.
pub fn run_with_threads(cfg: &ExperimentConfig, dir: &Path, threads: Option<usize>) -> Result<RunOutput, RunError> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
            pool.install(|| run(cfg, dir))
        }
        None => run(cfg, dir),
    }
}
