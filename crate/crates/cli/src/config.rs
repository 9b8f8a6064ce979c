//! Line-based `key = value` configuration with dotted keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ddpmlab::{MixtureTarget, NoiseSchedule};

use crate::error::RunError;

/// Every key the runner understands, with its default (`None` means the key
/// has no default and is only read when its section needs it).
const KEYS: &[(&str, Option<&str>)] = &[
    ("experiment", None),
    ("seed", Some("7")),
    ("paths", Some("100000")),
    ("substeps", Some("4")),
    ("grid", Some("2001")),
    ("out", Some("out")),
    ("target.kind", Some("mixture")),
    ("target.dim", Some("1")),
    ("target.weights", Some("0.3, 0.7")),
    ("target.means", Some("-2, 1")),
    ("target.q", Some("1.5")),
    ("target.mu0", Some("1.5")),
    ("target.a", Some("2")),
    ("target.file", None),
    ("schedule.kind", Some("ho_scaled")),
    ("schedule.n", Some("200")),
    ("schedule.v_start", Some("0.0001")),
    ("schedule.v_end", Some("0.02")),
    ("schedule.alpha", Some("0.99")),
    ("schedule.total", Some("4")),
    ("schedule.file", None),
    ("ddpm.final_noise", Some("true")),
    ("identity.bias", Some("1.0")),
    ("identity.noise", Some("0.5")),
    ("identity.max_rel_gap", Some("0.02")),
    ("identity.se_k", Some("3")),
    ("fbsde.substeps", Some("128, 256, 512, 1024")),
    ("fbsde.t_index", Some("0")),
    ("fbsde.rate", Some("0.7071067811865476")),
    ("fbsde.rate_tol", Some("0.25")),
    ("fbsde.opposite_factor", Some("10")),
    ("yast.t", Some("0.3")),
    ("yast.substeps", Some("512")),
    ("yast.paths", Some("10000")),
    ("yast.degree", Some("3")),
    ("yast.gaussian_max", Some("0.05")),
    ("yast.regression_max", Some("0.1")),
    ("h.times", Some("0, 0.25, 0.5, 0.9")),
    ("h.paths", Some("20000")),
    ("pde.times", Some("0.3125, 0.55")),
    ("pde.good", Some("1e-5")),
    ("pde.bad", Some("1e-2")),
    ("tv.biases", Some("0, 0.25, 0.5, 1.0")),
    ("tv.loss_samples", Some("10000")),
    ("audit.gamma1", Some("0.15")),
    ("audit.gamma2", Some("30.67")),
    ("audit.fail_gamma1", Some("0.16")),
    ("audit.growth_times", Some("20")),
    ("audit.l", Some("0.0001")),
    ("audit.eps", Some("0.1")),
    ("bounds.schrodinger", Some("true")),
    ("bounds.biases", Some("0.1, 0.5, 1.0")),
    ("bounds.girsanov_substeps", Some("2")),
    ("bounds.sweep_ns", Some("10, 50, 100, 500")),
    ("bounds.sweep_total", Some("4")),
    ("bounds.rank_min", Some("0.9")),
];

/// Keys holding comma-separated numbers.
const LIST_KEYS: &[&str] = &[
    "target.weights",
    "target.means",
    "target.q",
    "target.mu0",
    "fbsde.substeps",
    "h.times",
    "pde.times",
    "tv.biases",
    "audit.fail_gamma1",
    "bounds.biases",
    "bounds.sweep_ns",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Identity,
    Fbsde,
    Pde,
    SignAdjudication,
    TvPipeline,
    ScheduleAudit,
    BoundsSweep,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Identity,
        Experiment::Fbsde,
        Experiment::Pde,
        Experiment::SignAdjudication,
        Experiment::TvPipeline,
        Experiment::ScheduleAudit,
        Experiment::BoundsSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Identity => "identity",
            Experiment::Fbsde => "fbsde",
            Experiment::Pde => "pde",
            Experiment::SignAdjudication => "sign-adjudication",
            Experiment::TvPipeline => "tv-pipeline",
            Experiment::ScheduleAudit => "schedule-audit",
            Experiment::BoundsSweep => "bounds-sweep",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A parsed configuration: raw values for every key, defaults filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    values: BTreeMap<String, String>,
    /// Directory that relative file references resolve against.
    base: PathBuf,
}

fn parse_err(line: usize, msg: impl Into<String>) -> RunError {
    RunError::Config(format!("line {line}: {}", msg.into()))
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, RunError> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(no + 1, format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(parse_err(no + 1, format!("unknown key `{k}`")));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(parse_err(no + 1, format!("duplicate key `{k}`")));
            }
        }
        let name = values.get("experiment").ok_or_else(|| RunError::Config("missing key `experiment`".into()))?;
        let experiment = Experiment::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| RunError::Config(format!("unknown experiment `{name}`")))?;
        for (k, d) in KEYS {
            if let Some(d) = d {
                values.entry(k.to_string()).or_insert_with(|| d.to_string());
            }
        }
        let cfg = Self { experiment, values, base: base.to_path_buf() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses every typed value once so that bad values surface as config
    /// errors before any work starts.
    fn validate(&self) -> Result<(), RunError> {
        self.seed()?;
        self.usize("paths")?;
        self.usize("substeps")?;
        self.usize("grid")?;
        self.target()?;
        self.schedule()?;
        for (k, d) in KEYS {
            let Some(d) = d else { continue };
            if matches!(*k, "out" | "target.kind" | "schedule.kind" | "experiment") {
                continue;
            }
            if LIST_KEYS.contains(k) {
                self.list(k)?;
            } else if *d == "true" || *d == "false" {
                self.flag(k)?;
            } else {
                self.f64(k)?;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), RunError> {
        if !KEYS.iter().any(|(name, _)| *name == key) {
            return Err(RunError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        self.validate()
    }

    pub fn raw(&self, key: &str) -> Result<&str, RunError> {
        self.values.get(key).map(String::as_str).ok_or_else(|| RunError::Config(format!("missing key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64, RunError> {
        let v = self.raw(key)?;
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| RunError::Config(format!("`{key}`: expected a number, got `{v}`")))
    }

    pub fn usize(&self, key: &str) -> Result<usize, RunError> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| RunError::Config(format!("`{key}`: expected a count, got `{v}`")))
    }

    pub fn seed(&self) -> Result<u64, RunError> {
        let v = self.raw("seed")?;
        v.parse().map_err(|_| RunError::Config(format!("`seed`: expected an unsigned integer, got `{v}`")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, RunError> {
        match self.raw(key)? {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(RunError::Config(format!("`{key}`: expected true or false, got `{v}`"))),
        }
    }

    /// Comma-separated numbers; an empty value is an empty list.
    pub fn list(&self, key: &str) -> Result<Vec<f64>, RunError> {
        let v = self.raw(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| RunError::Config(format!("`{key}`: bad list entry `{}`", s.trim())))
            })
            .collect()
    }

    pub fn counts(&self, key: &str) -> Result<Vec<usize>, RunError> {
        self.list(key)?
            .into_iter()
            .map(|x| {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(RunError::Config(format!("`{key}`: expected counts, got {x}")))
                }
            })
            .collect()
    }

    fn path(&self, key: &str) -> Result<PathBuf, RunError> {
        let p = PathBuf::from(self.raw(key)?);
        Ok(if p.is_absolute() { p } else { self.base.join(p) })
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.values.get("out").map(String::as_str).unwrap_or("out"))
    }

    pub fn target(&self) -> Result<MixtureTarget, RunError> {
        let built = match self.raw("target.kind")? {
            "mixture" => {
                MixtureTarget::new(self.list("target.weights")?, self.list("target.means")?, self.list("target.q")?)
            }
            "standard" => Ok(MixtureTarget::standard(self.usize("target.dim")?)),
            "shifted" => Ok(MixtureTarget::shifted(self.list("target.mu0")?)),
            "symmetric" => Ok(MixtureTarget::symmetric_pair(self.f64("target.a")?)),
            "file" => {
                let p = self.path("target.file")?;
                let text = std::fs::read_to_string(&p).map_err(|e| RunError::Io(format!("{}: {e}", p.display())))?;
                MixtureTarget::from_text(&text)
            }
            k => return Err(RunError::Config(format!("unknown target kind `{k}`"))),
        };
        built.map_err(|e| RunError::Config(format!("target: {e}")))
    }

    pub fn schedule(&self) -> Result<NoiseSchedule, RunError> {
        let n = || self.usize("schedule.n");
        let built = match self.raw("schedule.kind")? {
            "ho" => Ok(NoiseSchedule::ho()),
            "ho_scaled" => NoiseSchedule::ho_scaled(n()?),
            "linear" => {
                NoiseSchedule::from_linear_variance(n()?, self.f64("schedule.v_start")?, self.f64("schedule.v_end")?)
            }
            "constant" => NoiseSchedule::constant(n()?, self.f64("schedule.alpha")?),
            "constant_total" => NoiseSchedule::constant_total(n()?, self.f64("schedule.total")?),
            "file" => {
                let p = self.path("schedule.file")?;
                let text = std::fs::read_to_string(&p).map_err(|e| RunError::Io(format!("{}: {e}", p.display())))?;
                NoiseSchedule::from_text(&text)
            }
            k => return Err(RunError::Config(format!("unknown schedule kind `{k}`"))),
        };
        built.map_err(|e| RunError::Config(format!("schedule: {e}")))
    }

    /// Fully resolved `key = value` lines in key order.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, RunError> {
        ExperimentConfig::parse(text, Path::new("."))
    }

    #[test]
    fn comments_defaults_and_dotted_keys() {
        let c = parse("# audit\nexperiment = schedule-audit  # trailing\nschedule.kind = ho\n\n").unwrap();
        assert_eq!(c.experiment, Experiment::ScheduleAudit);
        assert_eq!(c.schedule().unwrap().n(), 1000);
        assert_eq!(c.f64("audit.gamma2").unwrap(), 30.67);
        assert_eq!(c.counts("bounds.sweep_ns").unwrap(), vec![10, 50, 100, 500]);
        assert!(c.echo().contains("experiment = schedule-audit\n"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse("experiment = pde\nbogus = 1"), Err(RunError::Config(_))));
        assert!(parse("experiment = nope").is_err());
        assert!(parse("seed = 3").is_err());
        assert!(parse("experiment = pde\nexperiment = pde").is_err());
        assert!(parse("experiment = pde\npaths = many").is_err());
        assert!(parse("experiment = pde\nschedule.kind = linear\nschedule.v_start = 2").is_err());
        assert!(parse("experiment pde").is_err());
        assert!(parse("experiment = pde\ntv.biases = 0, x").is_err());
    }

    #[test]
    fn empty_lists_and_overrides() {
        let mut c = parse("experiment = bounds-sweep\nbounds.biases =").unwrap();
        assert!(c.list("bounds.biases").unwrap().is_empty());
        c.set("seed", "11").unwrap();
        assert_eq!(c.seed().unwrap(), 11);
        assert!(c.set("seed", "-1").is_err());
        assert!(c.set("nope", "1").is_err());
    }

    #[test]
    fn target_kinds() {
        let c = parse("experiment = pde\ntarget.kind = standard\ntarget.dim = 2").unwrap();
        assert_eq!(c.target().unwrap().dim(), 2);
        let c = parse("experiment = pde\ntarget.kind = shifted\ntarget.mu0 = 1, 2").unwrap();
        assert_eq!(c.target().unwrap().mean_vector(), vec![1.0, 2.0]);
        assert!(parse("experiment = pde\ntarget.kind = blob").is_err());
    }
}
