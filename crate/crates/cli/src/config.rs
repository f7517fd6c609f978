//! Run configuration: defaults, JSON config files and command-line overrides.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOL_VERSION: &str = concat!("conelab ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Both sides of every inequality on one region.
    Verify,
    /// The CROS exponent comparison on a log grid.
    Compare,
    /// Optimal assignment, equality diagnostics and weak convergence.
    Transport,
    /// Seeded multi-start perimeter minimization.
    Optimize,
    /// The reflection problem: split optimum, 2D remark and optimizer.
    Reflect,
    /// Isoperimetric deficit against symmetric difference.
    Stability,
    /// The full acceptance battery.
    Suite,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Compare => "compare",
            Command::Transport => "transport",
            Command::Optimize => "optimize",
            Command::Reflect => "reflect",
            Command::Stability => "stability",
            Command::Suite => "suite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    #[default]
    ProjectedGradient,
    NelderMead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub cone: String,
    pub density: String,
    pub region: String,
    /// Dimension for `compare`, `reflect` and cone specs without one.
    pub n: usize,
    /// Homogeneity degree for `compare` and `reflect`.
    pub alpha: f64,
    pub quad_res: usize,
    pub order: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// Overrides the reported tolerance floor.
    pub tol: Option<f64>,
    /// Transport sample size.
    pub samples: usize,
    /// Perturbation amplitudes for `stability` and `transport`.
    pub amplitudes: Vec<f64>,
    /// Number of seeded starts for `optimize`.
    pub starts: usize,
    pub method: MethodArg,
    pub max_iter: usize,
    pub format: Format,
    pub out: Option<PathBuf>,
    /// Per-iteration perimeter CSV for `optimize`.
    pub trace: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            cone: "quadrant".into(),
            density: "monomial:0,1".into(),
            region: "K".into(),
            n: 2,
            alpha: 1.0,
            quad_res: 64,
            order: 7,
            mc_samples: 1 << 16,
            seed: 0,
            tol: None,
            samples: 2000,
            amplitudes: vec![0.0, 0.02, 0.05, 0.1, 0.15, 0.2],
            starts: 10,
            method: MethodArg::ProjectedGradient,
            max_iter: 5000,
            format: Format::Json,
            out: None,
            trace: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(path, &e))
    }

    /// The configuration with output paths removed, as compact JSON.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.trace = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn command(&self) -> Result<Command, CliError> {
        self.command.ok_or_else(|| CliError::Usage("no command given".into()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: &str| Err(CliError::Usage(format!("{field}: {why}")));
        if self.n < 2 {
            return bad("n", "must be at least 2");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha", "must be a finite nonnegative number");
        }
        if self.quad_res == 0 {
            return bad("quad_res", "must be positive");
        }
        if self.samples == 0 {
            return bad("samples", "must be positive");
        }
        if self.starts == 0 {
            return bad("starts", "must be positive");
        }
        if let Some(t) = self.tol {
            if !(t.is_finite() && t > 0.0) {
                return bad("tol", "must be positive");
            }
        }
        if self.amplitudes.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return bad("amplitudes", "must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "conelab", version, about = "Weighted isoperimetric inequalities in convex cones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// quadrant | orthant[:n] | halfspace[:n] | circular:<axis>:<angle> | polyhedral:<v>;<v>..
    #[arg(long, global = true)]
    pub cone: Option<String>,
    /// const | monomial:a1,..,an | radial:a | reflect(<density>)
    #[arg(long, global = true)]
    pub density: Option<String>,
    /// K | ball:r | cube[:side] | perturbed:eps | random:seed | path to region JSON
    #[arg(long, global = true)]
    pub region: Option<String>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long = "quad-res", global = true)]
    pub quad_res: Option<usize>,
    #[arg(long, global = true)]
    pub order: Option<usize>,
    #[arg(long = "mc-samples", global = true)]
    pub mc_samples: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Comma-separated amplitudes.
    #[arg(long, global = true, value_delimiter = ',')]
    pub amplitudes: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub starts: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long = "max-iter", global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
}

impl Cli {
    /// Base config from `--config` (or defaults) with flags applied on top.
    pub fn into_config(self) -> Result<RunConfig, CliError> {
        let f = self.flags;
        let mut c = match &f.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        c.command = Some(self.command);
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = f.$field { c.$field = v; })* };
        }
        set!(cone, density, region, n, alpha, quad_res, order, mc_samples, seed, samples, amplitudes, starts, method, max_iter, format);
        if f.tol.is_some() {
            c.tol = f.tol;
        }
        if f.out.is_some() {
            c.out = f.out;
        }
        if f.trace.is_some() {
            c.trace = f.trace;
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let mut c = RunConfig::default();
        c.command = Some(Command::Stability);
        c.tol = Some(1e-7);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn hash_ignores_output_paths_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out = Some("x.json".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 5, "quad_res": 32}"#).unwrap();
        let cli = Cli::parse_from(["conelab", "verify", "--config", path.to_str().unwrap(), "--seed", "9"]);
        let c = cli.into_config().unwrap();
        assert_eq!((c.seed, c.quad_res, c.command), (9, 32, Some(Command::Verify)));
    }

    #[test]
    fn malformed_config_reports_position_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, "{\n  \"seed\": 1,\n  \"colour\": 2\n}").unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("colour"), "{msg}");
    }
}
