use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use liftsvd_core::expr::{builtin, FunctionSpec, FunctionSpecRaw};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuiltinName {
    Siso,
    Mimo,
}

impl BuiltinName {
    fn as_str(self) -> &'static str {
        match self {
            BuiltinName::Siso => "siso",
            BuiltinName::Mimo => "mimo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionSource {
    Builtin(BuiltinName),
    File(PathBuf),
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["builtin", "spec"])))]
pub struct CommonArgs {
    /// Use a built-in example function.
    #[arg(long, value_enum)]
    pub builtin: Option<BuiltinName>,
    /// JSON function file: {n, p, components, norm_bounds, domain_box}.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Admissibility margin for the singular values, in (0, 1).
    #[arg(long, default_value_t = liftsvd_core::DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample budget for certificates, estimates and lifted point dumps.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: FunctionSource,
    pub eta: f64,
    pub seed: u64,
    pub samples: usize,
    pub out: PathBuf,
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn from_args(args: &CommonArgs) -> Result<Self, CliError> {
        let source = match (&args.builtin, &args.spec) {
            (Some(b), None) => FunctionSource::Builtin(*b),
            (None, Some(p)) => FunctionSource::File(p.clone()),
            _ => return Err(CliError::Config("exactly one of --builtin or --spec is required".into())),
        };
        if !(args.eta > 0.0 && args.eta < 1.0) {
            return Err(CliError::Config(format!("--eta must lie in (0, 1), got {}", args.eta)));
        }
        if args.samples == 0 {
            return Err(CliError::Config("--samples must be at least 1".into()));
        }
        Ok(RunConfig {
            source,
            eta: args.eta,
            seed: args.seed,
            samples: args.samples,
            out: args.out.clone(),
            format: args.format,
        })
    }

    pub fn load_function(&self) -> Result<FunctionSpec, CliError> {
        match &self.source {
            FunctionSource::Builtin(name) => {
                Ok(builtin(name.as_str()).expect("every BuiltinName has a builtin"))
            }
            FunctionSource::File(path) => load_spec_file(path),
        }
    }

    pub fn ensure_out_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn load_spec_file(path: &Path) -> Result<FunctionSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read spec file {}: {e}", path.display())))?;
    let raw: FunctionSpecRaw = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("malformed spec file {}: {e}", path.display())))?;
    FunctionSpec::from_raw(&raw).map_err(|e| CliError::Config(format!("invalid spec {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> CommonArgs {
        CommonArgs {
            builtin: Some(BuiltinName::Siso),
            spec: None,
            eta: 0.1,
            seed: 0,
            samples: 10,
            out: ".".into(),
            format: OutputFormat::Csv,
        }
    }

    #[test]
    fn rejects_bad_eta_and_budget() {
        let mut a = args();
        a.eta = 1.0;
        assert!(matches!(RunConfig::from_args(&a), Err(CliError::Config(_))));
        let mut a = args();
        a.samples = 0;
        assert!(matches!(RunConfig::from_args(&a), Err(CliError::Config(_))));
    }

    #[test]
    fn loads_spec_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        fs::write(
            &path,
            r#"{"n": 2, "p": 2, "components": ["x1*cos(x2)", "0.5*x2"], "norm_bounds": [1, 0.5], "domain_box": [[-1, 1], [-2, 2]]}"#,
        )
        .unwrap();
        let f = load_spec_file(&path).unwrap();
        assert_eq!((f.n(), f.p()), (2, 2));
        assert!(matches!(load_spec_file(&dir.path().join("missing.json")), Err(CliError::Config(_))));
        fs::write(&path, r#"{"n": 1, "p": 1, "components": ["x1 +"], "norm_bounds": [1], "domain_box": [[-1, 1]]}"#)
            .unwrap();
        assert!(matches!(load_spec_file(&path), Err(CliError::Config(_))));
    }
}
