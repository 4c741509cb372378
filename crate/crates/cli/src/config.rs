use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use shiftbreak::{HMode, Lemma, Variant};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Recover,
    Identity,
    Lab,
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize, Deserialize)]
pub enum Algorithm {
    #[value(name = "interpolation")]
    #[serde(rename = "interpolation")]
    Interpolation,
    #[value(name = "zero_call+narrow", alias = "zero-call")]
    #[serde(rename = "zero_call+narrow")]
    ZeroCallNarrow,
    #[value(name = "smooth+narrow", alias = "smooth")]
    #[serde(rename = "smooth+narrow")]
    SmoothNarrow,
    #[value(name = "randomized")]
    #[serde(rename = "randomized")]
    Randomized,
    #[value(name = "large_e", alias = "large-e")]
    #[serde(rename = "large_e")]
    LargeE,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Interpolation,
        Algorithm::ZeroCallNarrow,
        Algorithm::SmoothNarrow,
        Algorithm::Randomized,
        Algorithm::LargeE,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Interpolation => "interpolation",
            Algorithm::ZeroCallNarrow => "zero_call+narrow",
            Algorithm::SmoothNarrow => "smooth+narrow",
            Algorithm::Randomized => "randomized",
            Algorithm::LargeE => "large_e",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    KnownT,
    UnknownT,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::KnownT => Variant::KnownT,
            VariantArg::UnknownT => Variant::UnknownT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HModeArg {
    Exact,
    Theoretical,
}

impl From<HModeArg> for HMode {
    fn from(m: HModeArg) -> Self {
        match m {
            HModeArg::Exact => HMode::Exact,
            HModeArg::Theoretical => HMode::Theoretical,
        }
    }
}

/// A planted secret: a fixed field element or one drawn from the seeded generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecretSpec {
    Value(u64),
    Random,
}

impl FromStr for SecretSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("random") {
            return Ok(SecretSpec::Random);
        }
        s.parse()
            .map(SecretSpec::Value)
            .map_err(|_| format!("expected a non-negative integer or \"random\", got {s:?}"))
    }
}

impl<'de> Deserialize<'de> for SecretSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(SecretSpec::Value(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn parse_lemma(s: &str) -> std::result::Result<Lemma, String> {
    Lemma::from_id(s).ok_or_else(|| {
        let ids: Vec<&str> = Lemma::ALL.iter().map(|l| l.id()).collect();
        format!("unknown lemma {s:?}; expected one of {}", ids.join(", "))
    })
}

fn parse_param(s: &str) -> std::result::Result<(String, u64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let v = v
        .trim()
        .parse()
        .map_err(|_| format!("parameter {k:?} needs a non-negative integer value"))?;
    Ok((k.trim().to_string(), v))
}

/// Hidden shifted power experiments.
#[derive(Debug, Parser)]
#[command(name = "shiftbreak", version)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Prime modulus.
    #[arg(long)]
    pub p: Option<u64>,
    /// Exponent dividing p - 1; omitted means every divisor in [--e-min, --e-max].
    #[arg(long)]
    pub e: Option<u64>,
    /// Secret shift, or "random".
    #[arg(long)]
    pub s: Option<SecretSpec>,
    /// Second shift for identity testing, or "random".
    #[arg(long)]
    pub t: Option<SecretSpec>,
    /// Identity tester variant.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Recovery algorithm; bench accepts a comma-separated list.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub algorithm: Vec<Algorithm>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub window_cap: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<u32>,
    #[arg(long, value_enum)]
    pub output: Option<OutputFormat>,
    /// JSON array of grid points, e.g. [{"p": 1009, "e": 12}].
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// JSON file with defaults for any of the flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lab experiment id.
    #[arg(long, value_parser = parse_lemma)]
    pub lemma: Option<Lemma>,
    /// Lab grid point parameter, repeated: --param p=13 --param h=3.
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, u64)>,
    #[arg(long, value_enum)]
    pub h_mode: Option<HModeArg>,
    #[arg(long)]
    pub e_min: Option<u64>,
    #[arg(long)]
    pub e_max: Option<u64>,
    /// Sweep every prime 3 <= p <= p-max.
    #[arg(long)]
    pub p_max: Option<u64>,
    /// Include wall-clock times in reports (makes output nondeterministic).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    p: Option<u64>,
    e: Option<u64>,
    s: Option<SecretSpec>,
    t: Option<SecretSpec>,
    variant: Option<VariantArg>,
    algorithm: Option<Vec<Algorithm>>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    c0: Option<f64>,
    window_cap: Option<u64>,
    seed: Option<u64>,
    trials: Option<u32>,
    output: Option<OutputFormat>,
    grid: Option<PathBuf>,
    lemma: Option<String>,
    params: Option<BTreeMap<String, u64>>,
    h_mode: Option<HModeArg>,
    e_min: Option<u64>,
    e_max: Option<u64>,
    p_max: Option<u64>,
    timing: Option<bool>,
}

/// One grid point as read from a grid file: named integer parameters.
pub type GridPoint = BTreeMap<String, u64>;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub p: Option<u64>,
    pub e: Option<u64>,
    pub s: Option<SecretSpec>,
    pub t: Option<SecretSpec>,
    pub variant: VariantArg,
    pub algorithms: Vec<Algorithm>,
    pub epsilon: f64,
    pub delta: Option<f64>,
    pub c0: f64,
    pub window_cap: Option<u64>,
    pub seed: Option<u64>,
    pub trials: u32,
    pub output: OutputFormat,
    pub grid: Option<Vec<GridPoint>>,
    pub lemma: Option<Lemma>,
    pub params: GridPoint,
    pub h_mode: HModeArg,
    pub e_min: Option<u64>,
    pub e_max: Option<u64>,
    pub p_max: Option<u64>,
    pub timing: bool,
}

impl ExperimentConfig {
    /// Defaults for `command` with nothing else set.
    pub fn new(command: Command) -> Self {
        ExperimentConfig {
            command,
            p: None,
            e: None,
            s: None,
            t: None,
            variant: VariantArg::KnownT,
            algorithms: Vec::new(),
            epsilon: 0.05,
            delta: None,
            c0: 1.0,
            window_cap: None,
            seed: None,
            trials: 1,
            output: OutputFormat::Json,
            grid: None,
            lemma: None,
            params: GridPoint::new(),
            h_mode: HModeArg::Exact,
            e_min: None,
            e_max: None,
            p_max: None,
            timing: false,
        }
    }

    /// Merges parsed flags over an optional config file, reads the grid file
    /// and validates the result.
    pub fn from_args(args: Args) -> Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = read(path)?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let lemma = match args.lemma {
            Some(l) => Some(l),
            None => file
                .lemma
                .as_deref()
                .map(parse_lemma)
                .transpose()
                .map_err(CliError::Config)?,
        };
        let mut params = file.params.unwrap_or_default();
        params.extend(args.params);
        let grid_path = args.grid.or(file.grid);
        let grid = grid_path.as_deref().map(read_grid).transpose()?;
        let algorithms = if args.algorithm.is_empty() {
            file.algorithm.unwrap_or_default()
        } else {
            args.algorithm
        };
        let defaults = ExperimentConfig::new(args.command);
        let config = ExperimentConfig {
            command: args.command,
            p: args.p.or(file.p),
            e: args.e.or(file.e),
            s: args.s.or(file.s),
            t: args.t.or(file.t),
            variant: args.variant.or(file.variant).unwrap_or(defaults.variant),
            algorithms,
            epsilon: args.epsilon.or(file.epsilon).unwrap_or(defaults.epsilon),
            delta: args.delta.or(file.delta),
            c0: args.c0.or(file.c0).unwrap_or(defaults.c0),
            window_cap: args.window_cap.or(file.window_cap),
            seed: args.seed.or(file.seed),
            trials: args.trials.or(file.trials).unwrap_or(defaults.trials),
            output: args.output.or(file.output).unwrap_or(defaults.output),
            grid,
            lemma,
            params,
            h_mode: args.h_mode.or(file.h_mode).unwrap_or(defaults.h_mode),
            e_min: args.e_min.or(file.e_min),
            e_max: args.e_max.or(file.e_max),
            p_max: args.p_max.or(file.p_max),
            timing: args.timing || file.timing.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }

    /// Algorithms to run: the explicit selection, or the command's default.
    pub fn selected_algorithms(&self) -> Vec<Algorithm> {
        if !self.algorithms.is_empty() {
            return self.algorithms.clone();
        }
        match self.command {
            Command::Bench => Algorithm::ALL.to_vec(),
            _ => vec![Algorithm::ZeroCallNarrow],
        }
    }

    /// Whether the run is known up front to draw from the seeded generator.
    /// Secrets left unset are drawn too; that is checked per grid cell.
    pub fn uses_randomness(&self) -> bool {
        let random_secret = |spec: Option<SecretSpec>| spec == Some(SecretSpec::Random);
        let algorithm_random = matches!(self.command, Command::Recover | Command::Bench)
            && self.selected_algorithms().contains(&Algorithm::Randomized);
        algorithm_random || random_secret(self.s) || random_secret(self.t)
    }

    pub fn validate(&self) -> Result<()> {
        if let (Some(p), Some(e)) = (self.p, self.e) {
            if e == 0 || p < 2 || (p - 1) % e != 0 {
                return Err(CliError::config(format!(
                    "e = {e} must divide p - 1 = {}",
                    p.saturating_sub(1)
                )));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(CliError::config("--epsilon must be positive"));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(CliError::config("--c0 must be positive"));
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(CliError::config("--delta must lie in (0, 1]"));
            }
        }
        if self.window_cap == Some(0) {
            return Err(CliError::config("--window-cap must be positive"));
        }
        if self.trials == 0 {
            return Err(CliError::config("--trials must be at least 1"));
        }
        if self.command == Command::Recover && self.algorithms.len() > 1 {
            return Err(CliError::config("recover takes a single --algorithm"));
        }
        if self.command == Command::Lab && self.lemma.is_none() {
            return Err(CliError::config("lab requires --lemma"));
        }
        if self.command != Command::Lab
            && self.grid.is_none()
            && self.p.is_none()
            && self.p_max.is_none()
        {
            return Err(CliError::config("--p, --p-max or --grid is required"));
        }
        if self.seed.is_none() && self.uses_randomness() {
            return Err(CliError::config(
                "--seed is required when a secret is random or a randomized algorithm is selected",
            ));
        }
        if let (Some(lo), Some(hi)) = (self.e_min, self.e_max) {
            if lo > hi {
                return Err(CliError::config("--e-min exceeds --e-max"));
            }
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

fn read_grid(path: &Path) -> Result<Vec<GridPoint>> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::config(format!(
            "{}: expected a JSON array of objects with integer values: {e}",
            path.display()
        ))
    })
}
