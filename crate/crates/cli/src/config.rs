//! Run configuration: a TOML file, then command-line overrides, then validation.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUTPUT_ENV: &str = "CMPS_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Ll,
    Pairing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Trivial,
    Topological,
}

/// Momentum grid in units of πρ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            min: -2.0,
            max: 2.0,
            count: 41,
        }
    }
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        (0..self.count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: Model,
    pub c: Option<f64>,
    pub mu: Option<f64>,
    /// target γ = c/ρ: tunes μ (LL) or c (pairing) when that one is not given
    pub gamma: Option<f64>,
    pub u: f64,
    pub u_im: f64,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "D_list")]
    pub d_list: Vec<usize>,
    pub sectors: Vec<Sector>,
    pub theta: f64,
    pub grid: Grid,
    pub k: usize,
    pub delta_n: bool,
    pub gammas: Vec<f64>,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub gamma_tol: f64,
    pub krylov_tol: f64,
    pub eig_tol: f64,
    pub max_restarts: usize,
    pub min_schmidt_ratio: Option<f64>,
    pub kink_points: usize,
    pub n_quad: usize,
    pub seed: u64,
    pub state: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: Model::Ll,
            c: None,
            mu: None,
            gamma: None,
            u: 0.0,
            u_im: 0.0,
            d: 16,
            d_list: vec![8, 12, 16, 22],
            sectors: vec![Sector::Trivial, Sector::Topological],
            theta: std::f64::consts::PI,
            grid: Grid::default(),
            k: 4,
            delta_n: false,
            gammas: vec![],
            grad_tol: 1e-8,
            max_iters: 5000,
            gamma_tol: 1e-4,
            krylov_tol: 1e-12,
            eig_tol: 1e-8,
            max_restarts: 200,
            min_schmidt_ratio: None,
            kink_points: 9,
            n_quad: 256,
            seed: 1,
            state: None,
            output: None,
            threads: None,
        }
    }
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// TOML run configuration; flags given here override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// model [default: ll]
    #[arg(long, value_enum, global = true)]
    pub model: Option<Model>,
    /// interaction strength c (tuned from --gamma for pairing when absent) [default: 1 for ll]
    #[arg(short = 'c', long = "c", global = true, allow_negative_numbers = true)]
    pub c: Option<f64>,
    /// chemical potential (tuned from --gamma for ll when absent)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// target dimensionless coupling γ = c/ρ
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// pairing amplitude, real part [default: 0]
    #[arg(short = 'u', long = "u", global = true, allow_negative_numbers = true)]
    pub u: Option<f64>,
    /// pairing amplitude, imaginary part [default: 0]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub u_im: Option<f64>,
    /// bond dimension [default: 16]
    #[arg(short = 'D', long = "D", global = true)]
    pub d: Option<usize>,
    /// bond dimensions of a bound-state scan [default: 8,12,16,22]
    #[arg(long = "D-list", value_delimiter = ',', global = true)]
    pub d_list: Option<Vec<usize>>,
    /// excitation sectors [default: trivial,topological]
    #[arg(long, value_enum, value_delimiter = ',', global = true)]
    pub sectors: Option<Vec<Sector>>,
    /// phase of the topological sector [default: π]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// first momentum, in units of πρ [default: -2]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub p_min: Option<f64>,
    /// last momentum, in units of πρ [default: 2]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub p_max: Option<f64>,
    /// number of momenta [default: 41]
    #[arg(long, global = true)]
    pub p_count: Option<usize>,
    /// eigenvalues per momentum [default: 4]
    #[arg(short = 'k', long = "k", global = true)]
    pub k: Option<usize>,
    /// also compute ΔN for every eigenvector of a spectrum [default: false]
    #[arg(long, global = true)]
    pub delta_n: bool,
    /// couplings γ of a ΔN scan [default: none]
    #[arg(long, value_delimiter = ',', global = true)]
    pub gammas: Option<Vec<f64>>,
    /// ground-state gradient tolerance [default: 1e-8]
    #[arg(long, global = true)]
    pub grad_tol: Option<f64>,
    /// relative tolerance on γ when tuning [default: 1e-4]
    #[arg(long, global = true)]
    pub gamma_tol: Option<f64>,
    /// inner linear-solve tolerance of the excitation operator [default: 1e-12]
    #[arg(long, global = true)]
    pub krylov_tol: Option<f64>,
    /// eigenvalue residual tolerance [default: 1e-8]
    #[arg(long, global = true)]
    pub eig_tol: Option<f64>,
    /// drop excitation directions along r-eigenvalues below this fraction of the largest
    /// [default: off, 1e-10 for bound-state]
    #[arg(long, global = true)]
    pub min_schmidt_ratio: Option<f64>,
    /// Gauss-Legendre nodes of the Bethe solver [default: 256]
    #[arg(long, global = true)]
    pub n_quad: Option<usize>,
    /// random seed [default: 1]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// ground state to load instead of optimizing (JSON state file)
    #[arg(long, global = true)]
    pub state: Option<PathBuf>,
    /// output directory [default: $CMPS_OUTPUT_DIR, else ./cmps-out]
    #[arg(short = 'o', long, global = true)]
    pub output: Option<PathBuf>,
    /// worker threads [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = &o.$f { cfg.$f = v.clone().into(); } )*};
        }
        set!(model, c, mu, gamma, u, u_im, d, d_list, sectors, theta, k, gammas, grad_tol, gamma_tol);
        set!(krylov_tol, eig_tol, min_schmidt_ratio, n_quad, seed, state, output, threads);
        if let Some(v) = o.p_min {
            cfg.grid.min = v;
        }
        if let Some(v) = o.p_max {
            cfg.grid.max = v;
        }
        if let Some(v) = o.p_count {
            cfg.grid.count = v;
        }
        cfg.delta_n |= o.delta_n;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let positive = |x: Option<f64>| x.is_none_or(|v| v > 0.0 && v.is_finite());
        if !positive(self.c) {
            return bad(format!("c must be positive, got {:?}", self.c));
        }
        if !positive(self.gamma) {
            return bad(format!("gamma must be positive, got {:?}", self.gamma));
        }
        if self.mu.is_some_and(|m| !m.is_finite()) || !self.u.is_finite() || !self.u_im.is_finite() {
            return bad("mu and u must be finite".into());
        }
        if self.model == Model::Ll && (self.u != 0.0 || self.u_im != 0.0) {
            return bad("the ll model has no pairing term; use --model pairing".into());
        }
        if self.d == 0 || self.d_list.contains(&0) {
            return bad("bond dimensions must be positive".into());
        }
        if self.k == 0 || self.grid.count == 0 || self.kink_points < 2 {
            return bad("k and the grid count must be positive, kink_points at least 2".into());
        }
        if !(self.grid.min.is_finite() && self.grid.max.is_finite() && self.grid.min <= self.grid.max) {
            return bad(format!("momentum grid [{}, {}] is not an interval", self.grid.min, self.grid.max));
        }
        for (name, v) in [
            ("grad_tol", self.grad_tol),
            ("gamma_tol", self.gamma_tol),
            ("krylov_tol", self.krylov_tol),
            ("eig_tol", self.eig_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return bad("every entry of gammas must be positive".into());
        }
        if self.min_schmidt_ratio.is_some_and(|r| !(0.0..1.0).contains(&r)) {
            return bad("min_schmidt_ratio must lie in [0, 1)".into());
        }
        if self.n_quad < 8 {
            return bad("n_quad must be at least 8".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("cmps-out"))
    }
}
