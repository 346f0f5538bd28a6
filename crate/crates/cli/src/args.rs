use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "cylfbm", version, about = "Fractional Brownian motion, cylindrical noise and fractional heat equations")]
pub struct Cli {
    /// Print the resolved run configuration as TOML on stderr before running.
    #[arg(long, global = true)]
    pub emit_config: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fractional Brownian motion paths.
    #[command(subcommand)]
    Fbm(FbmCmd),
    /// Fractional integrals, derivatives and the K* transform.
    #[command(subcommand)]
    Frac(FracCmd),
    /// Wiener integral of a step integrand, with the exact second moment.
    Wiener(WienerArgs),
    /// Cylindrical fBm built from an embedding spec.
    #[command(subcommand)]
    Cyl(CylCmd),
    /// Stochastic integral of an operator-valued integrand.
    Integrate(IntegrateArgs),
    /// Spectral heat equation driven by cylindrical fBm.
    #[command(subcommand)]
    Heat(HeatCmd),
    /// The batch validation suite.
    #[command(subcommand)]
    Validate(ValidateCmd),
}

#[derive(Debug, Args, Clone)]
pub struct Seed {
    /// RNG seed; falls back to CYLFBM_SEED.
    #[arg(long, env = "CYLFBM_SEED", default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone)]
pub struct Grid {
    /// Time horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_end: f64,
    /// Number of grid cells.
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
}

#[derive(Debug, Subcommand)]
pub enum FbmCmd {
    /// Sample paths on a uniform grid (CSV: t,path_0,...).
    Sample {
        #[arg(long)]
        hurst: f64,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = 10)]
        paths: usize,
        #[command(flatten)]
        seed: Seed,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct FracIo {
    /// Input function CSV (t,v_0,...); stdin when absent.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum FracCmd {
    /// Right-sided fractional integral I^α_{T−}.
    Integral {
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        io: FracIo,
    },
    /// Right-sided fractional derivative D^α_{T−}.
    Derivative {
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        io: FracIo,
    },
    /// K* transform; also reports the M-norm on stderr.
    Kstar {
        #[arg(long)]
        hurst: f64,
        #[command(flatten)]
        io: FracIo,
    },
}

#[derive(Debug, Args)]
pub struct WienerArgs {
    /// Step integrand CSV: row i holds the value on [t_i, t_{i+1}).
    #[arg(long)]
    pub integrand: PathBuf,
    #[arg(long)]
    pub hurst: f64,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[command(flatten)]
    pub seed: Seed,
    /// Sample CSV (path,v_0,...).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// |z| above which the moment check fails.
    #[arg(long, default_value_t = 4.0)]
    pub z: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TailArg {
    Auto,
    Fitted,
}

#[derive(Debug, Subcommand)]
pub enum CylCmd {
    /// B(t)u* on every path (CSV: path,value).
    Apply {
        /// Embedding spec (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Functional coordinates, comma separated; defaults to the first unit vector.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        functional: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        hurst: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Hilbert–Schmidt test of the embedding.
    Genuine {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = TailArg::Auto)]
        tail: TailArg,
    },
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    /// Integrand spec (TOML).
    #[arg(long)]
    pub psi_spec: PathBuf,
    #[arg(long)]
    pub hurst: f64,
    /// Upper limit (a grid node); defaults to the horizon.
    #[arg(long)]
    pub upto: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[command(flatten)]
    pub seed: Seed,
    /// Sample CSV (path,v_0,...).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Covariance CSV with exact and empirical entries.
    #[arg(long)]
    pub cov_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum HeatCmd {
    /// Existence criterion for the Dirichlet Laplacian preset.
    Check {
        #[arg(long)]
        hurst: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 512)]
        modes: usize,
        /// Power p in q_k = k^p.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        weight_power: f64,
        #[arg(long, value_enum, default_value_t = TailArg::Auto)]
        tail: TailArg,
    },
    /// Mild-solution mode paths (CSV: t,mode_k_path_p).
    Simulate {
        #[arg(long)]
        hurst: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        modes: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        weight_power: f64,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = 4)]
        paths: usize,
        #[command(flatten)]
        seed: Seed,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-mode estimates against their bounds.
    Bounds {
        #[arg(long)]
        hurst: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
        lambda: Vec<f64>,
        #[arg(long = "T", default_value_t = 1.0)]
        t_end: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum ValidateCmd {
    /// Run every check group.
    All {
        #[arg(long, conflicts_with = "full")]
        quick: bool,
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        seed: Seed,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}
