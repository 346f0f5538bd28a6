use crate::args::{CylCmd, FbmCmd, FracCmd, HeatCmd, ValidateCmd};
use crate::args::{Cli, Command};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub t_end: f64,
    pub n: usize,
}

/// The resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub verb: String,
    pub hurst: Option<f64>,
    pub grid: Option<GridConfig>,
    pub model: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    #[cfg(test)]
    pub fn from_toml(s: &str) -> Result<RunConfig, toml::de::Error> {
        toml::from_str(s)
    }

    fn new(verb: &str) -> RunConfig {
        RunConfig {
            verb: verb.into(),
            hurst: None,
            grid: None,
            model: None,
            seed: None,
            output: None,
            tolerances: BTreeMap::new(),
        }
    }
}

impl From<&Cli> for RunConfig {
    fn from(cli: &Cli) -> RunConfig {
        match &cli.command {
            Command::Fbm(FbmCmd::Sample { hurst, grid, seed, out, .. }) => RunConfig {
                hurst: Some(*hurst),
                grid: Some(GridConfig { t_end: grid.t_end, n: grid.grid_n }),
                seed: Some(seed.seed),
                output: out.clone(),
                ..RunConfig::new("fbm sample")
            },
            Command::Frac(cmd) => {
                let (verb, io, hurst) = match cmd {
                    FracCmd::Integral { io, .. } => ("frac integral", io, None),
                    FracCmd::Derivative { io, .. } => ("frac derivative", io, None),
                    FracCmd::Kstar { io, hurst } => ("frac kstar", io, Some(*hurst)),
                };
                RunConfig { hurst, model: io.input.clone(), output: io.out.clone(), ..RunConfig::new(verb) }
            }
            Command::Wiener(a) => {
                let mut c = RunConfig {
                    hurst: Some(a.hurst),
                    model: Some(a.integrand.clone()),
                    seed: Some(a.seed.seed),
                    output: a.out.clone(),
                    ..RunConfig::new("wiener")
                };
                c.tolerances.insert("z".into(), a.z);
                c
            }
            Command::Cyl(CylCmd::Apply { config, out, hurst, seed, .. }) => RunConfig {
                hurst: *hurst,
                model: Some(config.clone()),
                seed: *seed,
                output: out.clone(),
                ..RunConfig::new("cyl apply")
            },
            Command::Cyl(CylCmd::Genuine { config, .. }) => {
                RunConfig { model: Some(config.clone()), ..RunConfig::new("cyl genuine") }
            }
            Command::Integrate(a) => RunConfig {
                hurst: Some(a.hurst),
                model: Some(a.psi_spec.clone()),
                seed: Some(a.seed.seed),
                output: a.out.clone(),
                ..RunConfig::new("integrate")
            },
            Command::Heat(HeatCmd::Check { hurst, .. }) => {
                RunConfig { hurst: Some(*hurst), ..RunConfig::new("heat check") }
            }
            Command::Heat(HeatCmd::Simulate { hurst, grid, seed, out, .. }) => RunConfig {
                hurst: Some(*hurst),
                grid: Some(GridConfig { t_end: grid.t_end, n: grid.grid_n }),
                seed: Some(seed.seed),
                output: out.clone(),
                ..RunConfig::new("heat simulate")
            },
            Command::Heat(HeatCmd::Bounds { hurst, t_end, .. }) => RunConfig {
                hurst: Some(*hurst),
                grid: Some(GridConfig { t_end: *t_end, n: 1 }),
                ..RunConfig::new("heat bounds")
            },
            Command::Validate(ValidateCmd::All { seed, out, full, .. }) => RunConfig {
                seed: Some(seed.seed),
                output: out.clone(),
                ..RunConfig::new(if *full { "validate all --full" } else { "validate all --quick" })
            },
        }
    }
}
