//! TOML model files for `cyl` and `integrate`.

use cylfbm::cylfbm::{Embedding, EmbeddingKind, WeightRule};
use cylfbm::fbm_core::TimeGrid;
use cylfbm::stochint::OperatorIntegrand;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A weight rule: `"k^p"` or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weights {
    Rule(String),
    List(Vec<f64>),
}

impl Weights {
    pub fn to_rule(&self) -> Result<WeightRule, String> {
        match self {
            Weights::List(v) => Ok(WeightRule::List(v.clone())),
            Weights::Rule(s) => {
                let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
                let p = s.strip_prefix("q_k=").unwrap_or(&s);
                let p = p.strip_prefix("k^").ok_or_else(|| format!("weight rule must look like k^p, got {s}"))?;
                let p = p.trim_start_matches('(').trim_end_matches(')');
                p.parse::<f64>().map(WeightRule::Power).map_err(|e| format!("bad exponent {p}: {e}"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Diagonal,
    WeightedBasis,
    Sheet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub kind: Kind,
    pub weights: Weights,
    /// Truncation N.
    pub modes: usize,
    /// Spatial grid size (spatial kinds).
    pub m: Option<usize>,
    /// Partition cells (sheet).
    pub cells: Option<usize>,
    pub hurst: Option<f64>,
    pub seed: Option<u64>,
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    pub grid_n: Option<usize>,
}

impl EmbeddingSpec {
    pub fn parse(s: &str) -> Result<EmbeddingSpec, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    pub fn build(&self) -> Result<Embedding, String> {
        let w = self.weights.to_rule()?;
        let kind = match self.kind {
            Kind::Diagonal => return Embedding::diagonal(w, self.modes).map_err(|e| e.to_string()),
            Kind::WeightedBasis => EmbeddingKind::WeightedBasis,
            Kind::Sheet => EmbeddingKind::Sheet { cells: self.cells.unwrap_or(2) },
        };
        let m = self.m.unwrap_or(self.modes + 2);
        Embedding::spatial(kind, w, self.modes, m).map_err(|e| e.to_string())
    }

    pub fn grid(&self) -> Result<TimeGrid, String> {
        TimeGrid::new(self.t_end.unwrap_or(1.0), self.grid_n.unwrap_or(16)).map_err(|e| e.to_string())
    }
}

/// An integrand A(t) = i*Ψ*(t), N modes × m_V functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiSpec {
    /// diag(q_k e^{−λ_k (anchor − t)}), or diag(q_k e^{−λ_k t}) without an anchor.
    Diagonal {
        lambda: Vec<f64>,
        q: Vec<f64>,
        anchor: Option<f64>,
        #[serde(rename = "T")]
        t_end: f64,
        n: usize,
    },
    /// A0 + t·A1 with rows indexed by mode.
    Linear {
        a0: Vec<Vec<f64>>,
        a1: Option<Vec<Vec<f64>>>,
        #[serde(rename = "T")]
        t_end: f64,
        n: usize,
    },
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
        return Err("matrix rows must be nonempty and of equal length".into());
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl PsiSpec {
    pub fn parse(s: &str) -> Result<PsiSpec, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    pub fn build(&self) -> Result<OperatorIntegrand, String> {
        match self {
            PsiSpec::Diagonal { lambda, q, anchor, t_end, n } => {
                let grid = TimeGrid::new(*t_end, *n).map_err(|e| e.to_string())?;
                OperatorIntegrand::diagonal(grid, lambda.clone(), q.clone(), *anchor).map_err(|e| e.to_string())
            }
            PsiSpec::Linear { a0, a1, t_end, n } => {
                let grid = TimeGrid::new(*t_end, *n).map_err(|e| e.to_string())?;
                let a0 = matrix(a0)?;
                let a1 = match a1 {
                    Some(a) => matrix(a)?,
                    None => DMatrix::zeros(a0.nrows(), a0.ncols()),
                };
                if a1.shape() != a0.shape() {
                    return Err("a0 and a1 must have the same shape".into());
                }
                let nodes = grid.nodes().iter().map(|t| &a0 + &a1 * *t).collect();
                OperatorIntegrand::nodes(grid, nodes).map_err(|e| e.to_string())
            }
        }
    }
}
