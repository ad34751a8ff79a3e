//! JSON experiment configs.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{EstimateInit, LawVariant};
use crate::error::{Error, Result};
use crate::exosystem::Exosystem;
use crate::game::Game;
use crate::linalg::C64;
use crate::network::Graph;
use crate::scenarios::{ExperimentBuilder, LawParams, ObserverPoles, ScenarioSpec};
use crate::sim::{Experiment, SimConfig};

/// Overrides the configured output directory when set.
pub const OUT_ENV: &str = "NEFLOW_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub scenario: ScenarioSpec,
    pub law: LawVariant,
    #[serde(default)]
    pub law_params: LawParams,
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    /// Same generator for every agent. Omitted means the scenario default.
    #[serde(default)]
    pub disturbance: Option<DisturbanceSpec>,
    /// One generator per agent; exclusive with `disturbance`.
    #[serde(default)]
    pub disturbances: Option<Vec<DisturbanceSpec>>,
    #[serde(default)]
    pub observer_poles: PoleSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    pub sim: SimConfig,
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Complete {},
    Path {},
    Random { p: f64, seed: u64 },
    Adjacency { rows: Vec<Vec<f64>> },
}

impl GraphSpec {
    pub fn build(&self, n: usize) -> Result<Graph> {
        let g = match self {
            GraphSpec::Complete {} => Graph::complete(n)?,
            GraphSpec::Path {} => Graph::path(n)?,
            GraphSpec::Random { p, seed } => Graph::random_connected(n, *p, *seed)?,
            GraphSpec::Adjacency { rows } => Graph::from_nested(rows)?,
        };
        if g.vertices() != n {
            return Err(Error::Config(format!(
                "graph has {} vertices but the game has {n} players",
                g.vertices()
            )));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    /// The scenario's own generator.
    Scenario {},
    None {},
    Constant {
        value: Vec<f64>,
    },
    /// `bias + amplitude sin(2π f t)` on one action component.
    BiasedSinusoid {
        bias: f64,
        amplitude: f64,
        frequency_hz: f64,
        #[serde(default)]
        channel: usize,
    },
    Custom {
        s: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
        w0: Vec<f64>,
    },
}

fn matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!(
            "{what}: every row needs {cols} entries"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl DisturbanceSpec {
    pub fn build(&self, scenario: &ScenarioSpec, game: &Game, i: usize) -> Result<Exosystem> {
        let n_i = game.layout().dim(i);
        match self {
            DisturbanceSpec::Scenario {} => scenario.default_disturbance(game, i),
            DisturbanceSpec::None {} => Ok(Exosystem::absent(n_i)),
            DisturbanceSpec::Constant { value } => Ok(Exosystem::constant(value)),
            DisturbanceSpec::BiasedSinusoid {
                bias,
                amplitude,
                frequency_hz,
                channel,
            } => Exosystem::biased_sinusoid(*bias, *amplitude, *frequency_hz)?
                .on_channel(n_i, *channel),
            DisturbanceSpec::Custom { s, d, w0 } => {
                let q = w0.len();
                Exosystem::new(
                    matrix(s, q, "S")?,
                    matrix(d, q, "D")?,
                    DVector::from_column_slice(w0),
                )
            }
        }
    }
}

/// A pole written as a real number or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Pole {
    Real(f64),
    Complex([f64; 2]),
}

impl Pole {
    pub fn to_c64(self) -> C64 {
        match self {
            Pole::Real(re) => C64::new(re, 0.0),
            Pole::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PoleSpec {
    #[default]
    Default,
    Shared(Vec<Pole>),
    PerAgent(Vec<Vec<Pole>>),
}

impl PoleSpec {
    fn to_poles(&self) -> ObserverPoles {
        let conv = |v: &[Pole]| v.iter().map(|p| p.to_c64()).collect::<Vec<_>>();
        match self {
            PoleSpec::Default => ObserverPoles::Default,
            PoleSpec::Shared(p) => ObserverPoles::Shared(conv(p)),
            PoleSpec::PerAgent(all) => {
                ObserverPoles::PerAgent(all.iter().map(|p| conv(p)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub estimates: EstimateInit,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.disturbance.is_some() && self.disturbances.is_some() {
            return Err(Error::Config(
                "set either `disturbance` or `disturbances`, not both".into(),
            ));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Config(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        if self.law.is_partial() && self.graph.is_none() {
            return Err(Error::Config(format!("law {} needs a `graph`", self.law)));
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}_{}", self.scenario.name(), self.law))
    }

    pub fn builder(&self) -> Result<ExperimentBuilder> {
        let mut b = ExperimentBuilder::from_scenario(&self.scenario, self.law)?;
        b.name = self.name();
        b.convergence_tol = self.convergence_tol;
        let n = b.game.players();
        if let Some(g) = &self.graph {
            b = b.graph(g.build(n)?);
        }
        let specs: Option<Vec<DisturbanceSpec>> = match (&self.disturbance, &self.disturbances) {
            (Some(d), _) => Some(vec![d.clone(); n]),
            (None, Some(all)) => {
                if all.len() != n {
                    return Err(Error::Config(format!(
                        "`disturbances` has {} entries for {n} players",
                        all.len()
                    )));
                }
                Some(all.clone())
            }
            (None, None) => None,
        };
        if let Some(specs) = specs {
            let d = specs
                .iter()
                .enumerate()
                .map(|(i, s)| s.build(&self.scenario, &b.game, i))
                .collect::<Result<Vec<_>>>()?;
            b = b.disturbances(d);
        }
        if let Some(x0) = &self.initial.x0 {
            b = b.x0(x0.clone());
        }
        Ok(b.law_params(self.law_params.clone())
            .poles(self.observer_poles.to_poles())
            .estimates(self.initial.estimates))
    }

    pub fn experiment(&self) -> Result<Experiment> {
        self.builder()?.build()
    }

    /// `$NEFLOW_OUT`, else the configured directory, else `out/<name>`.
    pub fn resolve_output_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(dir);
        }
        self.output_dir
            .clone()
            .unwrap_or_else(|| Path::new("out").join(self.name()))
    }

    /// Replaces the value at a dotted path such as `sim.t_end` or
    /// `graph.p`. `raw` is parsed as JSON, falling back to a plain string.
    pub fn with_override(&self, key: &str, raw: &str) -> Result<Self> {
        let mut root = serde_json::to_value(self)?;
        let value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut slot = &mut root;
        for part in key.split('.') {
            let obj = slot.as_object_mut().ok_or_else(|| {
                Error::Config(format!("`{key}`: `{part}` is not inside an object"))
            })?;
            slot = obj
                .entry(part.to_string())
                .or_insert(serde_json::Value::Null);
        }
        *slot = value;
        let cfg: Self = serde_json::from_value(root)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
