//! Reference games: the five-robot sensor network, the optical OSNR power
//! game and seeded synthetic quadratic games.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentLaw, EstimateInit, LawVariant, NetworkSystem};
use crate::error::{check_len, Error, Result};
use crate::exosystem::Exosystem;
use crate::game::{
    exact_constants, sample_constants, ActionLayout, Game, PlayerGradients, Sampling,
    SamplingRegion,
};
use crate::linalg::C64;
use crate::network::Graph;
use crate::sim::Experiment;

/// Robot targets `r_i`.
pub const SENSOR_TARGETS: [[f64; 2]; 5] = [
    [2.0, -2.0],
    [-2.0, -2.0],
    [-4.0, 2.0],
    [2.0, -4.0],
    [3.0, 3.0],
];

/// Constant disturbance acting on every robot.
pub const SENSOR_DISTURBANCE: [f64; 2] = [0.5, 0.0];

/// `J_i = x_iᵀx_i + x_iᵀr_i + Σ_j ‖x_i − x_j‖²` with planar actions; the
/// gradient is `12 x_i − 2 Σ_j x_j + r_i`.
pub fn sensor_network_game() -> Game {
    let n_agents = SENSOR_TARGETS.len();
    let n = 2 * n_agents;
    let jacobian = DMatrix::from_fn(n, n, |a, b| {
        let same_coord = a % 2 == b % 2;
        let diag = if a == b {
            2.0 + 2.0 * n_agents as f64
        } else {
            0.0
        };
        diag - if same_coord { 2.0 } else { 0.0 }
    });
    let linear = DVector::from_iterator(n, SENSOR_TARGETS.iter().flatten().copied());
    let game = Game::quadratic(vec![2; n_agents], jacobian, linear).expect("fixed sensor shapes");
    let c = match game.model() {
        crate::game::CostModel::Quadratic { jacobian, .. } => {
            exact_constants(game.layout(), jacobian)
        }
        crate::game::CostModel::General(_) => unreachable!(),
    };
    game.with_mu(c.mu)
        .and_then(|g| g.with_theta(c.theta))
        .expect("sensor constants are positive")
}

/// Closed-form sensor cost of robot `i`.
pub fn sensor_cost(i: usize, profile: &[f64]) -> f64 {
    let xi = &profile[2 * i..2 * i + 2];
    let r = SENSOR_TARGETS[i];
    let mut j = xi[0] * xi[0] + xi[1] * xi[1] + xi[0] * r[0] + xi[1] * r[1];
    for k in 0..SENSOR_TARGETS.len() {
        let xk = &profile[2 * k..2 * k + 2];
        j += (xi[0] - xk[0]).powi(2) + (xi[1] - xk[1]).powi(2);
    }
    j
}

/// Sensor disturbance generator for one robot: the constant `(0.5, 0)`.
pub fn sensor_disturbance() -> Exosystem {
    Exosystem::constant(&SENSOR_DISTURBANCE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsnrParams {
    /// Pricing parameters `a_i`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Input noise powers `n_i⁰`.
    pub n0: Vec<f64>,
    /// Total power target `P⁰`.
    pub p0: f64,
    /// Link system matrix `Γ` as nested rows.
    pub gamma: Vec<Vec<f64>>,
    /// Pilot-tone modulation indices `m_i`.
    pub modulation: Vec<f64>,
    /// Pilot-tone frequencies in Hz, before time rescaling.
    pub pilot_hz: Vec<f64>,
    /// Simulated seconds per physical second applied to the pilot tones.
    pub time_scale: f64,
}

impl Default for OsnrParams {
    /// Synthetic defaults: `a = b = c = 1`, `n⁰ = 0.05`, `P⁰ = 5`, `Γ_ij = 0.05`
    /// off the diagonal and 1 on it, `m_i = 0.1 i`, `f_i = 10 i` kHz, with
    /// time rescaled by `1e-5` so channel `i` oscillates at `0.1 i` Hz.
    fn default() -> Self {
        let n = 10;
        Self {
            a: vec![1.0; n],
            b: vec![1.0; n],
            c: vec![1.0; n],
            n0: vec![0.05; n],
            p0: 5.0,
            gamma: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.05 }).collect())
                .collect(),
            modulation: (1..=n).map(|i| 0.1 * i as f64).collect(),
            pilot_hz: (1..=n).map(|i| 1e4 * i as f64).collect(),
            time_scale: 1e-5,
        }
    }
}

impl OsnrParams {
    pub fn channels(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.channels();
        if n < 2 {
            return Err(Error::InvalidGame(format!(
                "OSNR needs at least 2 channels, got {n}"
            )));
        }
        for (name, v) in [
            ("b", &self.b),
            ("c", &self.c),
            ("n0", &self.n0),
            ("modulation", &self.modulation),
            ("pilot_hz", &self.pilot_hz),
        ] {
            check_len(name, n, v.len())?;
        }
        check_len("gamma rows", n, self.gamma.len())?;
        for row in &self.gamma {
            check_len("gamma row", n, row.len())?;
        }
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            match v.iter().find(|x| !(**x > 0.0)) {
                Some(bad) => Err(Error::InvalidGame(format!(
                    "OSNR {name} must be positive, got {bad}"
                ))),
                None => Ok(()),
            }
        };
        positive("a", &self.a)?;
        positive("b", &self.b)?;
        positive("c", &self.c)?;
        positive("n0", &self.n0)?;
        positive("pilot_hz", &self.pilot_hz)?;
        positive("P0", &[self.p0])?;
        positive("time_scale", &[self.time_scale])?;
        if self.gamma.iter().flatten().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidGame("OSNR Γ must be nonnegative".into()));
        }
        Ok(())
    }

    /// Pilot tone `d_i = P⁰(1 + m_i sin(2π f_i t))` on the rescaled clock.
    pub fn pilot_tone(&self, i: usize) -> Result<Exosystem> {
        Exosystem::biased_sinusoid(
            self.p0,
            self.p0 * self.modulation[i],
            self.pilot_hz[i] * self.time_scale,
        )
    }
}

/// `J_i = a_i x_i + 1/(P⁰ − Σ_j x_j) − b_i ln(1 + c_i x_i / I_i)` with
/// interference `I_i = n_i⁰ + Σ_{j≠i} Γ_ij x_j`.
#[derive(Debug, Clone)]
pub struct OsnrGradients {
    params: OsnrParams,
}

impl OsnrGradients {
    pub fn new(params: OsnrParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &OsnrParams {
        &self.params
    }

    /// Checks the cost's domain `Σx < P⁰`, `I_i > 0`, `I_i + c_i x_i > 0` and
    /// returns `(P⁰ − Σx, I_i)`. Negative powers are admitted: the learning
    /// dynamics are unconstrained and the pilot tones can push an undamped
    /// channel below zero (see [`OsnrGradients::physically_feasible`]).
    fn margins(&self, i: usize, profile: &[f64]) -> Result<(f64, f64)> {
        let p = &self.params;
        check_len("OSNR profile", p.channels(), profile.len())?;
        let total: f64 = profile.iter().sum();
        let gap = p.p0 - total;
        if !(gap > 0.0) {
            return Err(Error::Domain(format!(
                "OSNR total power {total} reaches the target P0 = {}",
                p.p0
            )));
        }
        let interference = p.n0[i]
            + (0..p.channels())
                .filter(|&j| j != i)
                .map(|j| p.gamma[i][j] * profile[j])
                .sum::<f64>();
        if !(interference > 0.0 && interference + p.c[i] * profile[i] > 0.0) {
            return Err(Error::Domain(format!(
                "OSNR channel {i}: signal-to-interference term outside the log domain \
                 (I = {interference}, x = {})",
                profile[i]
            )));
        }
        Ok((gap, interference))
    }

    /// `x ≥ 0` and `Σx < P⁰`.
    pub fn physically_feasible(&self, profile: &[f64]) -> bool {
        profile.iter().all(|x| *x >= 0.0) && profile.iter().sum::<f64>() < self.params.p0
    }
}

impl PlayerGradients for OsnrGradients {
    fn partial_gradient(&self, i: usize, profile: &[f64], out: &mut [f64]) -> Result<()> {
        let (gap, interference) = self.margins(i, profile)?;
        let p = &self.params;
        out[0] =
            p.a[i] + 1.0 / (gap * gap) - p.b[i] * p.c[i] / (interference + p.c[i] * profile[i]);
        Ok(())
    }

    fn cost(&self, i: usize, profile: &[f64]) -> Option<Result<f64>> {
        let p = &self.params;
        Some(self.margins(i, profile).map(|(gap, interference)| {
            p.a[i] * profile[i] + 1.0 / gap
                - p.b[i] * (1.0 + p.c[i] * profile[i] / interference).ln()
        }))
    }
}

/// Samples used to estimate the OSNR monotonicity constants.
const OSNR_SAMPLES: usize = 4000;

/// OSNR power game with sampled `(μ, θ)` over the box `[0.05, 0.85]·P⁰/N`
/// per channel, which keeps the barrier gap at least `0.15 P⁰`.
pub fn osnr_game(params: OsnrParams) -> Result<Game> {
    let n = params.channels();
    let unit = params.p0 / n as f64;
    let grads = Arc::new(OsnrGradients::new(params)?);
    let game = Game::general(vec![1; n], grads)?;
    let c = sample_constants(
        &game,
        &Sampling {
            budget: OSNR_SAMPLES,
            seed: 0x05e7,
            region: SamplingRegion {
                center: vec![0.45 * unit; n],
                half_width: 0.4 * unit,
            },
        },
    )?;
    game.with_mu(c.mu)?.with_theta(c.theta)
}

/// Random quadratic game `F(x) = A x + r` with `A = Q Λ Qᵀ` symmetric,
/// `μ = 1` and extended-Jacobian constant `θ = conditioning` exactly. The
/// top eigenvector is supported on player 0's block, which makes player 0's
/// row block attain `‖A‖ = conditioning`.
pub fn synthetic_quadratic(dims: Vec<usize>, conditioning: f64, seed: u64) -> Result<Game> {
    if !(conditioning >= 1.0 && conditioning.is_finite()) {
        return Err(Error::InvalidGame(format!(
            "conditioning must be at least 1, got {conditioning}"
        )));
    }
    let layout = ActionLayout::new(dims.clone())?;
    let n = layout.total();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let own = layout.range(0);
    for k in 0..n {
        if !own.contains(&k) {
            g[(k, 0)] = 0.0;
        }
    }
    if g.column(0).norm() == 0.0 {
        g[(0, 0)] = 1.0;
    }
    let q = g.qr().q();
    let mut spectrum = vec![1.0; n];
    spectrum[0] = conditioning;
    for s in spectrum.iter_mut().take(n - 1).skip(1) {
        *s = rng.gen_range(1.0..=conditioning);
    }
    let lambda = DMatrix::from_diagonal(&DVector::from_vec(spectrum));
    let a = &q * lambda * q.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let r = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    Game::quadratic(dims, a, r)?
        .with_mu(1.0)?
        .with_theta(conditioning)
}

/// Named scenarios addressable from configs and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    Sensor {},
    Osnr {
        #[serde(default)]
        params: Option<OsnrParams>,
    },
    Synthetic {
        players: usize,
        #[serde(default = "default_synthetic_dim")]
        dim: usize,
        #[serde(default = "default_conditioning")]
        conditioning: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_synthetic_dim() -> usize {
    1
}

fn default_conditioning() -> f64 {
    2.0
}

impl ScenarioSpec {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sensor" => Ok(ScenarioSpec::Sensor {}),
            "osnr" => Ok(ScenarioSpec::Osnr { params: None }),
            "synthetic" => Ok(ScenarioSpec::Synthetic {
                players: 4,
                dim: default_synthetic_dim(),
                conditioning: default_conditioning(),
                seed: 0,
            }),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected sensor, osnr or synthetic)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioSpec::Sensor {} => "sensor",
            ScenarioSpec::Osnr { .. } => "osnr",
            ScenarioSpec::Synthetic { .. } => "synthetic",
        }
    }

    pub fn osnr_params(&self) -> Option<OsnrParams> {
        match self {
            ScenarioSpec::Osnr { params } => Some(params.clone().unwrap_or_default()),
            _ => None,
        }
    }

    pub fn game(&self) -> Result<Game> {
        match self {
            ScenarioSpec::Sensor {} => Ok(sensor_network_game()),
            ScenarioSpec::Osnr { .. } => osnr_game(self.osnr_params().expect("osnr")),
            ScenarioSpec::Synthetic {
                players,
                dim,
                conditioning,
                seed,
            } => synthetic_quadratic(vec![*dim; *players], *conditioning, *seed),
        }
    }

    /// The scenario's own disturbance for agent `i`.
    pub fn default_disturbance(&self, game: &Game, i: usize) -> Result<Exosystem> {
        match self {
            ScenarioSpec::Sensor {} => Ok(sensor_disturbance()),
            ScenarioSpec::Osnr { .. } => self.osnr_params().expect("osnr").pilot_tone(i),
            ScenarioSpec::Synthetic { .. } => Ok(Exosystem::absent(game.layout().dim(i))),
        }
    }

    /// Initial actions: the origin, except OSNR which starts at `0.1` per
    /// channel inside the feasible region.
    pub fn default_x0(&self, game: &Game) -> Vec<f64> {
        match self {
            ScenarioSpec::Osnr { .. } => vec![0.1; game.total_dim()],
            _ => vec![0.0; game.total_dim()],
        }
    }

    pub fn time_scale(&self) -> Option<f64> {
        self.osnr_params().map(|p| p.time_scale)
    }
}

/// Observer pole choice for internal-model laws.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ObserverPoles {
    /// `{-1, ..., -q_b}` on every decoupled exosystem block.
    #[default]
    Default,
    Shared(Vec<C64>),
    PerAgent(Vec<Vec<C64>>),
}

/// Parameters of the higher-order laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawParams {
    /// Prediction horizon `b_i` of the double-integrator laws.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Chain order `r_i` of the multi-integrator law.
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
}

fn default_horizon() -> f64 {
    1.0
}

fn default_order() -> usize {
    3
}

impl Default for LawParams {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            order: default_order(),
            coefficients: None,
        }
    }
}

/// Assembles a runnable [`Experiment`] from its parts.
#[derive(Debug, Clone)]
pub struct ExperimentBuilder {
    pub name: String,
    pub game: Game,
    pub law: LawVariant,
    pub law_params: LawParams,
    pub graph: Option<Graph>,
    pub disturbances: Vec<Exosystem>,
    pub poles: ObserverPoles,
    pub x0: Vec<f64>,
    pub estimates: EstimateInit,
    pub time_scale: Option<f64>,
    pub convergence_tol: f64,
}

impl ExperimentBuilder {
    /// Scenario defaults: its own disturbances, initial actions and no graph.
    pub fn from_scenario(spec: &ScenarioSpec, law: LawVariant) -> Result<Self> {
        let game = spec.game()?;
        let disturbances = (0..game.players())
            .map(|i| spec.default_disturbance(&game, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: spec.name().to_string(),
            x0: spec.default_x0(&game),
            game,
            law,
            law_params: LawParams::default(),
            graph: None,
            disturbances,
            poles: ObserverPoles::Default,
            estimates: EstimateInit::Zero,
            time_scale: spec.time_scale(),
            convergence_tol: 1e-3,
        })
    }

    pub fn graph(mut self, graph: Graph) -> Self {
        self.graph = Some(graph);
        self
    }

    pub fn disturbances(mut self, d: Vec<Exosystem>) -> Self {
        self.disturbances = d;
        self
    }

    pub fn poles(mut self, poles: ObserverPoles) -> Self {
        self.poles = poles;
        self
    }

    pub fn law_params(mut self, p: LawParams) -> Self {
        self.law_params = p;
        self
    }

    pub fn x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn estimates(mut self, init: EstimateInit) -> Self {
        self.estimates = init;
        self
    }

    pub fn system(&self) -> Result<NetworkSystem> {
        let n = self.game.players();
        check_len("disturbances", n, self.disturbances.len())?;
        let mut plant = Vec::with_capacity(n);
        let mut laws = Vec::with_capacity(n);
        for (i, exo) in self.disturbances.iter().enumerate() {
            if !self.law.uses_internal_model() {
                plant.push(exo.clone());
                laws.push(match self.law {
                    LawVariant::GradientPlayFull => AgentLaw::gradient_play_full(),
                    _ => AgentLaw::gradient_play_partial(),
                });
                continue;
            }
            let exo = match &self.poles {
                ObserverPoles::Default => exo.clone().with_default_observer()?,
                ObserverPoles::Shared(p) => exo.clone().with_observer_poles(p)?,
                ObserverPoles::PerAgent(all) => {
                    check_len("per-agent observer poles", n, all.len())?;
                    exo.clone().with_observer_poles(&all[i])?
                }
            };
            let model = exo.internal_model()?;
            let p = &self.law_params;
            laws.push(match self.law {
                LawVariant::SingleIntFullIm => AgentLaw::single_int_full_im(model)?,
                LawVariant::SingleIntPartialIm => AgentLaw::single_int_partial_im(model)?,
                LawVariant::DoubleIntFullIm => AgentLaw::double_int_full_im(p.horizon, model)?,
                LawVariant::DoubleIntPartialIm => {
                    AgentLaw::double_int_partial_im(p.horizon, model)?
                }
                LawVariant::MultiIntPartialIm => {
                    AgentLaw::multi_int_partial_im(p.order, p.coefficients.clone(), model)?
                }
                LawVariant::GradientPlayFull | LawVariant::GradientPlayPartial => unreachable!(),
            });
            plant.push(exo);
        }
        let graph = if self.law.is_partial() {
            Some(self.graph.clone().ok_or_else(|| {
                Error::Config(format!("law {} needs a communication graph", self.law))
            })?)
        } else {
            self.graph.clone()
        };
        NetworkSystem::new(self.game.clone(), graph, laws, plant)
    }

    pub fn build(&self) -> Result<Experiment> {
        let system = self.system()?;
        let initial_state = system.initial_state(&self.x0, self.estimates)?;
        Ok(Experiment {
            name: self.name.clone(),
            system,
            initial_state,
            initial_w: None,
            x_star: None,
            time_scale: self.time_scale,
            convergence_tol: self.convergence_tol,
        })
    }
}
