//! Fixed-step RK4 and adaptive Dormand–Prince integration, trajectory
//! recording and convergence metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{NetworkSystem, StackedState};
use crate::error::{check_len, Error, Result};
use crate::game::{self, StackedEstimate};
use crate::network::{check_condition, ConditionReport};

/// Thresholds reported by [`Summary::time_to_tol`].
pub const REPORTED_TOLERANCES: [f64; 2] = [1e-2, 1e-3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Rk4,
    Rk45 { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Record every `record_every`-th fixed step (RK45 records on the same grid).
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_method() -> Method {
    Method::Rk4
}

fn default_record_every() -> usize {
    10
}

impl SimConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            dt: default_dt(),
            method: default_method(),
            record_every: default_record_every(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidSimConfig(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidSimConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidSimConfig(
                "record_every must be at least 1".into(),
            ));
        }
        if let Method::Rk45 { rtol, atol } = self.method {
            if !(rtol > 0.0 && atol > 0.0) {
                return Err(Error::InvalidSimConfig(format!(
                    "rtol and atol must be positive, got {rtol}, {atol}"
                )));
            }
        }
        Ok(())
    }

    /// Number of fixed steps; the last one is shortened to land on `t_end`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    fn grid_time(&self, step: usize) -> f64 {
        (step as f64 * self.dt).min(self.t_end)
    }
}

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl OdeSystem for NetworkSystem {
    fn dim(&self) -> usize {
        self.augmented_len()
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.rhs(y, dy)
    }
}

/// Adapter for closures `f(t, y, dy)`.
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.f)(t, y, dy)
    }
}

/// Recorded samples of an integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

fn eval_at<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
    sys.eval(t, y, dy).map_err(|e| match e {
        e @ Error::AtTime { .. } => e,
        e => Error::AtTime {
            t,
            source: Box::new(e),
        },
    })
}

fn check_finite(t: f64, y: &[f64], last: &[f64]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            t,
            last_finite: last.to_vec(),
        })
    }
}

struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(m: usize) -> Self {
        Self {
            k1: vec![0.0; m],
            k2: vec![0.0; m],
            k3: vec![0.0; m],
            k4: vec![0.0; m],
            tmp: vec![0.0; m],
        }
    }
}

fn rk4_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    h: f64,
    y: &mut [f64],
    w: &mut Rk4Work,
) -> Result<()> {
    let m = y.len();
    eval_at(sys, t, y, &mut w.k1)?;
    for k in 0..m {
        w.tmp[k] = y[k] + 0.5 * h * w.k1[k];
    }
    eval_at(sys, t + 0.5 * h, &w.tmp, &mut w.k2)?;
    for k in 0..m {
        w.tmp[k] = y[k] + 0.5 * h * w.k2[k];
    }
    eval_at(sys, t + 0.5 * h, &w.tmp, &mut w.k3)?;
    for k in 0..m {
        w.tmp[k] = y[k] + h * w.k3[k];
    }
    eval_at(sys, t + h, &w.tmp, &mut w.k4)?;
    for k in 0..m {
        y[k] += h / 6.0 * (w.k1[k] + 2.0 * w.k2[k] + 2.0 * w.k3[k] + w.k4[k]);
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One attempted Dormand–Prince step; returns the scaled error norm and
/// writes the fifth-order solution into `out`.
#[allow(clippy::too_many_arguments)]
fn dp_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    h: f64,
    y: &[f64],
    k: &mut [Vec<f64>; 7],
    tmp: &mut [f64],
    out: &mut [f64],
    rtol: f64,
    atol: f64,
) -> Result<f64> {
    let m = y.len();
    eval_at(sys, t, y, &mut k[0])?;
    for s in 1..7 {
        for c in 0..m {
            let mut acc = y[c];
            for (j, a) in DP_A[s].iter().enumerate().take(s) {
                acc += h * a * k[j][c];
            }
            tmp[c] = acc;
        }
        eval_at(sys, t + DP_C[s] * h, tmp, &mut k[s])?;
    }
    let mut err_sq = 0.0;
    for c in 0..m {
        let mut hi = y[c];
        let mut lo = y[c];
        for s in 0..7 {
            hi += h * DP_B5[s] * k[s][c];
            lo += h * DP_B4[s] * k[s][c];
        }
        out[c] = hi;
        let scale = atol + rtol * y[c].abs().max(hi.abs());
        err_sq += ((hi - lo) / scale).powi(2);
    }
    Ok((err_sq / m.max(1) as f64).sqrt())
}

/// Integrates `sys` from `y0` over `[0, t_end]`, recording every
/// `record_every` grid steps plus the final time.
pub fn integrate<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], cfg: &SimConfig) -> Result<Samples> {
    cfg.validate()?;
    check_len("initial state", sys.dim(), y0.len())?;
    check_finite(0.0, y0, y0)?;
    let steps = cfg.steps();
    let mut times = vec![0.0];
    let mut states = vec![y0.to_vec()];
    let mut y = y0.to_vec();
    let mut last = y0.to_vec();
    match cfg.method {
        Method::Rk4 => {
            let mut work = Rk4Work::new(y.len());
            for step in 0..steps {
                let t = cfg.grid_time(step);
                let h = cfg.grid_time(step + 1) - t;
                rk4_step(sys, t, h, &mut y, &mut work)?;
                let t_next = cfg.grid_time(step + 1);
                check_finite(t_next, &y, &last)?;
                last.copy_from_slice(&y);
                if (step + 1) % cfg.record_every == 0 || step + 1 == steps {
                    times.push(t_next);
                    states.push(y.clone());
                }
            }
        }
        Method::Rk45 { rtol, atol } => {
            let m = y.len();
            let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; m]);
            let mut tmp = vec![0.0; m];
            let mut trial = vec![0.0; m];
            let mut h = cfg.dt;
            let mut t = 0.0;
            let mut target_step = cfg.record_every.min(steps);
            while target_step <= steps {
                let target = cfg.grid_time(target_step);
                while t < target {
                    let h_try = h.min(target - t);
                    let err = dp_step(sys, t, h_try, &y, &mut k, &mut tmp, &mut trial, rtol, atol)?;
                    if !err.is_finite() {
                        check_finite(t + h_try, &trial, &last)?;
                    }
                    let factor = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if err <= 1.0 {
                        let landed = h_try >= target - t;
                        t = if landed { target } else { t + h_try };
                        y.copy_from_slice(&trial);
                        check_finite(t, &y, &last)?;
                        last.copy_from_slice(&y);
                        if h_try == h {
                            h *= factor;
                        }
                    } else {
                        h = h_try * factor;
                    }
                    if h < 1e-14 * t.max(1.0) {
                        return Err(Error::InvalidSimConfig(format!(
                            "adaptive step size underflow at t = {t}"
                        )));
                    }
                }
                times.push(target);
                states.push(y.clone());
                if target_step == steps {
                    break;
                }
                target_step = (target_step + cfg.record_every).min(steps);
            }
        }
    }
    Ok(Samples { times, states })
}

/// Per-sample convergence metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// `‖x - x*‖`
    pub ne_error: f64,
    /// `‖𝐱 - 1_N ⊗ x̄‖` with `x̄` the blockwise mean of the stacked estimate.
    pub consensus_error: f64,
    pub velocity_norm: f64,
    /// `‖ρ‖` over all agents.
    pub observer_norm: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = [
        "ne_error",
        "consensus_error",
        "velocity_norm",
        "observer_norm",
    ];

    pub fn values(&self) -> [f64; 4] {
        [
            self.ne_error,
            self.consensus_error,
            self.velocity_norm,
            self.observer_norm,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Agent states, laid out by [`crate::dynamics::StateLayout`].
    pub states: Vec<Vec<f64>>,
    pub w_states: Vec<Vec<f64>>,
    pub metrics: Vec<Metrics>,
}

impl Trajectory {
    pub fn from_samples(sys: &NetworkSystem, samples: Samples, x_star: &[f64]) -> Result<Self> {
        check_len("equilibrium", sys.game().total_dim(), x_star.len())?;
        let split = sys.layout().agent_len();
        let mut states = Vec::with_capacity(samples.states.len());
        let mut w_states = Vec::with_capacity(samples.states.len());
        let mut metrics = Vec::with_capacity(samples.states.len());
        for mut y in samples.states {
            let w = y.split_off(split);
            metrics.push(measure(sys, &y, &w, x_star)?);
            states.push(y);
            w_states.push(w);
        }
        Ok(Self {
            times: samples.times,
            states,
            w_states,
            metrics,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn stacked(&self, sys: &NetworkSystem, k: usize) -> Result<StackedState> {
        StackedState::unflatten(sys.layout(), &self.states[k])
    }

    pub fn final_metrics(&self) -> Metrics {
        *self
            .metrics
            .last()
            .expect("trajectory has at least the initial sample")
    }

    pub fn metric_series(&self, f: impl Fn(&Metrics) -> f64) -> Vec<f64> {
        self.metrics.iter().map(f).collect()
    }

    /// Indices of samples with `t >= fraction * t_end`.
    pub fn tail(&self, fraction: f64) -> std::ops::Range<usize> {
        let t_end = *self.times.last().unwrap_or(&0.0);
        let start = self
            .times
            .partition_point(|&t| t < (1.0 - fraction) * t_end);
        start..self.times.len()
    }
}

pub fn measure(sys: &NetworkSystem, state: &[f64], w: &[f64], x_star: &[f64]) -> Result<Metrics> {
    let x = sys.actions(state);
    let diff: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
    let ne_error = game::norm(&diff);
    let consensus_error = match sys.stacked_estimate(state) {
        Some(est) => consensus_distance(sys.game().layout().players(), &est),
        None => 0.0,
    };
    let velocity_norm = game::norm(&sys.velocities(state));
    let observer_norm = if sys.variant().uses_internal_model() {
        let rho: Vec<f64> = sys
            .observer_error(state, w)?
            .into_iter()
            .flatten()
            .collect();
        game::norm(&rho)
    } else {
        0.0
    };
    Ok(Metrics {
        ne_error,
        consensus_error,
        velocity_norm,
        observer_norm,
    })
}

/// `‖𝐱 - 1_N ⊗ x̄‖`
pub fn consensus_distance(agents: usize, stacked: &[f64]) -> f64 {
    let n = stacked.len() / agents;
    let mut mean = vec![0.0; n];
    for i in 0..agents {
        for k in 0..n {
            mean[k] += stacked[i * n + k] / agents as f64;
        }
    }
    let mut acc = 0.0;
    for i in 0..agents {
        for k in 0..n {
            acc += (stacked[i * n + k] - mean[k]).powi(2);
        }
    }
    acc.sqrt()
}

/// First time after which `series` stays strictly below `tol`.
pub fn time_to_tol(times: &[f64], series: &[f64], tol: f64) -> Option<f64> {
    let last_violation = series.iter().rposition(|&v| !(v < tol));
    match last_violation {
        None => times.first().copied(),
        Some(k) if k + 1 < series.len() => Some(times[k + 1]),
        Some(_) => None,
    }
}

/// Everything `run_experiment` needs beyond the simulation settings.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub system: NetworkSystem,
    /// Initial agent state (without `w`).
    pub initial_state: Vec<f64>,
    /// Initial exosystem states; `None` takes each generator's `w0`.
    pub initial_w: Option<Vec<f64>>,
    /// Oracle equilibrium; `None` solves for it.
    pub x_star: Option<Vec<f64>>,
    /// Physical seconds per simulated second, when the scenario was rescaled.
    pub time_scale: Option<f64>,
    pub convergence_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub law: String,
    pub converged: bool,
    pub convergence_tol: f64,
    pub final_ne_error: f64,
    pub final_consensus_error: f64,
    pub final_velocity_norm: f64,
    pub final_observer_norm: f64,
    /// Keyed by the tolerance in `{:e}` format.
    pub time_to_tol: BTreeMap<String, Option<f64>>,
    pub x_star: Vec<f64>,
    pub final_actions: Vec<f64>,
    pub mu: Option<f64>,
    pub theta: Option<f64>,
    pub lambda2: Option<f64>,
    pub condition: Option<ConditionReport>,
    pub warnings: Vec<String>,
    pub time_scale: Option<f64>,
    pub t_end: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub trajectory: Trajectory,
    pub summary: Summary,
}

pub fn run_experiment(exp: &Experiment, sim: &SimConfig) -> Result<Run> {
    let sys = &exp.system;
    let game = sys.game();
    let x_star = match &exp.x_star {
        Some(x) => x.clone(),
        None => game::solve_ne(game, &game::SolveOptions::default())?,
    };
    let mut y0 = exp.initial_state.clone();
    check_len("initial agent state", sys.layout().agent_len(), y0.len())?;
    match &exp.initial_w {
        Some(w) => {
            check_len("initial exosystem state", sys.layout().exo_len(), w.len())?;
            y0.extend_from_slice(w);
        }
        None => y0.extend(sys.initial_exo_state()),
    }
    let samples = integrate(sys, &y0, sim)?;
    let trajectory = Trajectory::from_samples(sys, samples, &x_star)?;

    let mut warnings = sys.warnings().to_vec();
    let lambda2 = sys.graph().map(|g| g.lambda2());
    let condition = match (sys.variant().is_partial(), game.mu(), game.theta(), lambda2) {
        (true, Some(mu), Some(theta), Some(l2)) => {
            let report = check_condition(mu, theta, l2);
            if !report.holds {
                warnings.push(format!(
                    "sufficient condition mu(lambda2 - theta) > theta^2 fails (margin {:.6}); \
                     convergence is not guaranteed",
                    report.margin
                ));
            }
            Some(report)
        }
        _ => None,
    };

    let last = trajectory.final_metrics();
    let mut ttt = BTreeMap::new();
    let ne = trajectory.metric_series(|m| m.ne_error);
    for tol in REPORTED_TOLERANCES {
        ttt.insert(format!("{tol:e}"), time_to_tol(&trajectory.times, &ne, tol));
    }
    let final_actions = sys.actions(trajectory.states.last().expect("non-empty trajectory"));
    let summary = Summary {
        name: exp.name.clone(),
        law: sys.variant().name().to_string(),
        converged: last.ne_error < exp.convergence_tol,
        convergence_tol: exp.convergence_tol,
        final_ne_error: last.ne_error,
        final_consensus_error: last.consensus_error,
        final_velocity_norm: last.velocity_norm,
        final_observer_norm: last.observer_norm,
        time_to_tol: ttt,
        x_star: x_star.clone(),
        final_actions,
        mu: game.mu(),
        theta: game.theta(),
        lambda2,
        condition,
        warnings,
        time_scale: exp.time_scale,
        t_end: sim.t_end,
        samples: trajectory.len(),
    };
    Ok(Run {
        trajectory,
        summary,
    })
}

/// Consensus profile `1_N ⊗ x` as a stacked estimate.
pub fn consensus_of(sys: &NetworkSystem, x: &[f64]) -> Result<Vec<f64>> {
    Ok(StackedEstimate::consensus(sys.game().layout(), x)?.into_vec())
}
