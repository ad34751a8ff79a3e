//! Closed-loop agent learning dynamics.
//!
//! Agent state layout, per agent and in agent order:
//!
//! ```text
//! [ x_i (n_i) | v_i (n_i (r_i - 1)) | x^i_{-i} (n - n_i) | ξ_i (q_i) ]
//! ```
//!
//! where the velocity block is absent for single integrators, the estimate
//! block only exists for partial-information laws and `ξ_i` only for
//! internal-model laws. The exosystem states `w = (w_1, ..., w_N)` are kept in
//! a separate vector and appended to the agent state by the simulator.

mod laws;
pub mod selection;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::exosystem::{Exosystem, InternalModel};
use crate::game::{ActionLayout, Game};
use crate::linalg;
use crate::network::Graph;

pub use laws::{
    rhs_double_int_full_im, rhs_double_int_partial_im, rhs_gradient_play_full,
    rhs_gradient_play_partial, rhs_multi_int_partial_im, rhs_single_int_full_im,
    rhs_single_int_partial_im,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawVariant {
    GradientPlayFull,
    GradientPlayPartial,
    SingleIntFullIm,
    SingleIntPartialIm,
    DoubleIntFullIm,
    DoubleIntPartialIm,
    MultiIntPartialIm,
}

impl LawVariant {
    pub const ALL: [LawVariant; 7] = [
        LawVariant::GradientPlayFull,
        LawVariant::GradientPlayPartial,
        LawVariant::SingleIntFullIm,
        LawVariant::SingleIntPartialIm,
        LawVariant::DoubleIntFullIm,
        LawVariant::DoubleIntPartialIm,
        LawVariant::MultiIntPartialIm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LawVariant::GradientPlayFull => "gradient_play_full",
            LawVariant::GradientPlayPartial => "gradient_play_partial",
            LawVariant::SingleIntFullIm => "single_int_full_im",
            LawVariant::SingleIntPartialIm => "single_int_partial_im",
            LawVariant::DoubleIntFullIm => "double_int_full_im",
            LawVariant::DoubleIntPartialIm => "double_int_partial_im",
            LawVariant::MultiIntPartialIm => "multi_int_partial_im",
        }
    }

    pub fn is_partial(self) -> bool {
        matches!(
            self,
            LawVariant::GradientPlayPartial
                | LawVariant::SingleIntPartialIm
                | LawVariant::DoubleIntPartialIm
                | LawVariant::MultiIntPartialIm
        )
    }

    pub fn uses_internal_model(self) -> bool {
        !matches!(
            self,
            LawVariant::GradientPlayFull | LawVariant::GradientPlayPartial
        )
    }
}

impl fmt::Display for LawVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LawVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LawVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidLaw(format!("unknown law variant `{s}`")))
    }
}

/// The learning law one agent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentLaw {
    variant: LawVariant,
    order: usize,
    horizon: Option<f64>,
    coefficients: Vec<f64>,
    model: Option<InternalModel>,
}

impl AgentLaw {
    pub fn gradient_play_full() -> Self {
        Self::plain(LawVariant::GradientPlayFull, 1, None, Vec::new(), None)
    }

    pub fn gradient_play_partial() -> Self {
        Self::plain(LawVariant::GradientPlayPartial, 1, None, Vec::new(), None)
    }

    pub fn single_int_full_im(model: InternalModel) -> Result<Self> {
        Self::with_model(LawVariant::SingleIntFullIm, 1, None, Vec::new(), model)
    }

    pub fn single_int_partial_im(model: InternalModel) -> Result<Self> {
        Self::with_model(LawVariant::SingleIntPartialIm, 1, None, Vec::new(), model)
    }

    pub fn double_int_full_im(horizon: f64, model: InternalModel) -> Result<Self> {
        check_horizon(horizon)?;
        Self::with_model(
            LawVariant::DoubleIntFullIm,
            2,
            Some(horizon),
            Vec::new(),
            model,
        )
    }

    pub fn double_int_partial_im(horizon: f64, model: InternalModel) -> Result<Self> {
        check_horizon(horizon)?;
        Self::with_model(
            LawVariant::DoubleIntPartialIm,
            2,
            Some(horizon),
            Vec::new(),
            model,
        )
    }

    /// Order-`r` chain of integrators. `coefficients` are the interior
    /// coefficients `(c_1, ..., c_{r-2})` of the Hurwitz polynomial
    /// `s^{r-1} + c_{r-2}s^{r-2} + ... + c_1 s + 1`; `None` selects `(s+1)^{r-1}`.
    pub fn multi_int_partial_im(
        order: usize,
        coefficients: Option<Vec<f64>>,
        model: InternalModel,
    ) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidLaw(format!(
                "multi-integrator order must be at least 2, got {order}"
            )));
        }
        let c = coefficients.unwrap_or_else(|| default_hurwitz_coefficients(order));
        if c.len() != order - 2 {
            return Err(Error::InvalidLaw(format!(
                "order {order} needs {} interior coefficients, got {}",
                order - 2,
                c.len()
            )));
        }
        check_hurwitz(&c)?;
        Self::with_model(LawVariant::MultiIntPartialIm, order, None, c, model)
    }

    fn plain(
        variant: LawVariant,
        order: usize,
        horizon: Option<f64>,
        coefficients: Vec<f64>,
        model: Option<InternalModel>,
    ) -> Self {
        Self {
            variant,
            order,
            horizon,
            coefficients,
            model,
        }
    }

    fn with_model(
        variant: LawVariant,
        order: usize,
        horizon: Option<f64>,
        coefficients: Vec<f64>,
        model: InternalModel,
    ) -> Result<Self> {
        let q = model.state_dim();
        if model.s.ncols() != q || model.d.ncols() != q || model.k.nrows() != q {
            return Err(Error::InvalidLaw(
                "inconsistent internal model shapes".into(),
            ));
        }
        if model.k.ncols() != model.output_dim() {
            return Err(Error::InvalidLaw(
                "K must have one column per output".into(),
            ));
        }
        let abscissa = linalg::spectral_abscissa(&model.error_matrix());
        if abscissa >= 0.0 {
            return Err(Error::InvalidLaw(format!(
                "observer gain does not stabilize S - KD (max real part {abscissa:e})"
            )));
        }
        Ok(Self::plain(
            variant,
            order,
            horizon,
            coefficients,
            Some(model),
        ))
    }

    pub fn variant(&self) -> LawVariant {
        self.variant
    }

    /// Integrator order `r_i`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Prediction horizon `b_i` (double-integrator laws).
    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn internal_model(&self) -> Option<&InternalModel> {
        self.model.as_ref()
    }

    fn observer_dim(&self) -> usize {
        self.model.as_ref().map_or(0, InternalModel::state_dim)
    }
}

fn check_horizon(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidLaw(format!(
            "prediction horizon must be positive, got {b}"
        )))
    }
}

/// Interior coefficients of `(s + 1)^{r-1}`, i.e. binomial coefficients.
pub fn default_hurwitz_coefficients(order: usize) -> Vec<f64> {
    let m = order.saturating_sub(1);
    let mut row = vec![1.0f64];
    for _ in 0..m {
        let mut next = vec![1.0; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    if row.len() <= 2 {
        Vec::new()
    } else {
        row[1..row.len() - 1].to_vec()
    }
}

const HURWITZ_TOL: f64 = 1e-9;

/// Checks that `s^{m} + c_{m-1}s^{m-1} + ... + c_1 s + 1` is Hurwitz.
pub fn check_hurwitz(interior: &[f64]) -> Result<()> {
    let mut lower = Vec::with_capacity(interior.len() + 1);
    lower.push(1.0);
    lower.extend_from_slice(interior);
    let roots = linalg::monic_roots(&lower);
    match roots.iter().find(|z| !(z.re < -HURWITZ_TOL)) {
        Some(z) => Err(Error::InvalidLaw(format!(
            "coefficients {interior:?} are not Hurwitz (root {z})"
        ))),
        None => Ok(()),
    }
}

/// Slots of one agent inside the flat agent state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentSlots {
    pub action: Range<usize>,
    pub velocity: Range<usize>,
    pub estimates: Range<usize>,
    pub observer: Range<usize>,
}

impl AgentSlots {
    /// `k`-th velocity chunk `v_i^{k+1}`.
    pub fn velocity_chunk(&self, k: usize, dim: usize) -> Range<usize> {
        let s = self.velocity.start + k * dim;
        s..s + dim
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    agents: Vec<AgentSlots>,
    agent_len: usize,
    exo: Vec<Range<usize>>,
    exo_len: usize,
}

impl StateLayout {
    pub fn new(actions: &ActionLayout, laws: &[AgentLaw], exo_dims: &[usize]) -> Result<Self> {
        check_len("agent laws", actions.players(), laws.len())?;
        check_len("exosystems", actions.players(), exo_dims.len())?;
        let n = actions.total();
        let mut cursor = 0;
        let mut agents = Vec::with_capacity(laws.len());
        for (i, law) in laws.iter().enumerate() {
            let ni = actions.dim(i);
            let mut take = |len: usize| {
                let r = cursor..cursor + len;
                cursor += len;
                r
            };
            let action = take(ni);
            let velocity = take(ni * (law.order() - 1));
            let estimates = take(if law.variant().is_partial() {
                n - ni
            } else {
                0
            });
            let observer = take(law.observer_dim());
            agents.push(AgentSlots {
                action,
                velocity,
                estimates,
                observer,
            });
        }
        let mut exo = Vec::with_capacity(exo_dims.len());
        let mut w = 0;
        for &q in exo_dims {
            exo.push(w..w + q);
            w += q;
        }
        Ok(Self {
            agents,
            agent_len: cursor,
            exo,
            exo_len: w,
        })
    }

    pub fn agent(&self, i: usize) -> &AgentSlots {
        &self.agents[i]
    }

    pub fn agents(&self) -> usize {
        self.agents.len()
    }

    /// Length of the agent state (without exosystem states).
    pub fn agent_len(&self) -> usize {
        self.agent_len
    }

    pub fn exo(&self, i: usize) -> Range<usize> {
        self.exo[i].clone()
    }

    pub fn exo_len(&self) -> usize {
        self.exo_len
    }
}

/// One agent's state, unflattened.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentBlock {
    pub action: Vec<f64>,
    pub velocity: Vec<f64>,
    pub estimates: Vec<f64>,
    pub observer: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedState {
    pub agents: Vec<AgentBlock>,
}

impl StackedState {
    pub fn unflatten(layout: &StateLayout, flat: &[f64]) -> Result<Self> {
        check_len("agent state", layout.agent_len(), flat.len())?;
        let agents = layout
            .agents
            .iter()
            .map(|s| AgentBlock {
                action: flat[s.action.clone()].to_vec(),
                velocity: flat[s.velocity.clone()].to_vec(),
                estimates: flat[s.estimates.clone()].to_vec(),
                observer: flat[s.observer.clone()].to_vec(),
            })
            .collect();
        Ok(Self { agents })
    }

    pub fn flatten(&self, layout: &StateLayout) -> Result<Vec<f64>> {
        check_len("agent blocks", layout.agents(), self.agents.len())?;
        let mut out = vec![0.0; layout.agent_len()];
        for (block, slots) in self.agents.iter().zip(&layout.agents) {
            check_len("action", slots.action.len(), block.action.len())?;
            check_len("velocity", slots.velocity.len(), block.velocity.len())?;
            check_len("estimates", slots.estimates.len(), block.estimates.len())?;
            check_len("observer", slots.observer.len(), block.observer.len())?;
            out[slots.action.clone()].copy_from_slice(&block.action);
            out[slots.velocity.clone()].copy_from_slice(&block.velocity);
            out[slots.estimates.clone()].copy_from_slice(&block.estimates);
            out[slots.observer.clone()].copy_from_slice(&block.observer);
        }
        Ok(out)
    }
}

/// How the estimate blocks start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateInit {
    #[default]
    Zero,
    /// Each agent starts from the true initial (predicted) profile.
    Actions,
}

/// Game, communication graph, agent laws and disturbance generators wired
/// into one vector field.
#[derive(Debug, Clone)]
pub struct NetworkSystem {
    game: Game,
    graph: Option<Graph>,
    laws: Vec<AgentLaw>,
    plant: Vec<Exosystem>,
    layout: StateLayout,
    warnings: Vec<String>,
}

impl NetworkSystem {
    pub fn new(
        game: Game,
        graph: Option<Graph>,
        laws: Vec<AgentLaw>,
        plant: Vec<Exosystem>,
    ) -> Result<Self> {
        let actions = game.layout().clone();
        let n_agents = actions.players();
        check_len("agent laws", n_agents, laws.len())?;
        check_len("exosystems", n_agents, plant.len())?;
        let variant = laws[0].variant();
        if let Some(other) = laws.iter().find(|l| l.variant() != variant) {
            return Err(Error::InvalidLaw(format!(
                "all agents must run the same law family ({variant} vs {})",
                other.variant()
            )));
        }
        let mut warnings = Vec::new();
        if variant.is_partial() {
            let g = graph.as_ref().ok_or_else(|| {
                Error::InvalidLaw(format!("{variant} needs a communication graph"))
            })?;
            check_len("graph vertices", n_agents, g.vertices())?;
            if !g.connected() {
                warnings.push("communication graph is disconnected".to_string());
            }
        }
        for (i, (law, exo)) in laws.iter().zip(&plant).enumerate() {
            if exo.output_dim() != actions.dim(i) {
                return Err(Error::InvalidExosystem(format!(
                    "agent {i}: disturbance has {} outputs, action has {}",
                    exo.output_dim(),
                    actions.dim(i)
                )));
            }
            if let Some(m) = law.internal_model() {
                if m.s != *exo.s() || m.d != *exo.d() {
                    return Err(Error::InvalidLaw(format!(
                        "agent {i}: internal model (S, D) differs from the disturbance generator"
                    )));
                }
            }
        }
        let exo_dims: Vec<usize> = plant.iter().map(Exosystem::state_dim).collect();
        let layout = StateLayout::new(&actions, &laws, &exo_dims)?;
        Ok(Self {
            game,
            graph,
            laws,
            plant,
            layout,
            warnings,
        })
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn graph(&self) -> Option<&Graph> {
        self.graph.as_ref()
    }

    pub fn laws(&self) -> &[AgentLaw] {
        &self.laws
    }

    pub fn plant(&self) -> &[Exosystem] {
        &self.plant
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn variant(&self) -> LawVariant {
        self.laws[0].variant()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Length of `[agent state | w]`.
    pub fn augmented_len(&self) -> usize {
        self.layout.agent_len() + self.layout.exo_len()
    }

    /// Agent-state derivative for the configured law.
    pub fn agent_rhs(&self, state: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        match self.variant() {
            LawVariant::GradientPlayFull => {
                let x = self.actions(state);
                let d = self.disturbances(w);
                let dx = rhs_gradient_play_full(&self.game, &x, &d)?;
                for (i, slots) in self.layout.agents.iter().enumerate() {
                    let r = self.game.layout().range(i);
                    out[slots.action.clone()].copy_from_slice(&dx[r]);
                }
                Ok(())
            }
            LawVariant::GradientPlayPartial => rhs_gradient_play_partial(self, state, w, out),
            LawVariant::SingleIntFullIm => rhs_single_int_full_im(self, state, w, out),
            LawVariant::SingleIntPartialIm => rhs_single_int_partial_im(self, state, w, out),
            LawVariant::DoubleIntFullIm => rhs_double_int_full_im(self, state, w, out),
            LawVariant::DoubleIntPartialIm => rhs_double_int_partial_im(self, state, w, out),
            LawVariant::MultiIntPartialIm => rhs_multi_int_partial_im(self, state, w, out),
        }
    }

    /// Derivative of the augmented state `[agent state | w]`.
    pub fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        check_len("augmented state", self.augmented_len(), y.len())?;
        check_len("augmented derivative", self.augmented_len(), dy.len())?;
        let split = self.layout.agent_len();
        let (state, w) = y.split_at(split);
        let (dstate, dw) = dy.split_at_mut(split);
        self.agent_rhs(state, w, dstate)?;
        for (i, exo) in self.plant.iter().enumerate() {
            let r = self.layout.exo(i);
            let q = r.len();
            for a in 0..q {
                let mut acc = 0.0;
                for b in 0..q {
                    acc += exo.s()[(a, b)] * w[r.start + b];
                }
                dw[r.start + a] = acc;
            }
        }
        Ok(())
    }

    /// `d_i = D_i w_i`, stacked like a profile.
    pub fn disturbances(&self, w: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.game.total_dim()];
        for (i, exo) in self.plant.iter().enumerate() {
            let r = self.game.layout().range(i);
            let wr = self.layout.exo(i);
            for (row, slot) in r.enumerate() {
                d[slot] = (0..wr.len())
                    .map(|b| exo.d()[(row, b)] * w[wr.start + b])
                    .sum();
            }
        }
        d
    }

    pub fn initial_exo_state(&self) -> Vec<f64> {
        self.plant
            .iter()
            .flat_map(|e| e.w0().iter().copied())
            .collect()
    }

    /// True actions `x`, stacked like a profile.
    pub fn actions(&self, state: &[f64]) -> Vec<f64> {
        self.layout
            .agents
            .iter()
            .flat_map(|s| state[s.action.clone()].iter().copied())
            .collect()
    }

    pub fn velocities(&self, state: &[f64]) -> Vec<f64> {
        self.layout
            .agents
            .iter()
            .flat_map(|s| state[s.velocity.clone()].iter().copied())
            .collect()
    }

    /// The signal agent `i` shares in its own estimate slot: `x_i` for single
    /// integrators, `x_i + b_i v_i` for double integrators and
    /// `x_i + [cᵀ⊗I, I] v_i` for chains.
    pub fn own_prediction(&self, i: usize, state: &[f64]) -> Vec<f64> {
        let slots = &self.layout.agents[i];
        let law = &self.laws[i];
        let ni = slots.action.len();
        let mut out = state[slots.action.clone()].to_vec();
        match law.variant() {
            LawVariant::DoubleIntFullIm | LawVariant::DoubleIntPartialIm => {
                let b = law.horizon().unwrap_or(1.0);
                for (o, v) in out.iter_mut().zip(&state[slots.velocity.clone()]) {
                    *o += b * v;
                }
            }
            LawVariant::MultiIntPartialIm => {
                let r = law.order();
                for k in 0..r - 1 {
                    let weight = if k + 1 == r - 1 {
                        1.0
                    } else {
                        law.coefficients()[k]
                    };
                    let chunk = slots.velocity_chunk(k, ni);
                    for (o, v) in out.iter_mut().zip(&state[chunk]) {
                        *o += weight * v;
                    }
                }
            }
            _ => {}
        }
        out
    }

    /// Full stacked estimate `col(x^1, ..., x^N)` (or `γ` for higher-order
    /// laws); `None` for full-information laws.
    pub fn stacked_estimate(&self, state: &[f64]) -> Option<Vec<f64>> {
        if !self.variant().is_partial() {
            return None;
        }
        let layout = self.game.layout();
        let n = layout.total();
        let mut out = vec![0.0; layout.stacked_len()];
        for i in 0..self.layout.agents() {
            let own = self.own_prediction(i, state);
            let others = &state[self.layout.agents[i].estimates.clone()];
            selection::embed_into(layout, i, &own, others, &mut out[i * n..(i + 1) * n]);
        }
        Some(out)
    }

    /// Observer errors `ρ_i = w_i - (K_i y_i + ξ_i)`, where `y_i` is the signal
    /// the internal model is driven by.
    pub fn observer_error(&self, state: &[f64], w: &[f64]) -> Result<Vec<Vec<f64>>> {
        if !self.variant().uses_internal_model() {
            return Err(Error::InvalidLaw(format!(
                "{} has no internal model",
                self.variant()
            )));
        }
        Ok((0..self.layout.agents())
            .map(|i| {
                let law = &self.laws[i];
                let m = law.internal_model().expect("validated internal model");
                let slots = &self.layout.agents[i];
                let y = observed_signal(law, slots, state);
                let xi = &state[slots.observer.clone()];
                let wi = &w[self.layout.exo(i)];
                (0..m.state_dim())
                    .map(|a| {
                        let ky: f64 = (0..y.len()).map(|c| m.k[(a, c)] * y[c]).sum();
                        wi[a] - (ky + xi[a])
                    })
                    .collect()
            })
            .collect())
    }

    /// Agent state with zero velocities and observers, actions `x0` and the
    /// requested estimate initialization.
    pub fn initial_state(&self, x0: &[f64], estimates: EstimateInit) -> Result<Vec<f64>> {
        let layout = self.game.layout();
        check_len("initial actions", layout.total(), x0.len())?;
        let mut state = vec![0.0; self.layout.agent_len()];
        for (i, slots) in self.layout.agents.iter().enumerate() {
            state[slots.action.clone()].copy_from_slice(&x0[layout.range(i)]);
        }
        if estimates == EstimateInit::Actions {
            // velocities start at zero, so predictions equal actions
            for i in 0..self.layout.agents() {
                let slots = self.layout.agents[i].clone();
                if !slots.estimates.is_empty() {
                    selection::others_into(layout, i, x0, &mut state[slots.estimates]);
                }
            }
        }
        Ok(state)
    }

    /// Closed-loop Jacobian of the augmented vector field at `y`, by central
    /// differences. Exact up to rounding for quadratic games, whose closed
    /// loops are affine.
    pub fn linearization(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.augmented_len();
        check_len("augmented state", m, y.len())?;
        let mut jac = DMatrix::zeros(m, m);
        let mut plus = y.to_vec();
        let mut minus = y.to_vec();
        let mut fp = vec![0.0; m];
        let mut fm = vec![0.0; m];
        let h = 1e-4;
        for c in 0..m {
            plus[c] += h;
            minus[c] -= h;
            self.rhs(&plus, &mut fp)?;
            self.rhs(&minus, &mut fm)?;
            for r in 0..m {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
            plus[c] = y[c];
            minus[c] = y[c];
        }
        Ok(jac)
    }
}

/// `x_i` (single), `v_i` (double) or `v_i^{r-1}` (chain).
pub(crate) fn observed_signal<'a>(
    law: &AgentLaw,
    slots: &AgentSlots,
    state: &'a [f64],
) -> &'a [f64] {
    match law.order() {
        1 => &state[slots.action.clone()],
        r => &state[slots.velocity_chunk(r - 2, slots.action.len())],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exosystem::Exosystem;

    #[test]
    fn default_coefficients() {
        assert!(default_hurwitz_coefficients(2).is_empty());
        assert_eq!(default_hurwitz_coefficients(3), vec![2.0]);
        assert_eq!(default_hurwitz_coefficients(4), vec![3.0, 3.0]);
        assert_eq!(default_hurwitz_coefficients(5), vec![4.0, 6.0, 4.0]);
    }

    #[test]
    fn hurwitz_check() {
        assert!(check_hurwitz(&[2.0]).is_ok());
        assert!(check_hurwitz(&[]).is_ok());
        assert!(check_hurwitz(&[0.0]).is_err()); // s^2 + 1
        assert!(check_hurwitz(&[-1.0]).is_err());
        assert!(check_hurwitz(&[1.0, 1.0]).is_err()); // s^3 + s^2 + s + 1 has ±i
    }

    fn model(n: usize) -> InternalModel {
        Exosystem::constant(&vec![0.0; n])
            .with_default_observer()
            .unwrap()
            .internal_model()
            .unwrap()
    }

    #[test]
    fn law_validation() {
        assert!(AgentLaw::double_int_partial_im(0.0, model(1)).is_err());
        assert!(AgentLaw::double_int_full_im(-1.0, model(1)).is_err());
        assert!(AgentLaw::multi_int_partial_im(1, None, model(1)).is_err());
        assert!(AgentLaw::multi_int_partial_im(3, Some(vec![]), model(1)).is_err());
        assert!(AgentLaw::multi_int_partial_im(3, Some(vec![-2.0]), model(1)).is_err());
        let law = AgentLaw::multi_int_partial_im(3, None, model(1)).unwrap();
        assert_eq!(law.coefficients(), &[2.0]);
        let mut bad = model(1);
        bad.k[(0, 0)] = 0.0;
        assert!(matches!(
            AgentLaw::single_int_partial_im(bad),
            Err(Error::InvalidLaw(_))
        ));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in LawVariant::ALL {
            assert_eq!(v.name().parse::<LawVariant>().unwrap(), v);
        }
        assert!("heavy_ball".parse::<LawVariant>().is_err());
    }

    #[test]
    fn layout_lengths() {
        let actions = ActionLayout::new(vec![2, 1, 3]).unwrap();
        let laws: Vec<AgentLaw> = [2, 1, 3]
            .iter()
            .map(|&n| AgentLaw::multi_int_partial_im(3, None, model(n)).unwrap())
            .collect();
        let layout = StateLayout::new(&actions, &laws, &[2, 1, 3]).unwrap();
        // Σ n_i r_i + (n - n_i) + q_i
        let expected: usize = [2usize, 1, 3].iter().map(|&n| n * 3 + (6 - n) + n).sum();
        assert_eq!(layout.agent_len(), expected);
        assert_eq!(layout.exo_len(), 6);
        assert_eq!(
            layout.agent(1).velocity_chunk(1, 1),
            layout.agent(1).velocity.start + 1..layout.agent(1).velocity.end
        );
    }
}
