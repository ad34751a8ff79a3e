//! Vector fields of the seven learning laws.
//!
//! Each law is written out on its own so that the reduction identities
//! between them are checked against independent code.

use nalgebra::DMatrix;

use super::selection::others_into;
use super::NetworkSystem;
use crate::error::{check_len, Result};
use crate::exosystem::InternalModel;
use crate::game::Game;

/// `ẋ = -F(x) + d`
pub fn rhs_gradient_play_full(game: &Game, x: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    check_len("disturbance", game.total_dim(), d.len())?;
    let mut dx = game.pseudo_gradient(x)?;
    for (v, di) in dx.iter_mut().zip(d) {
        *v = -*v + di;
    }
    Ok(dx)
}

/// `Σ_{j ∈ N_i} (est_i - est_j)` over full-profile estimate blocks.
fn disagreement(sys: &NetworkSystem, est: &[f64], i: usize) -> Vec<f64> {
    let n = sys.game().total_dim();
    let graph = sys
        .graph()
        .expect("partial-information law without a graph");
    let own = &est[i * n..(i + 1) * n];
    let mut acc = vec![0.0; n];
    for &j in graph.neighbors(i) {
        let other = &est[j * n..(j + 1) * n];
        for k in 0..n {
            acc[k] += own[k] - other[k];
        }
    }
    acc
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * v[c]).sum())
        .collect()
}

/// `η = K y + ξ`, the observer's estimate of `w`.
fn observer_estimate(m: &InternalModel, y: &[f64], xi: &[f64]) -> Vec<f64> {
    let mut eta = mat_vec(&m.k, y);
    for (e, x) in eta.iter_mut().zip(xi) {
        *e += x;
    }
    eta
}

fn model_of(sys: &NetworkSystem, i: usize) -> &InternalModel {
    sys.laws()[i]
        .internal_model()
        .expect("internal-model law without a model")
}

/// `ẋ_i = -∇_iJ_i(x_i, x^i_{-i}) - R_i Σ(x^i - x^j) + d_i`,
/// `ẋ^i_{-i} = -S_i Σ(x^i - x^j)`.
pub fn rhs_gradient_play_partial(
    sys: &NetworkSystem,
    state: &[f64],
    w: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let layout = sys.game().layout();
    let d = sys.disturbances(w);
    let est = sys.stacked_estimate(state).expect("partial law");
    let n = layout.total();
    for i in 0..layout.players() {
        let slots = sys.layout().agent(i);
        let r = layout.range(i);
        let block = &est[i * n..(i + 1) * n];
        let grad = sys.game().partial_gradient(i, block)?;
        let dis = disagreement(sys, &est, i);
        for (k, slot) in slots.action.clone().enumerate() {
            out[slot] = -grad[k] - dis[r.start + k] + d[r.start + k];
        }
        let mut de = vec![0.0; n - r.len()];
        others_into(layout, i, &dis, &mut de);
        for (slot, v) in slots.estimates.clone().zip(de) {
            out[slot] = -v;
        }
    }
    Ok(())
}

/// `ẋ_i = -∇_iJ_i(x) - D_i(K_i x_i + ξ_i) + d_i`,
/// `ξ̇_i = S_i(K_i x_i + ξ_i) + K_i ∇_iJ_i(x)`.
pub fn rhs_single_int_full_im(
    sys: &NetworkSystem,
    state: &[f64],
    w: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let layout = sys.game().layout();
    let d = sys.disturbances(w);
    let x = sys.actions(state);
    for i in 0..layout.players() {
        let slots = sys.layout().agent(i);
        let m = model_of(sys, i);
        let r = layout.range(i);
        let grad = sys.game().partial_gradient(i, &x)?;
        let eta = observer_estimate(m, &x[r.clone()], &state[slots.observer.clone()]);
        let rejection = mat_vec(&m.d, &eta);
        for (k, slot) in slots.action.clone().enumerate() {
            out[slot] = -grad[k] - rejection[k] + d[r.start + k];
        }
        let s_eta = mat_vec(&m.s, &eta);
        let k_grad = mat_vec(&m.k, &grad);
        for (a, slot) in slots.observer.clone().enumerate() {
            out[slot] = s_eta[a] + k_grad[a];
        }
    }
    Ok(())
}

/// `ẋ_i = -∇_iJ_i(x_i, x^i_{-i}) - R_iΣ(x^i - x^j) - D_i(K_i x_i + ξ_i) + d_i`,
/// `ẋ^i_{-i} = -S_iΣ(x^i - x^j)`,
/// `ξ̇_i = S_i(K_i x_i + ξ_i) + K_i(∇_iJ_i + R_iΣ(x^i - x^j))`.
pub fn rhs_single_int_partial_im(
    sys: &NetworkSystem,
    state: &[f64],
    w: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let layout = sys.game().layout();
    let d = sys.disturbances(w);
    let est = sys.stacked_estimate(state).expect("partial law");
    let n = layout.total();
    for i in 0..layout.players() {
        let slots = sys.layout().agent(i);
        let m = model_of(sys, i);
        let r = layout.range(i);
        let grad = sys.game().partial_gradient(i, &est[i * n..(i + 1) * n])?;
        let dis = disagreement(sys, &est, i);
        let own_dis = &dis[r.clone()];
        let eta = observer_estimate(
            m,
            &state[slots.action.clone()],
            &state[slots.observer.clone()],
        );
        let rejection = mat_vec(&m.d, &eta);
        for (k, slot) in slots.action.clone().enumerate() {
            out[slot] = -grad[k] - own_dis[k] - rejection[k] + d[r.start + k];
        }
        let mut de = vec![0.0; n - r.len()];
        others_into(layout, i, &dis, &mut de);
        for (slot, v) in slots.estimates.clone().zip(de) {
            out[slot] = -v;
        }
        let drive: Vec<f64> = grad.iter().zip(own_dis).map(|(g, c)| g + c).collect();
        let s_eta = mat_vec(&m.s, &eta);
        let k_drive = mat_vec(&m.k, &drive);
        for (a, slot) in slots.observer.clone().enumerate() {
            out[slot] = s_eta[a] + k_drive[a];
        }
    }
    Ok(())
}

/// `ẋ_i = v_i`,
/// `v̇_i = -∇_iJ_i(x + Bv) - v_i/b_i - D_i(K_i v_i + ξ_i) + d_i`,
/// `ξ̇_i = S_i(K_i v_i + ξ_i) + K_i(∇_iJ_i + v_i/b_i)`.
pub fn rhs_double_int_full_im(
    sys: &NetworkSystem,
    state: &[f64],
    w: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let layout = sys.game().layout();
    let d = sys.disturbances(w);
    let mut predicted = vec![0.0; layout.total()];
    for i in 0..layout.players() {
        let slots = sys.layout().agent(i);
        let b = sys.laws()[i].horizon().expect("double-integrator horizon");
        for (k, p) in layout.range(i).enumerate() {
            predicted[p] = state[slots.action.start + k] + b * state[slots.velocity.start + k];
        }
    }
    for i in 0..layout.players() {
        let slots = sys.layout().agent(i);
        let m = model_of(sys, i);
        let b = sys.laws()[i].horizon().expect("double-integrator horizon");
        let r = layout.range(i);
        let v = &state[slots.velocity.clone()];
        let grad = sys.game().partial_gradient(i, &predicted)?;
        let eta = observer_estimate(m, v, &state[slots.observer.clone()]);
        let rejection = mat_vec(&m.d, &eta);
        for (k, slot) in slots.action.clone().enumerate() {
            out[slot] = v[k];
        }
        for (k, slot) in slots.velocity.clone().enumerate() {
            out[slot] = -grad[k] - v[k] / b - rejection[k] + d[r.start + k];
        }
        let drive: Vec<f64> = grad.iter().zip(v).map(|(g, vk)| g + vk / b).collect();
        let s_eta = mat_vec(&m.s, &eta);
        let k_drive = mat_vec(&m.k, &drive);
        for (a, slot) in slots.observer.clone().enumerate() {
            out[slot] = s_eta[a] + k_drive[a];
        }
    }
    Ok(())
}

/// `ẋ_i = v_i`,
/// `v̇_i = -∇_iJ_i(x_i + b_i v_i, γ^i_{-i}) - v_i/b_i - R_iΣ(γ^i - γ^j) - D_i(K_i v_i + ξ_i) + d_i`,
/// `γ̇^i_{-i} = -S_iΣ(γ^i - γ^j)`,
/// `ξ̇_i = S_i(K_i v_i + ξ_i) + K_i(∇_iJ_i + v_i/b_i + R_iΣ(γ^i - γ^j))`.
pub fn rhs_double_int_partial_im(
    sys: &NetworkSystem,
    state: &[f64],
    w: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let layout = sys.game().layout();
    let d = sys.disturbances(w);
    let n = layout.total();
    let mut gamma = vec![0.0; layout.stacked_len()];
    for i in 0..layout.players() {
        let slots = sys.layout().agent(i);
        let b = sys.laws()[i].horizon().expect("double-integrator horizon");
        let r = layout.range(i);
        let block = &mut gamma[i * n..(i + 1) * n];
        let others = &state[slots.estimates.clone()];
        block[..r.start].copy_from_slice(&others[..r.start]);
        block[r.end..].copy_from_slice(&others[r.start..]);
        for (k, p) in r.enumerate() {
            block[p] = state[slots.action.start + k] + b * state[slots.velocity.start + k];
        }
    }
    for i in 0..layout.players() {
        let slots = sys.layout().agent(i);
        let m = model_of(sys, i);
        let b = sys.laws()[i].horizon().expect("double-integrator horizon");
        let r = layout.range(i);
        let v = &state[slots.velocity.clone()];
        let grad = sys.game().partial_gradient(i, &gamma[i * n..(i + 1) * n])?;
        let dis = disagreement(sys, &gamma, i);
        let own_dis = &dis[r.clone()];
        let eta = observer_estimate(m, v, &state[slots.observer.clone()]);
        let rejection = mat_vec(&m.d, &eta);
        for (k, slot) in slots.action.clone().enumerate() {
            out[slot] = v[k];
        }
        for (k, slot) in slots.velocity.clone().enumerate() {
            out[slot] = -grad[k] - v[k] / b - own_dis[k] - rejection[k] + d[r.start + k];
        }
        let mut de = vec![0.0; n - r.len()];
        others_into(layout, i, &dis, &mut de);
        for (slot, val) in slots.estimates.clone().zip(de) {
            out[slot] = -val;
        }
        let drive: Vec<f64> = (0..r.len())
            .map(|k| grad[k] + v[k] / b + own_dis[k])
            .collect();
        let s_eta = mat_vec(&m.s, &eta);
        let k_drive = mat_vec(&m.k, &drive);
        for (a, slot) in slots.observer.clone().enumerate() {
            out[slot] = s_eta[a] + k_drive[a];
        }
    }
    Ok(())
}

/// Chain `ẋ_i = v¹_i`, `v̇ᵏ_i = vᵏ⁺¹_i`, `v̇^{r-1}_i = u_i + d_i` with
/// `γ_i = x_i + Σ c_k vᵏ_i + v^{r-1}_i` and
/// `u_i = -∇_iJ_i(γ_i, γ^i_{-i}) - (v¹_i + Σ c_k vᵏ⁺¹_i) - R_iΣ(γ^i - γ^j) - D_i(K_i v^{r-1}_i + ξ_i)`,
/// `ξ̇_i = S_i(K_i v^{r-1}_i + ξ_i) + K_i(∇_iJ_i + R_iΣ(γ^i - γ^j) + v¹_i + Σ c_k vᵏ⁺¹_i)`.
pub fn rhs_multi_int_partial_im(
    sys: &NetworkSystem,
    state: &[f64],
    w: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let layout = sys.game().layout();
    let d = sys.disturbances(w);
    let n = layout.total();
    let gamma = sys.stacked_estimate(state).expect("partial law");
    for i in 0..layout.players() {
        let slots = sys.layout().agent(i);
        let law = &sys.laws()[i];
        let m = model_of(sys, i);
        let r = layout.range(i);
        let ni = r.len();
        let order = law.order();
        let c = law.coefficients();
        let chunk = |k: usize| &state[slots.velocity_chunk(k, ni)];

        let grad = sys.game().partial_gradient(i, &gamma[i * n..(i + 1) * n])?;
        let dis = disagreement(sys, &gamma, i);
        let own_dis = &dis[r.clone()];
        // v¹ + Σ_k c_k v^{k+1}
        let mut damping = chunk(0).to_vec();
        for (k, &ck) in c.iter().enumerate() {
            for (dmp, v) in damping.iter_mut().zip(chunk(k + 1)) {
                *dmp += ck * v;
            }
        }
        let top = chunk(order - 2);
        let eta = observer_estimate(m, top, &state[slots.observer.clone()]);
        let rejection = mat_vec(&m.d, &eta);

        for (k, slot) in slots.action.clone().enumerate() {
            out[slot] = chunk(0)[k];
        }
        for level in 0..order - 2 {
            let next = chunk(level + 1);
            for (k, slot) in slots.velocity_chunk(level, ni).enumerate() {
                out[slot] = next[k];
            }
        }
        for (k, slot) in slots.velocity_chunk(order - 2, ni).enumerate() {
            out[slot] = -grad[k] - damping[k] - own_dis[k] - rejection[k] + d[r.start + k];
        }
        let mut de = vec![0.0; n - ni];
        others_into(layout, i, &dis, &mut de);
        for (slot, val) in slots.estimates.clone().zip(de) {
            out[slot] = -val;
        }
        let drive: Vec<f64> = (0..ni).map(|k| grad[k] + own_dis[k] + damping[k]).collect();
        let s_eta = mat_vec(&m.s, &eta);
        let k_drive = mat_vec(&m.k, &drive);
        for (a, slot) in slots.observer.clone().enumerate() {
            out[slot] = s_eta[a] + k_drive[a];
        }
    }
    Ok(())
}
