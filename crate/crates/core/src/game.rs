//! Games over continuous action spaces and their (extended) pseudo-gradients.
//!
//! Profiles are player-major: `x = (x_1, ..., x_N)` with `x_i` occupying
//! `dims[i]` consecutive slots. A stacked estimate `(x^1, ..., x^N)` holds one
//! full-length profile per agent, agent `i`'s own action sitting in slot `i`
//! of block `i`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

/// Dimensions and slot offsets of a player-major action profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl ActionLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidGame(format!(
                "need at least 2 players, got {}",
                dims.len()
            )));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidGame(format!(
                "player {i} has zero action dimension"
            )));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in &dims {
            offsets.push(total);
            total += d;
        }
        Ok(Self {
            dims,
            offsets,
            total,
        })
    }

    pub fn uniform(players: usize, dim: usize) -> Result<Self> {
        Self::new(vec![dim; players])
    }

    pub fn players(&self) -> usize {
        self.dims.len()
    }

    /// Total action dimension `n`.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Slots of player `i` inside a profile.
    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.dims[i]
    }

    /// Length of a stacked estimate, `N * n`.
    pub fn stacked_len(&self) -> usize {
        self.players() * self.total
    }
}

/// Per-player partial gradients of a general (non-quadratic) game.
pub trait PlayerGradients: Send + Sync {
    /// Writes `∇_i J_i(profile)` into `out` (length `n_i`).
    fn partial_gradient(&self, player: usize, profile: &[f64], out: &mut [f64]) -> Result<()>;

    /// Cost `J_i(profile)` when a closed form is available.
    fn cost(&self, _player: usize, _profile: &[f64]) -> Option<Result<f64>> {
        None
    }
}

#[derive(Clone)]
pub enum CostModel {
    /// `F(x) = A x + r`, constant Jacobian `A`.
    Quadratic {
        jacobian: DMatrix<f64>,
        linear: DVector<f64>,
    },
    General(Arc<dyn PlayerGradients>),
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostModel::Quadratic { jacobian, linear } => f
                .debug_struct("Quadratic")
                .field("jacobian", jacobian)
                .field("linear", linear)
                .finish(),
            CostModel::General(_) => f.write_str("General(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Game {
    layout: ActionLayout,
    model: CostModel,
    mu: Option<f64>,
    theta: Option<f64>,
}

impl Game {
    pub fn quadratic(
        dims: Vec<usize>,
        jacobian: DMatrix<f64>,
        linear: DVector<f64>,
    ) -> Result<Self> {
        let layout = ActionLayout::new(dims)?;
        let n = layout.total();
        if jacobian.nrows() != n || jacobian.ncols() != n {
            return Err(Error::InvalidGame(format!(
                "jacobian is {}x{}, expected {n}x{n}",
                jacobian.nrows(),
                jacobian.ncols()
            )));
        }
        check_len("linear term", n, linear.len())?;
        Ok(Self {
            layout,
            model: CostModel::Quadratic { jacobian, linear },
            mu: None,
            theta: None,
        })
    }

    pub fn general(dims: Vec<usize>, gradients: Arc<dyn PlayerGradients>) -> Result<Self> {
        Ok(Self {
            layout: ActionLayout::new(dims)?,
            model: CostModel::General(gradients),
            mu: None,
            theta: None,
        })
    }

    /// Declares the strong-monotonicity constant; must be positive.
    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidGame(format!("mu must be positive, got {mu}")));
        }
        self.mu = Some(mu);
        Ok(self)
    }

    /// Declares the Lipschitz constant of the extended pseudo-gradient.
    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::InvalidGame(format!(
                "theta must be positive, got {theta}"
            )));
        }
        self.theta = Some(theta);
        Ok(self)
    }

    pub fn layout(&self) -> &ActionLayout {
        &self.layout
    }

    pub fn players(&self) -> usize {
        self.layout.players()
    }

    pub fn total_dim(&self) -> usize {
        self.layout.total()
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }

    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.model, CostModel::Quadratic { .. })
    }

    pub fn partial_gradient_into(&self, i: usize, profile: &[f64], out: &mut [f64]) -> Result<()> {
        if i >= self.players() {
            return Err(Error::InvalidGame(format!(
                "player index {i} out of range for {} players",
                self.players()
            )));
        }
        check_len("profile", self.total_dim(), profile.len())?;
        check_len("partial gradient", self.layout.dim(i), out.len())?;
        match &self.model {
            CostModel::Quadratic { jacobian, linear } => {
                let rows = self.layout.range(i);
                for (k, row) in rows.enumerate() {
                    let mut acc = linear[row];
                    for (col, &x) in profile.iter().enumerate() {
                        acc += jacobian[(row, col)] * x;
                    }
                    out[k] = acc;
                }
                Ok(())
            }
            CostModel::General(g) => {
                g.partial_gradient(i, profile, out)?;
                if let Some(bad) = out.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Domain(format!(
                        "partial gradient of player {i} is {bad}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// `∇_i J_i` at `profile`.
    pub fn partial_gradient(&self, i: usize, profile: &[f64]) -> Result<Vec<f64>> {
        let len = self.layout.dims().get(i).copied().unwrap_or(0);
        let mut out = vec![0.0; len];
        self.partial_gradient_into(i, profile, &mut out)?;
        Ok(out)
    }

    /// Stacked partial gradients `F(x)`.
    pub fn pseudo_gradient(&self, profile: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.total_dim()];
        for i in 0..self.players() {
            let r = self.layout.range(i);
            self.partial_gradient_into(i, profile, &mut out[r])?;
        }
        Ok(out)
    }

    /// Extended pseudo-gradient: block `i` is `∇_i J_i` evaluated on agent
    /// `i`'s estimate block of `est`.
    pub fn extended_pseudo_gradient(&self, est: &[f64]) -> Result<Vec<f64>> {
        let n = self.total_dim();
        check_len("stacked estimate", self.layout.stacked_len(), est.len())?;
        let mut out = vec![0.0; n];
        for i in 0..self.players() {
            let r = self.layout.range(i);
            self.partial_gradient_into(i, &est[i * n..(i + 1) * n], &mut out[r])?;
        }
        Ok(out)
    }

    /// `J_i(profile)` where a closed form exists. Quadratic games report the
    /// cost up to terms independent of `x_i`, and only when the diagonal
    /// Jacobian block of player `i` is symmetric.
    pub fn cost(&self, i: usize, profile: &[f64]) -> Option<Result<f64>> {
        match &self.model {
            CostModel::Quadratic { jacobian, linear } => {
                let r = self.layout.range(i);
                let n = self.total_dim();
                let block = jacobian.view((r.start, r.start), (r.len(), r.len()));
                if (block - block.transpose()).amax() > 1e-12 {
                    return None;
                }
                let mut value = 0.0;
                for row in r.clone() {
                    let xi = profile[row];
                    let mut coupling = linear[row];
                    for col in 0..n {
                        if r.contains(&col) {
                            value += 0.5 * xi * jacobian[(row, col)] * profile[col];
                        } else {
                            coupling += jacobian[(row, col)] * profile[col];
                        }
                    }
                    value += xi * coupling;
                }
                Some(Ok(value))
            }
            CostModel::General(g) => g.cost(i, profile),
        }
    }
}

/// Agent-major stacked estimate `col(x^1, ..., x^N)`, each block a full profile.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedEstimate {
    data: Vec<f64>,
    n: usize,
}

impl StackedEstimate {
    pub fn from_vec(layout: &ActionLayout, data: Vec<f64>) -> Result<Self> {
        check_len("stacked estimate", layout.stacked_len(), data.len())?;
        Ok(Self {
            data,
            n: layout.total(),
        })
    }

    /// `1_N ⊗ x`.
    pub fn consensus(layout: &ActionLayout, x: &[f64]) -> Result<Self> {
        check_len("profile", layout.total(), x.len())?;
        let data = (0..layout.players())
            .flat_map(|_| x.iter().copied())
            .collect();
        Ok(Self {
            data,
            n: layout.total(),
        })
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_consensus(&self, tol: f64) -> bool {
        let first = self.block(0);
        (1..self.data.len() / self.n).all(|i| {
            self.block(i)
                .iter()
                .zip(first)
                .all(|(a, b)| (a - b).abs() <= tol)
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Euler step of the gradient flow; defaults to `1/θ` or `1e-2`.
    pub step: Option<f64>,
    pub start: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1_000_000,
            step: None,
            start: None,
        }
    }
}

/// Nash equilibrium `x*` with `F(x*) = 0`.
///
/// Quadratic games are solved exactly; general games follow the forward-Euler
/// discretization of `ẋ = -F(x)` until `‖F‖ < tol`. Strong monotonicity makes
/// `‖F‖` decrease along the flow, so steps that fail to decrease it or leave
/// the cost domain are retried at half length, and accepted steps grow.
pub fn solve_ne(game: &Game, opts: &SolveOptions) -> Result<Vec<f64>> {
    match game.model() {
        CostModel::Quadratic { jacobian, linear } => {
            let mu = symmetric_part_min_eig(jacobian);
            if !(mu > 0.0) {
                return Err(Error::InvalidGame(format!(
                    "symmetric part of the jacobian is not positive definite (min eigenvalue {mu:e})"
                )));
            }
            let x = jacobian
                .clone()
                .lu()
                .solve(&(-linear))
                .ok_or_else(|| Error::InvalidGame("singular jacobian".into()))?;
            Ok(x.iter().copied().collect())
        }
        CostModel::General(_) => {
            if game.mu().is_none() {
                return Err(Error::InvalidGame(
                    "gradient-flow NE oracle needs a declared mu".into(),
                ));
            }
            let step = opts
                .step
                .or_else(|| game.theta().map(|t| 1.0 / t))
                .unwrap_or(1e-2);
            let mut x = opts
                .start
                .clone()
                .unwrap_or_else(|| vec![0.0; game.total_dim()]);
            check_len("start profile", game.total_dim(), x.len())?;
            let mut f = game.pseudo_gradient(&x)?;
            let mut residual = norm(&f);
            let mut h = step;
            for iteration in 0..opts.max_iter {
                if residual < opts.tol {
                    return Ok(x);
                }
                loop {
                    let trial: Vec<f64> = x.iter().zip(&f).map(|(xi, fi)| xi - h * fi).collect();
                    match game.pseudo_gradient(&trial) {
                        Ok(ft) if norm(&ft) < residual => {
                            x = trial;
                            f = ft;
                            h *= 1.5;
                            break;
                        }
                        Ok(_) | Err(Error::Domain(_)) if h > step * 1e-12 => h *= 0.5,
                        Ok(_) => {
                            return Err(Error::NoConvergence {
                                iterations: iteration,
                                residual,
                            })
                        }
                        Err(e) => return Err(e),
                    }
                }
                residual = norm(&f);
            }
            if residual < opts.tol {
                Ok(x)
            } else {
                Err(Error::NoConvergence {
                    iterations: opts.max_iter,
                    residual,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantsKind {
    /// Spectral values of a constant Jacobian.
    Exact,
    /// Sampled estimates: `mu` is an upper bound on the true μ and `theta` a
    /// lower bound on the true θ.
    Sampled { pairs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub mu: f64,
    pub theta: f64,
    pub kind: ConstantsKind,
}

impl Constants {
    pub fn caveat(&self) -> &'static str {
        match self.kind {
            ConstantsKind::Exact => "exact",
            ConstantsKind::Sampled { .. } => {
                "sampled: mu is an upper bound, theta a lower bound on the true constants"
            }
        }
    }
}

/// Axis-aligned box `center ± half_width` in profile space.
#[derive(Debug, Clone)]
pub struct SamplingRegion {
    pub center: Vec<f64>,
    pub half_width: f64,
}

#[derive(Debug, Clone)]
pub struct Sampling {
    pub budget: usize,
    pub seed: u64,
    pub region: SamplingRegion,
}

/// μ and θ for a game: exact for quadratic games, sampled otherwise.
pub fn certify_constants(game: &Game, sampling: &Sampling) -> Result<Constants> {
    match game.model() {
        CostModel::Quadratic { jacobian, .. } => Ok(exact_constants(game.layout(), jacobian)),
        CostModel::General(_) => sample_constants(game, sampling),
    }
}

/// μ = smallest eigenvalue of the symmetric part of `A`; θ = largest singular
/// value of the extended Jacobian, which is block-row diagonal, so θ is the
/// largest spectral norm among the player row blocks of `A`.
pub fn exact_constants(layout: &ActionLayout, jacobian: &DMatrix<f64>) -> Constants {
    let mu = symmetric_part_min_eig(jacobian);
    let n = layout.total();
    let theta = (0..layout.players())
        .map(|i| {
            let r = layout.range(i);
            let rows = jacobian.view((r.start, 0), (r.len(), n)).clone_owned();
            rows.singular_values().max()
        })
        .fold(0.0, f64::max);
    Constants {
        mu,
        theta,
        kind: ConstantsKind::Exact,
    }
}

/// Sampled estimator over random pairs in the sampling box. Pairs that hit a
/// domain error are skipped.
pub fn sample_constants(game: &Game, sampling: &Sampling) -> Result<Constants> {
    if sampling.budget == 0 {
        return Err(Error::InvalidGame("sample budget must be positive".into()));
    }
    let layout = game.layout();
    let n = layout.total();
    check_len("sampling center", n, sampling.region.center.len())?;
    let hw = sampling.region.half_width;
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let draw = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> {
        (0..len)
            .map(|k| sampling.region.center[k % n] + rng.gen_range(-hw..=hw))
            .collect()
    };

    let mut mu_hat = f64::INFINITY;
    let mut theta_hat: f64 = 0.0;
    let mut used = 0;
    for _ in 0..sampling.budget {
        let x = draw(&mut rng, n);
        let y = draw(&mut rng, n);
        let ex = draw(&mut rng, n * layout.players());
        let ey = draw(&mut rng, n * layout.players());
        let (fx, fy) = match (game.pseudo_gradient(&x), game.pseudo_gradient(&y)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(Error::Domain(_)), _) | (_, Err(Error::Domain(_))) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let (gx, gy) = match (
            game.extended_pseudo_gradient(&ex),
            game.extended_pseudo_gradient(&ey),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(Error::Domain(_)), _) | (_, Err(Error::Domain(_))) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        let dx2 = dot(&dx, &dx);
        if dx2 > 0.0 {
            mu_hat = mu_hat.min(dot(&dx, &df) / dx2);
        }
        let de = norm(&ex.iter().zip(&ey).map(|(a, b)| a - b).collect::<Vec<_>>());
        let dg = norm(&gx.iter().zip(&gy).map(|(a, b)| a - b).collect::<Vec<_>>());
        if de > 0.0 {
            theta_hat = theta_hat.max(dg / de);
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::Domain(
            "every sampled pair left the cost domain; shrink the sampling box".into(),
        ));
    }
    Ok(Constants {
        mu: mu_hat,
        theta: theta_hat,
        kind: ConstantsKind::Sampled { pairs: used },
    })
}

pub(crate) fn symmetric_part_min_eig(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // fold from +0.0: an empty f64 `sum` is -0.0
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_player_game() -> Game {
        // F(x) = (2(x1 - x2) + x1, 2(x2 - x1) + x2)
        let a = DMatrix::from_row_slice(2, 2, &[3.0, -2.0, -2.0, 3.0]);
        Game::quadratic(vec![1, 1], a, DVector::zeros(2)).unwrap()
    }

    #[test]
    fn layout_rejects_degenerate_games() {
        assert!(ActionLayout::new(vec![1]).is_err());
        assert!(ActionLayout::new(vec![1, 0]).is_err());
        let l = ActionLayout::new(vec![2, 1, 3]).unwrap();
        assert_eq!(l.total(), 6);
        assert_eq!(l.range(2), 3..6);
        assert_eq!(l.stacked_len(), 18);
    }

    #[test]
    fn difference_game_gradient() {
        // J_i = (x_i - x_{-i})^2
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]);
        let g = Game::quadratic(vec![1, 1], a, DVector::zeros(2)).unwrap();
        assert_eq!(g.pseudo_gradient(&[1.0, 0.0]).unwrap(), vec![2.0, -2.0]);
    }

    #[test]
    fn two_player_ne_is_origin() {
        let x = solve_ne(&two_player_game(), &SolveOptions::default()).unwrap();
        assert!(norm(&x) < 1e-14);
    }

    #[test]
    fn identity_game_ne_is_minus_r() {
        let r = DVector::from_element(4, 1.0);
        let g = Game::quadratic(vec![2, 2], DMatrix::identity(4, 4), r).unwrap();
        let x = solve_ne(&g, &SolveOptions::default()).unwrap();
        for v in x {
            assert_relative_eq!(v, -1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn scaled_identity_constants() {
        let g =
            Game::quadratic(vec![1, 2], DMatrix::identity(3, 3) * 3.0, DVector::zeros(3)).unwrap();
        let c = exact_constants(g.layout(), &(DMatrix::identity(3, 3) * 3.0));
        assert_relative_eq!(c.mu, 3.0, epsilon = 1e-12);
        assert_relative_eq!(c.theta, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn extended_gradient_reads_own_block_only() {
        let g = two_player_game();
        let est = StackedEstimate::consensus(g.layout(), &[1.0, -1.0]).unwrap();
        assert_eq!(
            g.extended_pseudo_gradient(est.as_slice()).unwrap(),
            g.pseudo_gradient(&[1.0, -1.0]).unwrap()
        );
        let mut est = est;
        est.block_mut(1)[0] = 7.0; // agent 2's copy of x_1
        let ext = g.extended_pseudo_gradient(est.as_slice()).unwrap();
        assert_eq!(ext[0], 5.0);
        assert_eq!(ext[1], -3.0 - 2.0 * 7.0);
    }

    #[test]
    fn wrong_lengths_are_rejected() {
        let g = two_player_game();
        assert!(matches!(
            g.pseudo_gradient(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(g.extended_pseudo_gradient(&[0.0; 3]).is_err());
        assert!(g.partial_gradient(5, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn indefinite_quadratic_game_has_no_oracle() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let g = Game::quadratic(vec![1, 1], a, DVector::zeros(2)).unwrap();
        assert!(solve_ne(&g, &SolveOptions::default()).is_err());
    }

    #[test]
    fn mu_must_be_positive() {
        assert!(two_player_game().with_mu(0.0).is_err());
        assert!(two_player_game().with_mu(1.0).is_ok());
    }

    struct Stuck;
    impl PlayerGradients for Stuck {
        fn partial_gradient(&self, _: usize, _: &[f64], out: &mut [f64]) -> Result<()> {
            out.fill(1.0);
            Ok(())
        }
    }

    #[test]
    fn gradient_flow_reports_last_residual() {
        let g = Game::general(vec![1, 1], Arc::new(Stuck))
            .unwrap()
            .with_mu(1.0)
            .unwrap();
        let opts = SolveOptions {
            max_iter: 10,
            ..Default::default()
        };
        match solve_ne(&g, &opts) {
            Err(Error::NoConvergence {
                iterations,
                residual,
            }) => {
                // a constant field never decreases the residual
                assert_eq!(iterations, 0);
                assert_relative_eq!(residual, 2f64.sqrt());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_budget_is_an_error() {
        let s = Sampling {
            budget: 0,
            seed: 0,
            region: SamplingRegion {
                center: vec![0.0; 2],
                half_width: 1.0,
            },
        };
        assert!(sample_constants(&two_player_game(), &s).is_err());
    }
}
