//! Disturbance generators `ẇ = S w, d = D w` and reduced-order observer gains.
//!
//! The generator owns its initial condition `w0`; agents only ever see the
//! [`InternalModel`] `(S, D, K)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, C64};

const REAL_PART_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-8;
const EIG_CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Exosystem {
    s: DMatrix<f64>,
    d: DMatrix<f64>,
    w0: DVector<f64>,
    gain: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Certificate {
    pub marginally_stable: bool,
    pub observable: bool,
}

impl Certificate {
    pub fn is_valid(&self) -> bool {
        self.marginally_stable && self.observable
    }
}

/// What an agent knows about its disturbance: `S`, `D` and its observer gain.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalModel {
    pub s: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl InternalModel {
    pub fn state_dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.d.nrows()
    }

    /// `S - K D`
    pub fn error_matrix(&self) -> DMatrix<f64> {
        &self.s - &self.k * &self.d
    }
}

impl Exosystem {
    pub fn new(s: DMatrix<f64>, d: DMatrix<f64>, w0: DVector<f64>) -> Result<Self> {
        let q = s.nrows();
        if s.ncols() != q {
            return Err(Error::InvalidExosystem(format!(
                "S is {}x{}, expected square",
                q,
                s.ncols()
            )));
        }
        if d.ncols() != q {
            return Err(Error::InvalidExosystem(format!(
                "D has {} columns, S has {q} states",
                d.ncols()
            )));
        }
        if w0.len() != q {
            return Err(Error::InvalidExosystem(format!(
                "w0 has length {}, expected {q}",
                w0.len()
            )));
        }
        Ok(Self {
            s,
            d,
            w0,
            gain: None,
        })
    }

    /// `S = 0`, `D = I`, `w0 = value`.
    pub fn constant(value: &[f64]) -> Self {
        let n = value.len();
        Self {
            s: DMatrix::zeros(n, n),
            d: DMatrix::identity(n, n),
            w0: DVector::from_column_slice(value),
            gain: None,
        }
    }

    /// Disturbance-free channel: no exosystem state, `n_out` zero outputs.
    pub fn absent(n_out: usize) -> Self {
        Self {
            s: DMatrix::zeros(0, 0),
            d: DMatrix::zeros(n_out, 0),
            w0: DVector::zeros(0),
            gain: None,
        }
    }

    /// Scalar output `bias + amplitude * sin(2π f t)` from a 3-state generator.
    pub fn biased_sinusoid(bias: f64, amplitude: f64, frequency_hz: f64) -> Result<Self> {
        if !(frequency_hz > 0.0) {
            return Err(Error::InvalidExosystem(format!(
                "frequency must be positive, got {frequency_hz}"
            )));
        }
        let omega = 2.0 * PI * frequency_hz;
        let s = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, omega, 0.0, -omega, 0.0]);
        let d = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        Self::new(s, d, DVector::from_column_slice(&[bias, 0.0, amplitude]))
    }

    /// Lifts a scalar-output generator to `outputs` channels, driving only
    /// `channel`.
    pub fn on_channel(self, outputs: usize, channel: usize) -> Result<Self> {
        if self.d.nrows() != 1 {
            return Err(Error::InvalidExosystem(format!(
                "on_channel needs a scalar output, got {}",
                self.d.nrows()
            )));
        }
        if channel >= outputs {
            return Err(Error::InvalidExosystem(format!(
                "channel {channel} out of range for {outputs} outputs"
            )));
        }
        let q = self.state_dim();
        let mut d = DMatrix::zeros(outputs, q);
        d.row_mut(channel).copy_from(&self.d.row(0));
        Ok(Self {
            d,
            gain: None,
            ..self
        })
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn w0(&self) -> &DVector<f64> {
        &self.w0
    }

    pub fn gain(&self) -> Option<&DMatrix<f64>> {
        self.gain.as_ref()
    }

    pub fn state_dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn validate(&self) -> Certificate {
        Certificate {
            marginally_stable: is_marginally_stable(&self.s),
            observable: observability_rank(&self.s, &self.d) == self.state_dim(),
        }
    }

    /// Sets `K` after checking `σ(S - KD) ⊂ ℂ⁻`.
    pub fn with_gain(mut self, k: DMatrix<f64>) -> Result<Self> {
        if k.nrows() != self.state_dim() || k.ncols() != self.output_dim() {
            return Err(Error::InvalidExosystem(format!(
                "K is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                self.state_dim(),
                self.output_dim()
            )));
        }
        let abscissa = linalg::spectral_abscissa(&(&self.s - &k * &self.d));
        if abscissa >= 0.0 {
            return Err(Error::InvalidExosystem(format!(
                "S - KD is not Hurwitz (max real part {abscissa:e})"
            )));
        }
        self.gain = Some(k);
        Ok(self)
    }

    pub fn with_observer_poles(self, poles: &[C64]) -> Result<Self> {
        let k = design_observer_gain(&self.s, &self.d, poles)?;
        self.with_gain(k)
    }

    /// Places the default poles `{-1, ..., -q_b}` on every observer block.
    pub fn with_default_observer(self) -> Result<Self> {
        let poles = default_observer_poles(&self.s, &self.d);
        self.with_observer_poles(&poles)
    }

    pub fn internal_model(&self) -> Result<InternalModel> {
        let k = self
            .gain
            .clone()
            .ok_or_else(|| Error::InvalidExosystem("observer gain K is not set".into()))?;
        Ok(InternalModel {
            s: self.s.clone(),
            d: self.d.clone(),
            k,
        })
    }

    /// `exp(S t) w0`, in closed form for zero and 2x2 rotation blocks.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        propagate(&self.s, &self.w0, t)
    }

    pub fn disturbance_at(&self, t: f64) -> DVector<f64> {
        &self.d * self.state_at(t)
    }
}

/// `exp(S t) w` with zero blocks and rotation blocks `[[0, ω], [-ω, 0]]`
/// handled in closed form and any other block through the matrix exponential.
pub fn propagate(s: &DMatrix<f64>, w: &DVector<f64>, t: f64) -> DVector<f64> {
    let mut out = w.clone();
    for block in coupled_blocks(s, None) {
        match block.as_slice() {
            [k] if s[(*k, *k)] == 0.0 => {}
            [a, b] if s[(*a, *a)] == 0.0 && s[(*b, *b)] == 0.0 && s[(*a, *b)] == -s[(*b, *a)] => {
                let omega = s[(*a, *b)];
                let (sn, cs) = (omega * t).sin_cos();
                out[*a] = cs * w[*a] + sn * w[*b];
                out[*b] = -sn * w[*a] + cs * w[*b];
            }
            idx => {
                let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| s[(idx[i], idx[j])] * t);
                let e = linalg::expm(&sub);
                let wb = DVector::from_fn(idx.len(), |i, _| w[idx[i]]);
                let moved = e * wb;
                for (i, &k) in idx.iter().enumerate() {
                    out[k] = moved[i];
                }
            }
        }
    }
    out
}

/// Connected components of the state-coupling pattern of `S` (and of the
/// output rows of `D`, when given). Each component is sorted.
fn coupled_blocks(s: &DMatrix<f64>, d: Option<&DMatrix<f64>>) -> Vec<Vec<usize>> {
    let q = s.nrows();
    let mut parent: Vec<usize> = (0..q).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let union = |p: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(p, a), find(p, b));
        if ra != rb {
            p[ra.max(rb)] = ra.min(rb);
        }
    };
    for i in 0..q {
        for j in 0..q {
            if s[(i, j)] != 0.0 {
                union(&mut parent, i, j);
            }
        }
    }
    if let Some(d) = d {
        for row in d.row_iter() {
            let cols: Vec<usize> = (0..q).filter(|&j| row[j] != 0.0).collect();
            for w in cols.windows(2) {
                union(&mut parent, w[0], w[1]);
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut root_index = vec![usize::MAX; q];
    for k in 0..q {
        let r = find(&mut parent, k);
        if root_index[r] == usize::MAX {
            root_index[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[root_index[r]].push(k);
    }
    blocks
}

fn is_marginally_stable(s: &DMatrix<f64>) -> bool {
    let q = s.nrows();
    let eigs = linalg::eigenvalues(s);
    if eigs.iter().any(|z| z.re.abs() > REAL_PART_TOL) {
        return false;
    }
    // semisimple: geometric multiplicity equals algebraic multiplicity
    let mut visited = vec![false; eigs.len()];
    let sc: DMatrix<C64> = s.map(|v| C64::new(v, 0.0));
    for i in 0..eigs.len() {
        if visited[i] {
            continue;
        }
        let lambda = eigs[i];
        let mut algebraic = 0;
        for j in i..eigs.len() {
            if !visited[j] && (eigs[j] - lambda).norm() < EIG_CLUSTER_TOL {
                visited[j] = true;
                algebraic += 1;
            }
        }
        let shifted = &sc - DMatrix::<C64>::identity(q, q) * lambda;
        let geometric = q - linalg::complex_rank(&shifted, RANK_TOL);
        if geometric < algebraic {
            return false;
        }
    }
    true
}

fn observability_rank(s: &DMatrix<f64>, d: &DMatrix<f64>) -> usize {
    linalg::rank(&linalg::observability_matrix(s, d), RANK_TOL)
}

/// `{-1, ..., -q_b}` on each observer block of `(S, D)`.
pub fn default_observer_poles(s: &DMatrix<f64>, d: &DMatrix<f64>) -> Vec<C64> {
    coupled_blocks(s, Some(d))
        .iter()
        .flat_map(|b| (1..=b.len()).map(|k| C64::new(-(k as f64), 0.0)))
        .collect()
}

fn check_poles(poles: &[C64], q: usize) -> Result<()> {
    if poles.len() != q {
        return Err(Error::InvalidPoles(format!(
            "expected {q} poles, got {}",
            poles.len()
        )));
    }
    if let Some(p) = poles.iter().find(|p| !(p.re < 0.0)) {
        return Err(Error::InvalidPoles(format!(
            "pole {p} is not in the open left half-plane"
        )));
    }
    let mut unmatched: Vec<C64> = poles
        .iter()
        .copied()
        .filter(|p| p.im.abs() > 1e-12)
        .collect();
    while let Some(p) = unmatched.pop() {
        match unmatched.iter().position(|z| (*z - p.conj()).norm() < 1e-9) {
            Some(k) => {
                unmatched.swap_remove(k);
            }
            None => {
                return Err(Error::InvalidPoles(format!(
                    "pole {p} has no conjugate partner"
                )))
            }
        }
    }
    Ok(())
}

/// Observer gain `K` with `σ(S - KD)` equal to `poles`.
///
/// `(S, D)` is split into decoupled blocks; poles are consumed in block order.
/// Each block is placed by Ackermann's formula on the dual pair using its
/// first output row that observes the block on its own.
pub fn design_observer_gain(
    s: &DMatrix<f64>,
    d: &DMatrix<f64>,
    poles: &[C64],
) -> Result<DMatrix<f64>> {
    let q = s.nrows();
    if s.ncols() != q || d.ncols() != q {
        return Err(Error::InvalidExosystem("inconsistent (S, D) shapes".into()));
    }
    let rank = observability_rank(s, d);
    if rank < q {
        return Err(Error::Unobservable { rank, expected: q });
    }
    check_poles(poles, q)?;

    let mut k = DMatrix::zeros(q, d.nrows());
    let mut cursor = 0;
    for block in coupled_blocks(s, Some(d)) {
        let m = block.len();
        let chunk = &poles[cursor..cursor + m];
        cursor += m;
        check_poles(chunk, m)?;
        let sb = DMatrix::from_fn(m, m, |i, j| s[(block[i], block[j])]);
        let rows: Vec<usize> = (0..d.nrows())
            .filter(|&r| block.iter().any(|&c| d[(r, c)] != 0.0))
            .collect();
        let (row, obs) = rows
            .iter()
            .find_map(|&r| {
                let c = DMatrix::from_fn(1, m, |_, j| d[(r, block[j])]);
                let o = linalg::observability_matrix(&sb, &c);
                (linalg::rank(&o, RANK_TOL) == m).then_some((r, o))
            })
            .ok_or_else(|| {
                Error::InvalidExosystem(format!(
                    "no single output row observes the block {block:?}; multi-output placement is not supported"
                ))
            })?;
        let coeffs = linalg::monic_from_roots(chunk);
        let phi = linalg::eval_monic_at(&coeffs, &sb);
        let obs_inv = obs.try_inverse().ok_or_else(|| Error::Unobservable {
            rank: m - 1,
            expected: m,
        })?;
        let mut e_last = DVector::zeros(m);
        e_last[m - 1] = 1.0;
        let kb = phi * obs_inv * e_last;
        for (i, &state) in block.iter().enumerate() {
            k[(state, row)] = kb[i];
        }
    }
    Ok(k)
}
