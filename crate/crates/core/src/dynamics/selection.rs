//! Action/estimate selection by index arithmetic.
//!
//! For agent `i` and a full-profile estimate `x^i`, `select_action` returns
//! `x_i = R_i x^i`, `select_others` returns `x^i_{-i} = S_i x^i`, and `embed`
//! rebuilds `x^i = R_iᵀ x_i + S_iᵀ x^i_{-i}`.

use crate::error::{check_len, Error, Result};
use crate::game::ActionLayout;

fn check_index(layout: &ActionLayout, i: usize) -> Result<()> {
    if i < layout.players() {
        Ok(())
    } else {
        Err(Error::InvalidGame(format!(
            "agent index {i} out of range for {} agents",
            layout.players()
        )))
    }
}

pub fn select_action(layout: &ActionLayout, i: usize, est_block: &[f64]) -> Result<Vec<f64>> {
    check_index(layout, i)?;
    check_len("estimate block", layout.total(), est_block.len())?;
    Ok(est_block[layout.range(i)].to_vec())
}

pub fn select_others(layout: &ActionLayout, i: usize, est_block: &[f64]) -> Result<Vec<f64>> {
    check_index(layout, i)?;
    check_len("estimate block", layout.total(), est_block.len())?;
    let r = layout.range(i);
    let mut out = Vec::with_capacity(layout.total() - r.len());
    out.extend_from_slice(&est_block[..r.start]);
    out.extend_from_slice(&est_block[r.end..]);
    Ok(out)
}

pub fn embed(layout: &ActionLayout, i: usize, own: &[f64], others: &[f64]) -> Result<Vec<f64>> {
    check_index(layout, i)?;
    check_len("own action", layout.dim(i), own.len())?;
    check_len(
        "estimates of others",
        layout.total() - layout.dim(i),
        others.len(),
    )?;
    let mut out = vec![0.0; layout.total()];
    embed_into(layout, i, own, others, &mut out);
    Ok(out)
}

/// Unchecked `embed` writing into `out`.
pub(crate) fn embed_into(
    layout: &ActionLayout,
    i: usize,
    own: &[f64],
    others: &[f64],
    out: &mut [f64],
) {
    let r = layout.range(i);
    out[..r.start].copy_from_slice(&others[..r.start]);
    out[r.clone()].copy_from_slice(own);
    out[r.end..].copy_from_slice(&others[r.start..]);
}

/// Unchecked `S_i v`, writing the non-own slots of `v` into `out`.
pub(crate) fn others_into(layout: &ActionLayout, i: usize, v: &[f64], out: &mut [f64]) {
    let r = layout.range(i);
    out[..r.start].copy_from_slice(&v[..r.start]);
    out[r.start..].copy_from_slice(&v[r.end..]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scalar_agents() {
        let l = ActionLayout::uniform(3, 1).unwrap();
        let est = [1.0, 2.0, 3.0];
        assert_eq!(select_action(&l, 1, &est).unwrap(), vec![2.0]);
        assert_eq!(select_others(&l, 1, &est).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn mixed_dimensions() {
        let l = ActionLayout::new(vec![2, 1, 3]).unwrap();
        let est: Vec<f64> = (0..6).map(f64::from).collect();
        assert_eq!(select_action(&l, 2, &est).unwrap(), vec![3.0, 4.0, 5.0]);
        assert_eq!(select_others(&l, 2, &est).unwrap(), vec![0.0, 1.0, 2.0]);
        assert_eq!(
            select_others(&l, 0, &est).unwrap(),
            vec![2.0, 3.0, 4.0, 5.0]
        );
    }

    #[test]
    fn length_mismatch() {
        let l = ActionLayout::new(vec![2, 1]).unwrap();
        assert!(select_action(&l, 0, &[1.0]).is_err());
        assert!(embed(&l, 0, &[1.0], &[1.0]).is_err());
        assert!(select_others(&l, 2, &[0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn embed_inverts_selection(
            dims in prop::collection::vec(1usize..4, 2..5),
            seed in prop::collection::vec(-10.0f64..10.0, 16),
            pick in 0usize..8,
        ) {
            let l = ActionLayout::new(dims).unwrap();
            let i = pick % l.players();
            let est: Vec<f64> = (0..l.total()).map(|k| seed[k % seed.len()] + k as f64).collect();
            let own = select_action(&l, i, &est).unwrap();
            let others = select_others(&l, i, &est).unwrap();
            prop_assert_eq!(embed(&l, i, &own, &others).unwrap(), est.clone());
            // complementary projections: R_iᵀR_i + S_iᵀS_i = I
            let zeros_own = vec![0.0; own.len()];
            let zeros_others = vec![0.0; others.len()];
            let a = embed(&l, i, &own, &zeros_others).unwrap();
            let b = embed(&l, i, &zeros_own, &others).unwrap();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            prop_assert_eq!(sum, est);
        }
    }
}
