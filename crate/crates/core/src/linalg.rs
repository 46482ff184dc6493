//! Small dense linear-algebra helpers and an exact modular rank.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::error::{LueError, Result};

/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

fn threshold(sv: &[f64]) -> f64 {
    sv.iter().copied().fold(0.0, f64::max) * RANK_TOL
}

/// Number of singular values above `RANK_TOL × σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let tol = threshold(&sv);
    sv.iter().filter(|&&s| s > tol && s > 0.0).count()
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(LueError::LengthMismatch { expected: a.nrows(), found: b.len() });
    }
    if a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    if a.nrows() == 0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    let svd = a.clone().svd(true, true);
    let tol = threshold(svd.singular_values.as_slice());
    svd.solve(b, tol.max(f64::MIN_POSITIVE)).map_err(|e| LueError::Singular(e.to_string()))
}

/// `‖a x* − b‖_∞` for the least-squares solution `x*`.
pub fn span_residual(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<f64> {
    let x = least_squares(a, b)?;
    Ok(max_abs(&(a * x - b)))
}

/// Orthonormal basis of the column space of `a`.
pub fn column_space_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let tol = threshold(svd.singular_values.as_slice());
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
    DMatrix::from_fn(a.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// The Mersenne prime `2^61 − 1`.
pub const MODULUS: u64 = (1 << 61) - 1;

fn mul_mod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % MODULUS as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64) -> u64 {
    let mut r = 1;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b);
        }
        b = mul_mod(b, b);
        e >>= 1;
    }
    r
}

fn to_field(x: i64) -> u64 {
    x.rem_euclid(MODULUS as i64) as u64
}

/// Rank over GF(2^61 − 1) of integer rows given as sparse `(column, value)`
/// lists. A full rank here implies full rank over the rationals.
pub fn modular_rank(rows: &[Vec<(usize, i64)>]) -> usize {
    let mut pivots: HashMap<usize, BTreeMap<usize, u64>> = HashMap::new();
    for row in rows {
        let mut r: BTreeMap<usize, u64> = BTreeMap::new();
        for &(c, v) in row {
            let e = r.entry(c).or_insert(0);
            *e = (*e + to_field(v)) % MODULUS;
        }
        r.retain(|_, v| *v != 0);
        while let Some((&lead, &lv)) = r.iter().next() {
            let Some(p) = pivots.get(&lead) else { break };
            // p is normalised to 1 at its lead
            for (&c, &pv) in p {
                let e = r.entry(c).or_insert(0);
                *e = (*e + MODULUS - mul_mod(lv, pv)) % MODULUS;
            }
            r.retain(|_, v| *v != 0);
        }
        if let Some((&lead, &lv)) = r.iter().next() {
            let inv = pow_mod(lv, MODULUS - 2);
            for v in r.values_mut() {
                *v = mul_mod(*v, inv);
            }
            pivots.insert(lead, r);
        }
    }
    pivots.len()
}
