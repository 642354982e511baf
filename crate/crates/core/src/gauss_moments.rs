//! Exact Gaussian moments by enumeration of pairings.
//!
//! Indices are zero-based. Every position of a query belongs to a *group*:
//! each squared factor `(X_i^2 - R_ii)` contributes one group holding two
//! positions, each single factor `X_j` a group of its own. A pairing is
//! *proper* when no pair joins two positions of the same group. For
//! distinct index values this coincides with pairing distinct labels; it
//! stays correct when values repeat, e.g. `E[(X_1^2 - R_11)^2] = 2 R_11^2`.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Factorial growth guard on the number of positions in a query.
pub const MAX_MULTISET: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum MomentError {
    #[error("covariance matrix is not square/symmetric")]
    NotSymmetric,
    #[error("covariance matrix has eigenvalue {0:e} below -1e-10")]
    NotPsd(f64),
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("query has {0} positions, limit is {MAX_MULTISET}")]
    TooLarge(usize),
    #[error("index 0 is the exponent coordinate and cannot be squared")]
    ExponentIndexSquared,
}

/// Symmetric covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl CovMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MomentError> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(MomentError::NotSymmetric);
        }
        let entries: Vec<f64> = rows.iter().flatten().copied().collect();
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (entries[i * dim + j], entries[j * dim + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(MomentError::NotSymmetric);
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Eigenvalue test used before sampling from the matrix.
    pub fn check_psd(&self) -> Result<(), MomentError> {
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        let min = SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            Err(MomentError::NotPsd(min))
        } else {
            Ok(())
        }
    }

    fn check_index(&self, index: usize) -> Result<(), MomentError> {
        if index < self.dim {
            Ok(())
        } else {
            Err(MomentError::IndexOutOfRange {
                index,
                dim: self.dim,
            })
        }
    }
}

/// Index multiset `{s_1, ..., s_m}` for a product moment.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentQuery {
    indices: Vec<usize>,
}

impl MomentQuery {
    pub fn new(indices: Vec<usize>) -> Result<Self, MomentError> {
        if indices.len() > MAX_MULTISET {
            return Err(MomentError::TooLarge(indices.len()));
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Neumaier-compensated accumulator.
#[derive(Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Sums `prod R[value_a, value_b]` over all pairings of `values`, skipping
/// pairs inside one group when `groups` is given.
fn pairing_sum(r: &CovMatrix, values: &[usize], groups: Option<&[usize]>) -> f64 {
    if values.len() % 2 == 1 {
        return 0.0;
    }
    if values.is_empty() {
        return 1.0;
    }
    let mut acc = Compensated::default();
    let mut used = vec![false; values.len()];
    recurse(r, values, groups, &mut used, 1.0, &mut acc);
    acc.value()
}

// Pairs the smallest unused position with each later unused position.
fn recurse(
    r: &CovMatrix,
    values: &[usize],
    groups: Option<&[usize]>,
    used: &mut [bool],
    product: f64,
    acc: &mut Compensated,
) {
    let Some(first) = used.iter().position(|u| !u) else {
        acc.add(product);
        return;
    };
    used[first] = true;
    for second in first + 1..values.len() {
        if used[second] {
            continue;
        }
        if let Some(g) = groups {
            if g[first] == g[second] {
                continue;
            }
        }
        used[second] = true;
        let p = product * r.get(values[first], values[second]);
        recurse(r, values, groups, used, p, acc);
        used[second] = false;
    }
    used[first] = false;
}

/// `E[X_{s_1} ... X_{s_m}]` for centred normal `X` with covariance `r`.
pub fn isserlis_moment(r: &CovMatrix, query: &MomentQuery) -> Result<f64, MomentError> {
    for &i in query.indices() {
        r.check_index(i)?;
    }
    Ok(pairing_sum(r, query.indices(), None))
}

/// `E[prod_i (X_{a_i}^2 - R_{a_i a_i}) prod_j X_{b_j}]` as a sum over proper pairings.
pub fn proper_pairing_moment(
    r: &CovMatrix,
    squared: &[usize],
    single: &[usize],
) -> Result<f64, MomentError> {
    let size = 2 * squared.len() + single.len();
    if size > MAX_MULTISET {
        return Err(MomentError::TooLarge(size));
    }
    for &i in squared.iter().chain(single) {
        r.check_index(i)?;
    }
    let (values, groups) = grouped_positions(squared, single);
    Ok(pairing_sum(r, &values, Some(&groups)))
}

fn grouped_positions(squared: &[usize], single: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut values = Vec::with_capacity(2 * squared.len() + single.len());
    let mut groups = Vec::with_capacity(values.capacity());
    for (g, &i) in squared.iter().enumerate() {
        values.extend([i, i]);
        groups.extend([g, g]);
    }
    for (k, &j) in single.iter().enumerate() {
        values.push(j);
        groups.push(squared.len() + k);
    }
    (values, groups)
}

/// `E[exp(X_0) prod_i (X_{a_i}^2 - R_{a_i a_i})]` via the partition expansion
///
/// `exp(R_00 / 2) * sum over A1 + A2 + A3 (|A2| even) of
///  2^{|A2|} prod_{A2} R_{0i} prod_{A3} R_{0i}^2 * (proper pairings of 2A1 + A2)`.
pub fn exp_tilted_proper_moment(r: &CovMatrix, squared: &[usize]) -> Result<f64, MomentError> {
    r.check_index(0)?;
    if 2 * squared.len() > MAX_MULTISET {
        return Err(MomentError::TooLarge(2 * squared.len()));
    }
    for &i in squared {
        if i == 0 {
            return Err(MomentError::ExponentIndexSquared);
        }
        r.check_index(i)?;
    }
    let n = squared.len();
    let mut acc = Compensated::default();
    // assignment digit 0 -> A1, 1 -> A2, 2 -> A3
    let mut assignment = vec![0u8; n];
    loop {
        let mut a1 = Vec::new();
        let mut a2 = Vec::new();
        let mut weight = 1.0;
        for (k, &part) in assignment.iter().enumerate() {
            let i = squared[k];
            match part {
                0 => a1.push(i),
                1 => {
                    a2.push(i);
                    weight *= 2.0 * r.get(0, i);
                }
                _ => weight *= r.get(0, i) * r.get(0, i),
            }
        }
        if a2.len() % 2 == 0 && weight != 0.0 {
            let (values, groups) = grouped_positions(&a1, &a2);
            acc.add(weight * pairing_sum(r, &values, Some(&groups)));
        }
        // next base-3 assignment
        let mut k = 0;
        while k < n && assignment[k] == 2 {
            assignment[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
        assignment[k] += 1;
    }
    Ok((0.5 * r.get(0, 0)).exp() * acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cov4() -> CovMatrix {
        CovMatrix::from_rows(&[
            vec![2.0, 0.3, -0.4, 0.5],
            vec![0.3, 1.5, 0.2, -0.1],
            vec![-0.4, 0.2, 1.0, 0.25],
            vec![0.5, -0.1, 0.25, 1.2],
        ])
        .unwrap()
    }

    #[test]
    fn fourth_moment_of_standard_normal() {
        let q = MomentQuery::new(vec![0, 0, 0, 0]).unwrap();
        assert_eq!(isserlis_moment(&CovMatrix::identity(1), &q).unwrap(), 3.0);
    }

    #[test]
    fn four_distinct_indices() {
        let r = cov4();
        let q = MomentQuery::new(vec![0, 1, 2, 3]).unwrap();
        let expect = r.get(0, 1) * r.get(2, 3) + r.get(0, 2) * r.get(1, 3) + r.get(0, 3) * r.get(1, 2);
        assert!((isserlis_moment(&r, &q).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn odd_moments_vanish() {
        let r = cov4();
        for q in [vec![0], vec![0, 1, 2], vec![3, 3, 3, 1, 1]] {
            let q = MomentQuery::new(q).unwrap();
            assert_eq!(isserlis_moment(&r, &q).unwrap(), 0.0);
        }
        assert_eq!(proper_pairing_moment(&r, &[0, 1], &[2]).unwrap(), 0.0);
    }

    #[test]
    fn proper_pairing_examples() {
        let r = cov4();
        assert_eq!(proper_pairing_moment(&r, &[0], &[]).unwrap(), 0.0);
        let v = proper_pairing_moment(&r, &[0, 1], &[]).unwrap();
        assert!((v - 2.0 * r.get(0, 1).powi(2)).abs() < 1e-15);
        let v = proper_pairing_moment(&r, &[0], &[1, 2]).unwrap();
        assert!((v - 2.0 * r.get(0, 1) * r.get(0, 2)).abs() < 1e-15);
        // repeated index values: E[(X^2 - R)^2] = 2 R^2
        let v = proper_pairing_moment(&r, &[1, 1], &[]).unwrap();
        assert!((v - 2.0 * 1.5f64.powi(2)).abs() < 1e-14);
    }

    #[test]
    fn exp_tilted_examples() {
        let r = cov4();
        let pre = (0.5 * r.get(0, 0)).exp();
        assert!((exp_tilted_proper_moment(&r, &[]).unwrap() - pre).abs() < 1e-15);
        let v = exp_tilted_proper_moment(&r, &[1]).unwrap();
        assert!((v - pre * r.get(0, 1).powi(2)).abs() < 1e-14);
        let (r01, r02, r12) = (r.get(0, 1), r.get(0, 2), r.get(1, 2));
        let expect = pre * (2.0 * r12 * r12 + 4.0 * r01 * r02 * r12 + r01 * r01 * r02 * r02);
        let v = exp_tilted_proper_moment(&r, &[1, 2]).unwrap();
        assert!((v - expect).abs() < 1e-14);
    }

    #[test]
    fn guards() {
        let r = cov4();
        assert_eq!(MomentQuery::new(vec![0; 17]).unwrap_err(), MomentError::TooLarge(17));
        assert!(proper_pairing_moment(&r, &[0; 9], &[]).is_err());
        assert!(isserlis_moment(&r, &MomentQuery::new(vec![4, 0]).unwrap()).is_err());
        assert_eq!(
            exp_tilted_proper_moment(&r, &[0]).unwrap_err(),
            MomentError::ExponentIndexSquared
        );
        assert!(CovMatrix::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
        let bad = CovMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(bad.check_psd().is_err());
        assert!(cov4().check_psd().is_ok());
    }

    #[test]
    fn pairing_count_is_double_factorial() {
        // all-ones matrix: moment equals the number of pairings (m-1)!!
        let ones = CovMatrix::from_rows(&[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]]).unwrap();
        let q = MomentQuery::new(vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2]).unwrap();
        assert_eq!(isserlis_moment(&ones, &q).unwrap(), 10395.0);
    }

    fn random_cov() -> impl Strategy<Value = CovMatrix> {
        proptest::collection::vec(-1.0f64..1.0, 16).prop_map(|a| {
            let rows: Vec<Vec<f64>> = (0..4)
                .map(|i| {
                    (0..4)
                        .map(|j| (0..4).map(|k| a[i * 4 + k] * a[j * 4 + k]).sum::<f64>())
                        .collect()
                })
                .collect();
            CovMatrix::from_rows(&rows).unwrap()
        })
    }

    proptest! {
        #[test]
        fn proper_moment_without_squares_is_isserlis(
            r in random_cov(),
            single in proptest::collection::vec(0usize..4, 0..7),
        ) {
            let a = proper_pairing_moment(&r, &[], &single).unwrap();
            let b = isserlis_moment(&r, &MomentQuery::new(single).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        #[test]
        fn exp_tilt_decouples_when_uncorrelated(
            r in random_cov(),
            squared in proptest::collection::vec(1usize..4, 0..4),
        ) {
            let rows: Vec<Vec<f64>> = (0..4)
                .map(|i| (0..4).map(|j| {
                    if (i == 0) != (j == 0) { 0.0 } else { r.get(i, j) }
                }).collect())
                .collect();
            let r = CovMatrix::from_rows(&rows).unwrap();
            let a = exp_tilted_proper_moment(&r, &squared).unwrap();
            let b = (0.5 * r.get(0, 0)).exp() * proper_pairing_moment(&r, &squared, &[]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        #[test]
        fn proper_moment_matches_inclusion_exclusion(
            r in random_cov(),
            squared in proptest::collection::vec(0usize..4, 0..4),
            single in proptest::collection::vec(0usize..4, 0..3),
        ) {
            // expand prod (X_a^2 - R_aa) over subsets and evaluate each term by Isserlis
            let n = squared.len();
            let mut total = 0.0;
            for mask in 0u32..(1 << n) {
                let mut idx = single.clone();
                let mut coef = 1.0;
                for (k, &a) in squared.iter().enumerate() {
                    if mask & (1 << k) != 0 {
                        idx.extend([a, a]);
                    } else {
                        coef *= -r.get(a, a);
                    }
                }
                total += coef * isserlis_moment(&r, &MomentQuery::new(idx).unwrap()).unwrap();
            }
            let direct = proper_pairing_moment(&r, &squared, &single).unwrap();
            prop_assert!((total - direct).abs() <= 1e-9 * (1.0 + total.abs()));
        }
    }
}
