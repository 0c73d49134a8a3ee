//! Dense real least squares by blocked (tall-skinny) QR.
//!
//! The design matrices here can have 10^5 rows and a few hundred columns.
//! Rows are cut into blocks, each block of `[A | b]` is reduced to its R
//! factor independently, and the stacked factors are reduced once more. The
//! final triangle yields the solution, the residual norm and, through its
//! singular values, the rank and condition number of `A`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const BLOCK_ROWS: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct LstsqSolution {
    pub x: DVector<f64>,
    /// ||A x - b||
    pub residual_norm: f64,
    pub rhs_norm: f64,
    /// sigma_max / sigma_min of A.
    pub condition_number: f64,
    pub rank: usize,
}

impl LstsqSolution {
    pub fn relative_residual(&self) -> f64 {
        if self.rhs_norm > 0.0 {
            self.residual_norm / self.rhs_norm
        } else {
            0.0
        }
    }
}

/// Upper-triangular factor of `[A | b]` with `n + 1` rows, zero-padded when
/// there are fewer rows than that.
fn triangle(m: DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    let r = m.qr().r();
    let mut out = DMatrix::zeros(cols, cols);
    let rows = r.nrows().min(cols);
    out.view_mut((0, 0), (rows, cols))
        .copy_from(&r.rows(0, rows));
    out
}

fn augmented_block(a: &DMatrix<f64>, b: &DVector<f64>, start: usize, len: usize) -> DMatrix<f64> {
    let n = a.ncols();
    let mut m = DMatrix::zeros(len, n + 1);
    m.view_mut((0, 0), (len, n)).copy_from(&a.rows(start, len));
    m.view_mut((0, n), (len, 1)).copy_from(&b.rows(start, len));
    m
}

/// R factor of `[A | b]`, `(n+1) x (n+1)`.
pub(crate) fn reduce(a: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let blocks = m.div_ceil(BLOCK_ROWS).max(1);
    let factors = crate::map_indexed(blocks, |k| {
        let start = k * BLOCK_ROWS;
        let len = BLOCK_ROWS.min(m - start);
        triangle(augmented_block(a, b, start, len))
    });
    if factors.len() == 1 {
        return factors.into_iter().next().expect("one block");
    }
    let mut stacked = DMatrix::zeros(factors.len() * (n + 1), n + 1);
    for (k, f) in factors.iter().enumerate() {
        stacked
            .view_mut((k * (n + 1), 0), (n + 1, n + 1))
            .copy_from(f);
    }
    triangle(stacked)
}

/// Solves `min ||A x - b||`. `labels` name the columns in the rank error.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, labels: &[String]) -> Result<LstsqSolution> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: b.len(),
        });
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if n == 0 {
        return Ok(LstsqSolution {
            x: DVector::zeros(0),
            residual_norm: b.norm(),
            rhs_norm: b.norm(),
            condition_number: 1.0,
            rank: 0,
        });
    }
    let aug = reduce(a, b);
    let r = aug.view((0, 0), (n, n)).into_owned();
    let qtb = aug.view((0, n), (n, 1)).into_owned();
    let residual_norm = aug[(n, n)].abs();

    let svd = r.clone().svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let tol = smax * (m.max(n) as f64) * f64::EPSILON;
    let rank = sv.iter().filter(|s| **s > tol).count();
    if rank < n {
        let v_t = svd.v_t.as_ref().expect("requested V");
        let mut weight = vec![0.0f64; n];
        for (i, s) in sv.iter().enumerate() {
            if *s <= tol {
                for (j, w) in weight.iter_mut().enumerate() {
                    *w += v_t[(i, j)] * v_t[(i, j)];
                }
            }
        }
        let null_labels = labels
            .iter()
            .zip(&weight)
            .filter(|(_, w)| **w > 0.01)
            .map(|(l, _)| l.clone())
            .collect();
        return Err(Error::RankDeficient {
            rank,
            columns: n,
            null_labels,
        });
    }
    let x = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient {
            rank,
            columns: n,
            null_labels: Vec::new(),
        })?
        .column(0)
        .into_owned();
    Ok(LstsqSolution {
        x,
        residual_norm,
        rhs_norm: b.norm(),
        condition_number: smax / sv.min(),
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("c{j}")).collect()
    }

    #[test]
    fn exact_system_is_recovered() {
        let a = random(50, 6, 1);
        let x = DVector::from_vec(vec![1.0, -2.0, 3.5, 0.0, 7.0, -0.25]);
        let sol = solve(&a, &(&a * &x), &names(6)).unwrap();
        assert!((sol.x - x).norm() < 1e-12);
        assert!(sol.residual_norm < 1e-12);
        assert_eq!(sol.rank, 6);
    }

    #[test]
    fn blocked_matches_normal_equations_and_residual_is_orthogonal() {
        // spans several blocks, including a short final one
        let a = random(2 * BLOCK_ROWS + 17, 9, 2);
        let b = DVector::from_column_slice(random(2 * BLOCK_ROWS + 17, 1, 3).as_slice());
        let sol = solve(&a, &b, &names(9)).unwrap();
        let ata = a.transpose() * &a;
        let reference = ata.cholesky().unwrap().solve(&(a.transpose() * &b));
        assert!((&sol.x - reference).norm() < 1e-10);
        let r = &b - &a * &sol.x;
        assert!((r.norm() - sol.residual_norm).abs() < 1e-9 * b.norm());
        let g = a.transpose() * &r;
        assert!(g.amax() <= 1e-9 * a.norm() * r.norm());
    }

    #[test]
    fn condition_number_of_scaled_columns() {
        let mut a = DMatrix::identity(4, 3);
        a[(1, 1)] = 10.0;
        a[(2, 2)] = 0.5;
        let sol = solve(&a, &DVector::zeros(4), &names(3)).unwrap();
        assert!((sol.condition_number - 20.0).abs() < 1e-12);
        assert!(sol.x.norm() == 0.0);
    }

    #[test]
    fn zero_column_is_named() {
        let mut a = random(30, 4, 4);
        a.column_mut(2).fill(0.0);
        match solve(&a, &DVector::zeros(30), &names(4)) {
            Err(Error::RankDeficient {
                rank,
                columns,
                null_labels,
            }) => {
                assert_eq!((rank, columns), (3, 4));
                assert_eq!(null_labels, vec!["c2".to_string()]);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn underdetermined_is_rank_deficient() {
        let a = random(2, 3, 5);
        assert!(matches!(
            solve(&a, &DVector::zeros(2), &names(3)),
            Err(Error::RankDeficient { rank: 2, .. })
        ));
    }

    #[test]
    fn dimension_checks() {
        let a = random(5, 2, 6);
        assert!(solve(&a, &DVector::zeros(4), &names(2)).is_err());
        assert!(solve(&a, &DVector::zeros(5), &names(3)).is_err());
    }
}
