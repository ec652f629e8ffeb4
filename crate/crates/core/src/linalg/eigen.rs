//! Cyclic Jacobi eigensolver for dense symmetric matrices.
//!
//! Jacobi rotations are applied in row-cyclic sweeps until the off-diagonal
//! Frobenius mass drops below the requested tolerance. Quadratic convergence
//! makes a handful of sweeps enough for the matrix orders used here
//! (contraction-rate Laplacians of order ≤ 64).

use thiserror::Error;

/// Default relative off-diagonal tolerance.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 64;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("matrix is not square: row {row} has length {len}, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {delta:e}")]
    NotSymmetric { i: usize, j: usize, delta: f64 },
    #[error("matrix contains a non-finite entry at ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("Jacobi sweeps failed to converge (off-diagonal mass {off:e})")]
    NoConvergence { off: f64 },
}

/// Returns all eigenvalues of a symmetric matrix, sorted ascending.
///
/// `tol` is relative to the Frobenius norm of the input; pass
/// [`DEFAULT_EIGEN_TOL`] unless a looser result is acceptable.
pub fn symmetric_eigenvalues(matrix: &[Vec<f64>], tol: f64) -> Result<Vec<f64>, EigenError> {
    let n = matrix.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            return Err(EigenError::NotSquare {
                row: i,
                len: row.len(),
                n,
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(EigenError::NonFinite { i, j });
            }
        }
    }
    let mut frob = 0.0;
    for i in 0..n {
        for j in 0..n {
            let delta = (matrix[i][j] - matrix[j][i]).abs();
            let scale = matrix[i][j].abs().max(matrix[j][i].abs()).max(1.0);
            if delta > 1e-9 * scale {
                return Err(EigenError::NotSymmetric { i, j, delta });
            }
            frob += matrix[i][j] * matrix[i][j];
        }
    }
    let frob = frob.sqrt().max(f64::MIN_POSITIVE);

    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    // Work on an explicitly symmetrized copy so rotations preserve symmetry
    // exactly even when the input carries last-ulp asymmetry.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = v;
            a[j][i] = v;
        }
    }

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= tol * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, p, q);
            }
        }
    }
    let off = off_diagonal_norm(&a);
    if off > tol.max(1e-10) * frob {
        return Err(EigenError::NoConvergence { off });
    }
    let mut eigenvalues: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eigenvalues.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(eigenvalues)
}

fn off_diagonal_norm(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[i][j] * a[i][j];
            }
        }
    }
    sum.sqrt()
}

/// One Jacobi rotation annihilating `a[p][q]`.
fn rotate(a: &mut [Vec<f64>], p: usize, q: usize) {
    let apq = a[p][q];
    if apq == 0.0 {
        return;
    }
    let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.len();
    for k in 0..n {
        let akp = a[k][p];
        let akq = a[k][q];
        a[k][p] = c * akp - s * akq;
        a[k][q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[p][k];
        let aqk = a[q][k];
        a[p][k] = c * apk - s * aqk;
        a[q][k] = s * apk + c * aqk;
    }
    a[p][q] = 0.0;
    a[q][p] = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: counts eigenvalues below `x` via the inertia of
    /// an LDLᵀ factorization of `A - x I`, then brackets each eigenvalue by
    /// bisection. Shares no code with the Jacobi path.
    fn eigenvalues_by_inertia(a: &[Vec<f64>], lo: f64, hi: f64) -> Vec<f64> {
        let n = a.len();
        let count_below = |x: f64| -> usize {
            // Unpivoted symmetric elimination; nudge x when a pivot vanishes.
            let mut shift = x;
            'retry: for attempt in 0..8 {
                let mut m: Vec<Vec<f64>> = a.to_vec();
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] -= shift;
                }
                let mut negatives = 0;
                for k in 0..n {
                    let pivot = m[k][k];
                    if pivot.abs() < 1e-13 {
                        shift = x + 1e-10 * (attempt + 1) as f64;
                        continue 'retry;
                    }
                    if pivot < 0.0 {
                        negatives += 1;
                    }
                    for i in (k + 1)..n {
                        let f = m[i][k] / pivot;
                        for j in k..n {
                            let sub = f * m[k][j];
                            m[i][j] -= sub;
                        }
                    }
                }
                return negatives;
            }
            panic!("inertia oracle failed to find a usable shift");
        };
        (0..n)
            .map(|idx| {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if count_below(mid) <= idx {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            })
            .collect()
    }

    #[test]
    fn diagonal_matrix_is_its_own_spectrum() {
        let a = vec![
            vec![3.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ];
        let eig = symmetric_eigenvalues(&a, DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(eig, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // Eigenvalues of [[2,1],[1,2]] are 1 and 3.
        let a = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let eig = symmetric_eigenvalues(&a, DEFAULT_EIGEN_TOL).unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-12);
        assert!((eig[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_spectra_match_inertia_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(01);
        for trial in 0..60 {
            let n = 2 + (trial % 3); // orders 2..4
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = rng.random_range(-2.0..2.0);
                    a[i][j] = v;
                    a[j][i] = v;
                }
            }
            let eig = symmetric_eigenvalues(&a, DEFAULT_EIGEN_TOL).unwrap();
            let oracle = eigenvalues_by_inertia(&a, -20.0, 20.0);
            for (got, want) in eig.iter().zip(oracle.iter()) {
                assert!(
                    (got - want).abs() < 1e-8,
                    "trial {trial}: {got} vs oracle {want}"
                );
            }
        }
    }

    #[test]
    fn weyl_perturbation_bound_holds() {
        // |λ_k(A + E) - λ_k(A)| ≤ ||E||₂ ≤ ||E||_F for symmetric A, E.
        let mut rng = ChaCha8Rng::seed_from_u64(02);
        for _ in 0..40 {
            let n = 4;
            let mut a = vec![vec![0.0; n]; n];
            let mut e = vec![vec![0.0; n]; n];
            let mut e_frob = 0.0;
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    a[i][j] = v;
                    a[j][i] = v;
                    let w: f64 = rng.random_range(-1e-3..1e-3);
                    e[i][j] = w;
                    e[j][i] = w;
                    e_frob += if i == j { w * w } else { 2.0 * w * w };
                }
            }
            let e_frob = e_frob.sqrt();
            let perturbed: Vec<Vec<f64>> = a
                .iter()
                .zip(&e)
                .map(|(ra, re)| ra.iter().zip(re).map(|(x, y)| x + y).collect())
                .collect();
            let ea = symmetric_eigenvalues(&a, DEFAULT_EIGEN_TOL).unwrap();
            let ep = symmetric_eigenvalues(&perturbed, DEFAULT_EIGEN_TOL).unwrap();
            for (x, y) in ea.iter().zip(ep.iter()) {
                assert!((x - y).abs() <= e_frob + 1e-10);
            }
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = vec![vec![1.0, 2.0], vec![0.0, 1.0]];
        assert!(matches!(
            symmetric_eigenvalues(&a, DEFAULT_EIGEN_TOL),
            Err(EigenError::NotSymmetric { .. })
        ));
    }
}
