use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Exact minimizer of `a t^2 - 2 b t + w_r t` over `t` in [0, 1].
///
/// `a = 0` leaves a linear function: the minimizer sits at a bound, or
/// `current` is kept when the direction is flat.
pub fn coordinate_minimizer(a: f64, b: f64, w_r: f64, current: f64) -> f64 {
    if a > 0.0 {
        ((b - w_r / 2.0) / a).clamp(0.0, 1.0)
    } else {
        let slope = w_r - 2.0 * b;
        if slope > 0.0 {
            0.0
        } else if slope < 0.0 {
            1.0
        } else {
            current
        }
    }
}

/// `x^T Q x + 2 h^T x + c + l1 * sum(x)` on the box `[0, 1]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    pub q: DMatrix<f64>,
    pub h: DVector<f64>,
    pub c: f64,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussSeidelOutcome {
    pub sweeps: usize,
    pub converged: bool,
    /// Objective before the first sweep and after every sweep.
    pub objectives: Vec<f64>,
}

impl QuadraticProblem {
    pub fn zeros(n: usize, l1: f64) -> Self {
        Self {
            q: DMatrix::zeros(n, n),
            h: DVector::zeros(n),
            c: 0.0,
            l1,
        }
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    /// Adds `weight * (g . x + r0)^2`.
    pub fn add_residual(&mut self, g: &[f64], r0: f64, weight: f64) {
        let n = self.dim();
        for i in 0..n {
            if g[i] == 0.0 {
                continue;
            }
            let wg = weight * g[i];
            for j in 0..n {
                self.q[(i, j)] += wg * g[j];
            }
            self.h[i] += wg * r0;
        }
        self.c += weight * r0 * r0;
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        (xv.transpose() * &self.q * &xv)[0] + 2.0 * self.h.dot(&xv) + self.c + self.l1 * xv.sum()
    }

    /// `(a_k, b_k)` of the 1-D subproblem for coordinate `k` with the others
    /// held at `x`.
    pub fn coordinate_terms(&self, x: &[f64], k: usize) -> (f64, f64) {
        let mut off = self.h[k];
        for (j, &xj) in x.iter().enumerate() {
            if j != k {
                off += self.q[(k, j)] * xj;
            }
        }
        (self.q[(k, k)], -off)
    }

    /// Cyclic coordinate sweeps `k = 0..n` until the largest change within a
    /// sweep drops below `tol`. Fails if a sweep ever increases the objective.
    pub fn gauss_seidel(
        &self,
        x: &mut [f64],
        max_sweeps: usize,
        tol: f64,
    ) -> Result<GaussSeidelOutcome> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        for v in x.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        let mut objectives = vec![self.value(x)];
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < max_sweeps {
            sweeps += 1;
            let mut max_change: f64 = 0.0;
            for k in 0..x.len() {
                let (a, b) = self.coordinate_terms(x, k);
                let next = coordinate_minimizer(a, b, self.l1, x[k]);
                max_change = max_change.max((next - x[k]).abs());
                x[k] = next;
            }
            let value = self.value(x);
            let prev = *objectives.last().unwrap();
            if value > prev + 1e-10 * prev.abs().max(1.0) {
                return Err(Error::Numerical(format!(
                    "Gauss-Seidel sweep {sweeps} increased the objective ({prev} -> {value})"
                )));
            }
            objectives.push(value);
            if max_change < tol {
                converged = true;
                break;
            }
        }
        Ok(GaussSeidelOutcome {
            sweeps,
            converged,
            objectives,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, l1: f64) -> QuadraticProblem {
        let mut p = QuadraticProblem::zeros(n, l1);
        for _ in 0..(2 * n + 3) {
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            p.add_residual(&g, rng.random_range(-1.0..1.0), 1.0);
        }
        p
    }

    #[test]
    fn one_dimensional_closed_form() {
        // a t^2 - 2 b t + w t with a = 2, b = 1, w = 0.5 -> (1 - 0.25) / 2
        assert!((coordinate_minimizer(2.0, 1.0, 0.5, 0.0) - 0.375).abs() < 1e-15);
        assert_eq!(coordinate_minimizer(1.0, 5.0, 0.0, 0.0), 1.0);
        assert_eq!(coordinate_minimizer(1.0, 0.1, 1e9, 0.7), 0.0);
        assert_eq!(coordinate_minimizer(0.0, 0.0, 0.0, 0.4), 0.4);
        assert_eq!(coordinate_minimizer(0.0, 1.0, 0.5, 0.4), 1.0);
    }

    #[test]
    fn single_coordinate_problem_matches_closed_form() {
        // (3 x - 2)^2 + 0.4 x -> a = 9, b = 6
        let mut p = QuadraticProblem::zeros(1, 0.4);
        p.add_residual(&[3.0], -2.0, 1.0);
        let mut x = [0.0];
        let out = p.gauss_seidel(&mut x, 10, 1e-12).unwrap();
        assert!(out.converged);
        assert!((x[0] - (6.0 - 0.2) / 9.0).abs() < 1e-12);
    }

    #[test]
    fn heavy_shrinkage_gives_exact_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_problem(&mut rng, 4, 1e9);
        let mut x = [0.5; 4];
        p.gauss_seidel(&mut x, 50, 1e-12).unwrap();
        assert_eq!(x, [0.0; 4]);
    }

    #[test]
    fn sweeps_never_increase_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let l1 = rng.random_range(0.0..0.5);
            let p = random_problem(&mut rng, 6, l1);
            let mut x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
            let out = p.gauss_seidel(&mut x, 500, 1e-10).unwrap();
            assert!(out.objectives.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn sparsity_grows_with_l1_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_problem(&mut rng, 8, 0.0);
        let mut zeros = Vec::new();
        for l1 in [0.0, 0.5, 5.0] {
            let p = QuadraticProblem { l1, ..base.clone() };
            let mut x = vec![0.5; 8];
            p.gauss_seidel(&mut x, 2000, 1e-12).unwrap();
            zeros.push(x.iter().filter(|v| **v == 0.0).count());
        }
        assert!(zeros.windows(2).all(|w| w[0] <= w[1]), "{zeros:?}");
    }
}
