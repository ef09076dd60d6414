//! Last-column-augmented truncations of an infinite kernel.
//!
//! The `(k+1)×(k+1)` truncation `P_k` keeps `P(i,j)` for `j < k` and lumps all
//! remaining row mass into column `k`, so every row stays stochastic. The
//! associated sub-Markov kernel `P̂_k` extends `P_k` by zero and approaches
//! `P` in the weak operator norm `sup_{|f|<=1} ‖P̂_k f − Pf‖` measured in the
//! weighted space; this module computes both the certified upper bound
//! `K / V(k)` and the exact value of that distance.

use nalgebra::DMatrix;

use crate::kernels::{DiscreteKernel, WeightSequence};

/// The `(k+1)×(k+1)` last-column-augmented truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTruncation {
    pub k: usize,
    pub matrix: DMatrix<f64>,
    /// Row-wise mass moved into column `k`: `sum_{l >= k} P(i, l)`.
    pub augmented_mass: Vec<f64>,
}

impl FiniteTruncation {
    /// Dimension of the truncated matrix, `k + 1`.
    pub fn dim(&self) -> usize {
        self.k + 1
    }

    /// Writes the matrix as CSV (one row per line) for external inspection.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::new();
        for i in 0..n {
            for j in 0..n {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{}", self.matrix[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the truncation `P_k` from rows `0..=k` of the kernel.
///
/// The lump in column `k` is the sum of the row's explicit entries with
/// `j >= k`. Summing the (finitely supported) overflow directly keeps the
/// lump exactly zero for rows with no mass beyond the window; recovering it
/// as `1 - sum_{j<k} P(i,j)` instead leaves order-epsilon residue in column
/// `k` whose weighted magnitude grows with `V(k)` and poisons the stationary
/// tail at large `k`.
pub fn truncate(kernel: &DiscreteKernel, k: usize) -> FiniteTruncation {
    assert!(k >= 1, "truncation level must be at least 1");
    let n = k + 1;
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    let mut augmented_mass = vec![0.0; n];
    for i in 0..n {
        let mut lump = 0.0;
        for (j, p) in kernel.row(i) {
            if j < k {
                matrix[(i, j)] += p;
            } else {
                lump += p;
            }
        }
        matrix[(i, k)] += lump;
        augmented_mass[i] = lump;
    }
    FiniteTruncation {
        k,
        matrix,
        augmented_mass,
    }
}

/// Certified bound `K / V(k)` on the weak-norm distance between `P̂_k` and `P`,
/// where `K = max(2(delta+L), 1)` comes from the drift constants.
pub fn delta_bound(k: usize, k_const: f64, v: &WeightSequence) -> f64 {
    k_const / v.value(k)
}

/// Exact weak-norm distance `sup_{|f| <= 1} ‖P̂_k f − P f‖` in the weighted
/// space.
///
/// For a row `i <= k` the difference is `sum_{l >= k} P(i,l) (f(k) − f(l))`;
/// the `l = k` term cancels and the supremum over `|f| <= 1` of the remainder
/// is `2 sum_{l > k} P(i,l)`. For `i > k` the truncated kernel vanishes and
/// the row supremum is `1`. Maximizing each row separately (the supremum over
/// `f` of a max equals the max of row suprema) and weighting by `1/V(i)`:
///
/// ```text
/// max( max_{i <= k} 2 * sum_{l > k} P(i,l) / V(i),  1 / V(k+1) )
/// ```
///
/// This always lies below [`delta_bound`] and is exposed for oracle
/// comparisons and optional tightening; the certified pipeline keeps the
/// `K / V(k)` form inside the theorem constants.
pub fn delta_exact(kernel: &DiscreteKernel, k: usize, v: &WeightSequence) -> f64 {
    let mut best = 1.0 / v.value(k + 1);
    for i in 0..=k {
        let overflow: f64 = kernel
            .row(i)
            .iter()
            .filter(|&&(j, _)| j > k)
            .map(|&(_, p)| p)
            .sum();
        if overflow > 0.0 {
            best = best.max(2.0 * overflow / v.value(i));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{weighted_operator_norm, DiscreteKernel};
    use crate::models::RandomWalkSpec;

    fn walk() -> (DiscreteKernel, WeightSequence, f64) {
        let spec = RandomWalkSpec::reference_instance();
        let sol = crate::models::solve_gamma_hat(&spec).unwrap();
        let v = WeightSequence::geometric(sol.gamma_hat).unwrap();
        (spec.to_kernel().unwrap(), v, sol.gamma_hat)
    }

    /// Kernel whose rows 0..=5 live entirely inside {0..5}; the tail still
    /// drifts left so rows past the boundary stay banded.
    fn compact_kernel() -> DiscreteKernel {
        let rows: Vec<Vec<(usize, f64)>> = (0..6)
            .map(|i| {
                if i == 0 {
                    vec![(0, 0.5), (1, 0.5)]
                } else {
                    vec![(i - 1, 0.75), (i, 0.25)]
                }
            })
            .collect();
        DiscreteKernel::new(rows, vec![0.75, 0.25], 1, 0).unwrap()
    }

    #[test]
    fn truncate_without_overflow_is_northwest_corner() {
        let kernel = compact_kernel();
        let t = truncate(&kernel, 8);
        for i in 0..=5 {
            assert_eq!(t.augmented_mass[i], 0.0);
        }
        for (j, p) in kernel.row(3) {
            assert_eq!(t.matrix[(3, j)], p);
        }
    }

    #[test]
    fn truncate_rows_are_stochastic() {
        let (kernel, _, _) = walk();
        for k in [1usize, 2, 5, 17, 45, 80] {
            let t = truncate(&kernel, k);
            for i in 0..t.dim() {
                let s: f64 = (0..t.dim()).map(|j| t.matrix[(i, j)]).sum();
                assert!((s - 1.0).abs() < crate::ROW_SUM_TOL, "k={k} row {i}: {s}");
                for j in 0..t.dim() {
                    assert!(t.matrix[(i, j)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn truncate_last_row_lump_matches_definition() {
        let (kernel, _, _) = walk();
        let k = 12;
        let t = truncate(&kernel, k);
        // Row k keeps a_0 + a_1 at column k (steps 0 and +1 overflow).
        let expect = 0.0 + 1.0 / 6.0;
        assert!((t.matrix[(k, k)] - expect).abs() < 1e-15);
        // Row k-1 lumps only the +1 step.
        assert!((t.matrix[(k - 1, k)] - 1.0 / 6.0).abs() < 1e-15);
        // The lump column is exactly zero further up.
        for i in 0..k - 1 {
            assert_eq!(t.augmented_mass[i], 0.0, "row {i}");
        }
    }

    #[test]
    fn delta_bound_values() {
        let (_, v, _) = walk();
        let k_const = 5.752_317_474_967_829;
        // Ratio one when V(k) equals the constant.
        let v_eq = WeightSequence::tabulated(vec![1.0, k_const]).unwrap();
        assert!((delta_bound(1, k_const, &v_eq) - 1.0).abs() < 1e-15);
        // Reference instance at k = 10.
        assert!((delta_bound(10, k_const, &v) - 2.373_097_702_203_098e-3).abs() < 1e-15);
        // Strict decrease in k.
        for k in 1..60 {
            assert!(delta_bound(k + 1, k_const, &v) < delta_bound(k, k_const, &v));
        }
    }

    #[test]
    fn delta_exact_closed_form_reference() {
        let (kernel, v, gamma) = walk();
        let k = 20;
        let got = delta_exact(&kernel, k, &v);
        let candidate_rows = 2.0 * (1.0 / 6.0) / v.value(k);
        let candidate_cut = 1.0 / v.value(k + 1);
        assert!((got - candidate_rows.max(candidate_cut)).abs() < 1e-18);
        // For this model 1/gamma > 1/3, so the cut term wins.
        assert!(gamma < 3.0);
        assert!((got - candidate_cut).abs() < 1e-18);
    }

    #[test]
    fn delta_exact_no_overflow_gives_cut_term() {
        let kernel = compact_kernel();
        let v = WeightSequence::geometric(1.5).unwrap();
        let k = 7;
        assert_eq!(delta_exact(&kernel, k, &v), 1.0 / v.value(k + 1));
    }

    #[test]
    fn delta_exact_below_delta_bound() {
        let (kernel, v, _) = walk();
        let k_const = 5.752_317_474_967_829;
        for k in 1..50 {
            assert!(delta_exact(&kernel, k, &v) <= delta_bound(k, k_const, &v) + 1e-12);
        }
    }

    /// Brute force over sign vectors: the weighted norm of (P̂_k − P) applied
    /// to each f in {−1, +1}^{0..=hi}, maximized over f. Rows beyond the
    /// window are covered up to `hi` as well.
    fn brute_force_distance(kernel: &DiscreteKernel, k: usize, v: &WeightSequence) -> f64 {
        let (g, d) = kernel.tail_band();
        let hi = k + d + g + 2;
        let bits = hi + 1;
        assert!(bits <= 16, "brute force window too large");
        let mut best = 0.0_f64;
        for mask in 0u32..(1u32 << bits) {
            let f = |j: usize| -> f64 {
                if mask & (1 << j) != 0 {
                    1.0
                } else {
                    -1.0
                }
            };
            // sup over rows of |(P̂_k f)(i) − (P f)(i)| / V(i)
            for i in 0..=hi {
                let row = kernel.row(i);
                let pf: f64 = row.iter().map(|&(j, p)| p * f(j)).sum();
                let pkf: f64 = if i <= k {
                    row.iter()
                        .map(|&(j, p)| p * f(j.min(k)))
                        .sum()
                } else {
                    0.0
                };
                best = best.max((pkf - pf).abs() / v.value(i));
            }
        }
        best
    }

    #[test]
    fn delta_exact_matches_brute_force_small_k() {
        let (kernel, v, _) = walk();
        for k in 2..=8 {
            let exact = delta_exact(&kernel, k, &v);
            let brute = brute_force_distance(&kernel, k, &v);
            assert!(
                (exact - brute).abs() < 1e-12,
                "k={k}: closed form {exact} vs brute {brute}"
            );
        }
    }

    #[test]
    fn truncation_csv_roundtrip_shape() {
        let (kernel, _, _) = walk();
        let t = truncate(&kernel, 3);
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 4);
    }

    #[test]
    fn truncated_matrix_weighted_norm_at_least_one() {
        let (kernel, v, _) = walk();
        let t = truncate(&kernel, 9);
        assert!(weighted_operator_norm(&t.matrix, &v) >= 1.0 - 1e-12);
    }
}
