//! Infinite discrete Markov kernels, weight sequences and drift verification.
//!
//! A kernel is stored as finitely many explicit boundary rows plus a
//! homogeneous tail law: for every row index `i` past the boundary, row `i`
//! places probability `increments[m]` on state `i - g + m`. Rows are produced
//! lazily; nothing infinite is ever materialized.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{DRIFT_SLACK, ROW_SUM_TOL};

/// Errors raised while building kernels or verifying drift inequalities.
#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    /// A row does not sum to one within [`ROW_SUM_TOL`].
    #[error("row {row} sums to {sum} (must be 1 within tolerance)")]
    RowNotStochastic { row: usize, sum: f64 },
    /// A negative probability entry was supplied.
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    /// Boundary rows must cover at least the first `g` states.
    #[error("kernel needs at least {needed} boundary rows, got {got}")]
    TooFewBoundaryRows { needed: usize, got: usize },
    /// A weight sequence violated `V(0) = 1` or monotonicity.
    #[error("invalid weight sequence: {0}")]
    InvalidWeight(String),
    /// The drift inequality fails at a specific row.
    #[error("drift inequality fails at row {row}: (PV)(i) exceeds delta*V(i)+L by {excess}")]
    DriftViolation { row: usize, excess: f64 },
    /// No analytic tail argument applies and only finitely many rows can be checked.
    #[error("cannot certify the drift inequality beyond the checked rows")]
    TailUnverifiable,
    /// Parameters outside their admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A sparse kernel row: list of `(state, probability)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

/// A Markov kernel on `{0, 1, 2, ...}` with finitely many explicit boundary
/// rows and a spatially homogeneous banded tail.
///
/// For `i >= boundary_rows()`, row `i` is supported on `[i - g, i + d]` with
/// `P(i, i - g + m) = increments[m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteKernel {
    boundary: Vec<SparseRow>,
    /// Tail increment law `a_{-g}, ..., a_d`, indexed by `m = offset + g`.
    increments: Vec<f64>,
    g: usize,
    d: usize,
}

impl DiscreteKernel {
    /// Builds a kernel from explicit boundary rows and a tail increment law.
    ///
    /// `increments` has length `g + d + 1` and entry `m` is the probability of
    /// a step of `m - g`. Every row must be stochastic within [`ROW_SUM_TOL`]
    /// and there must be at least `g` boundary rows so the tail law never
    /// steps below state 0.
    pub fn new(
        boundary: Vec<SparseRow>,
        increments: Vec<f64>,
        g: usize,
        d: usize,
    ) -> Result<Self, KernelError> {
        if increments.len() != g + d + 1 {
            return Err(KernelError::InvalidParameter(format!(
                "increment vector has length {}, expected g+d+1 = {}",
                increments.len(),
                g + d + 1
            )));
        }
        if boundary.len() < g {
            return Err(KernelError::TooFewBoundaryRows {
                needed: g,
                got: boundary.len(),
            });
        }
        for (m, &p) in increments.iter().enumerate() {
            if p < 0.0 {
                return Err(KernelError::NegativeEntry {
                    row: boundary.len(),
                    col: m,
                    value: p,
                });
            }
        }
        let tail_sum: f64 = increments.iter().sum();
        if (tail_sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(KernelError::RowNotStochastic {
                row: boundary.len(),
                sum: tail_sum,
            });
        }
        for (i, row) in boundary.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, p) in row {
                if p < 0.0 {
                    return Err(KernelError::NegativeEntry {
                        row: i,
                        col: j,
                        value: p,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(KernelError::RowNotStochastic { row: i, sum });
            }
        }
        Ok(Self {
            boundary,
            increments,
            g,
            d,
        })
    }

    /// The identity kernel (every state absorbing). Useful as a degenerate
    /// test case; it satisfies no nontrivial drift inequality.
    pub fn identity() -> Self {
        Self {
            boundary: vec![vec![(0, 1.0)]],
            increments: vec![1.0],
            g: 0,
            d: 0,
        }
    }

    /// Number of explicitly stored rows; rows at or past this index follow
    /// the homogeneous tail law.
    pub fn boundary_rows(&self) -> usize {
        self.boundary.len()
    }

    /// Tail band `(g, d)`: maximal left and right step sizes.
    pub fn tail_band(&self) -> (usize, usize) {
        (self.g, self.d)
    }

    /// Tail increment probabilities `a_{-g}, ..., a_d`.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Row `i` as a sparse list of `(state, probability)` pairs with zero
    /// entries skipped. Always a finite list.
    pub fn row(&self, i: usize) -> SparseRow {
        if i < self.boundary.len() {
            self.boundary[i].clone()
        } else {
            self.increments
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(m, &p)| (i - self.g + m, p))
                .collect()
        }
    }

    /// Largest column index with nonzero mass among rows `0..=i`.
    pub fn max_support(&self, i: usize) -> usize {
        let mut hi = 0;
        for r in 0..=i {
            for (j, _) in self.row(r) {
                hi = hi.max(j);
            }
        }
        hi
    }
}

/// The weight sequence `V`: increasing, `V(0) = 1`, declared unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSequence {
    /// `V(j) = gamma^j` for some `gamma > 1`.
    Geometric { gamma: f64 },
    /// Explicitly tabulated weights; indices past the table are an error.
    Tabulated { values: Vec<f64> },
}

impl WeightSequence {
    /// Geometric weights `gamma^j`; requires `gamma > 1`.
    pub fn geometric(gamma: f64) -> Result<Self, KernelError> {
        let valid = gamma.is_finite() && gamma > 1.0;
        if !valid {
            return Err(KernelError::InvalidWeight(format!(
                "geometric base must be > 1, got {gamma}"
            )));
        }
        Ok(Self::Geometric { gamma })
    }

    /// Tabulated weights; checks `V(0) = 1` and strict monotonicity.
    pub fn tabulated(values: Vec<f64>) -> Result<Self, KernelError> {
        if values.is_empty() || values[0] != 1.0 {
            return Err(KernelError::InvalidWeight(
                "tabulated weights must start with V(0) = 1".into(),
            ));
        }
        for w in values.windows(2) {
            let increasing = w[1] > w[0];
            if !increasing {
                return Err(KernelError::InvalidWeight(
                    "tabulated weights must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self::Tabulated { values })
    }

    /// `V(j)`.
    ///
    /// Panics if `j` lies past the end of a tabulated sequence; callers
    /// validate coverage when the sequence is built from configuration.
    pub fn value(&self, j: usize) -> f64 {
        match self {
            Self::Geometric { gamma } => gamma.powi(j as i32),
            Self::Tabulated { values } => values[j],
        }
    }

    /// `ln V(j)`, stable for large `j` in the geometric case.
    pub fn ln_value(&self, j: usize) -> f64 {
        match self {
            Self::Geometric { gamma } => j as f64 * gamma.ln(),
            Self::Tabulated { values } => values[j].ln(),
        }
    }

    /// The geometric base, when there is one.
    pub fn geometric_base(&self) -> Option<f64> {
        match self {
            Self::Geometric { gamma } => Some(*gamma),
            Self::Tabulated { .. } => None,
        }
    }

    /// Smallest `n` with `V(n) >= threshold`, or `None` for a tabulated
    /// sequence that never reaches it.
    pub fn first_index_reaching(&self, threshold: f64) -> Option<usize> {
        match self {
            Self::Geometric { gamma } => {
                if threshold <= 1.0 {
                    return Some(0);
                }
                // Start from the logarithmic guess and fix up float edges.
                let mut n = (threshold.ln() / gamma.ln()).floor().max(0.0) as usize;
                while self.value(n) < threshold {
                    n += 1;
                }
                while n > 0 && self.value(n - 1) >= threshold {
                    n -= 1;
                }
                Some(n)
            }
            Self::Tabulated { values } => values.iter().position(|&v| v >= threshold),
        }
    }
}

/// Verified drift inequality `PV <= delta*V + L*1` with metadata on how the
/// infinite tail was handled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCertificate {
    pub delta: f64,
    pub l: f64,
    /// Number of rows checked numerically.
    pub rows_checked: usize,
    /// True when the tail was certified by the constant-ratio argument
    /// rather than row enumeration.
    pub analytic_tail: bool,
}

/// Evaluates `(PV)(i) = sum_j P(i,j) V(j)` as an exact finite sum.
pub fn apply_to_weight(kernel: &DiscreteKernel, v: &WeightSequence, i: usize) -> f64 {
    kernel.row(i).iter().map(|&(j, p)| p * v.value(j)).sum()
}

/// Checks `PV <= delta*V + L*1` and certifies it over the whole state space.
///
/// Boundary rows (and any further rows up to `rows`) are checked numerically
/// with slack `DRIFT_SLACK * max(1, V(i))`: the weight scale is the natural
/// unit for row `i`, since both sides of the inequality carry rounding of
/// order `eps * V(i)`. The infinite tail is certified analytically
/// when the kernel past its boundary is homogeneous and `V` is geometric:
/// the ratio `(PV)(i)/V(i)` is then the constant `sum_m a_m gamma^m`, and the
/// inequality holds for every tail row iff that constant is at most `delta`.
/// Without such an argument the tail cannot be certified and
/// [`KernelError::TailUnverifiable`] is returned.
pub fn verify_drift(
    kernel: &DiscreteKernel,
    v: &WeightSequence,
    delta: f64,
    l: f64,
    rows: usize,
) -> Result<DriftCertificate, KernelError> {
    let delta_in_range = delta > 0.0 && delta < 1.0;
    if !delta_in_range {
        return Err(KernelError::InvalidParameter(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let offset_positive = l > 0.0;
    if !offset_positive {
        return Err(KernelError::InvalidParameter(format!(
            "L must be positive, got {l}"
        )));
    }

    let b = kernel.boundary_rows();
    let checked = rows.max(b);
    for i in 0..checked {
        let lhs = apply_to_weight(kernel, v, i);
        let rhs = delta * v.value(i) + l;
        if lhs > rhs + DRIFT_SLACK * v.value(i).max(1.0) {
            return Err(KernelError::DriftViolation {
                row: i,
                excess: lhs - rhs,
            });
        }
    }

    if let Some(gamma) = v.geometric_base() {
        // Tail ratio sum_m a_m gamma^m, exact finite sum.
        let (g, _) = kernel.tail_band();
        let ratio: f64 = kernel
            .increments()
            .iter()
            .enumerate()
            .map(|(m, &p)| p * gamma.powi(m as i32 - g as i32))
            .sum();
        if ratio <= delta + DRIFT_SLACK {
            return Ok(DriftCertificate {
                delta,
                l,
                rows_checked: checked,
                analytic_tail: true,
            });
        }
        // Constant ratio above delta: the excess (ratio - delta) V(i) grows
        // without bound, so some tail row must violate the inequality.
        let mut i = b.max(checked);
        loop {
            let lhs = apply_to_weight(kernel, v, i);
            let rhs = delta * v.value(i) + l;
            if lhs > rhs + DRIFT_SLACK * v.value(i).max(1.0) {
                return Err(KernelError::DriftViolation {
                    row: i,
                    excess: lhs - rhs,
                });
            }
            i += 1;
        }
    }

    Err(KernelError::TailUnverifiable)
}

/// Weighted operator norm of a finite matrix: `max_i sum_j |M(i,j)| V(j) / V(i)`.
///
/// This is the operator norm induced by `‖h‖ = sup_i |h(i)|/V(i)` on functions
/// over `{0, ..., n-1}`.
pub fn weighted_operator_norm(m: &DMatrix<f64>, v: &WeightSequence) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
    let n = m.nrows();
    let weights: Vec<f64> = (0..n).map(|j| v.value(j)).collect();
    let mut best = 0.0_f64;
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            sum += m[(i, j)].abs() * weights[j];
        }
        best = best.max(sum / weights[i]);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::RandomWalkSpec;

    fn walk_kernel() -> (DiscreteKernel, WeightSequence, f64, f64) {
        let spec = RandomWalkSpec::reference_instance();
        let sol = crate::models::solve_gamma_hat(&spec).unwrap();
        let v = WeightSequence::geometric(sol.gamma_hat).unwrap();
        (spec.to_kernel().unwrap(), v, sol.gamma_hat, sol.phi_at_gamma_hat)
    }

    #[test]
    fn apply_to_weight_identity() {
        let kernel = DiscreteKernel::identity();
        let v = WeightSequence::geometric(1.7).unwrap();
        let expect = v.value(5);
        // Constant folding may round the two power evaluations differently.
        assert!((apply_to_weight(&kernel, &v, 5) - expect).abs() <= 1e-14 * expect);
    }

    #[test]
    fn apply_to_weight_walk_boundary_row() {
        let (kernel, v, gamma, _) = walk_kernel();
        // Row 0 puts mass 1/2 on each of states 0 and 1.
        let got = apply_to_weight(&kernel, &v, 0);
        assert!((got - (0.5 + 0.5 * gamma)).abs() < 1e-14);
        assert!((got - 1.589_990_536_079_078_7).abs() < 1e-12);
    }

    #[test]
    fn apply_to_weight_walk_tail_rows_have_constant_ratio() {
        let (kernel, v, _, phi) = walk_kernel();
        for i in 2..40 {
            let got = apply_to_weight(&kernel, &v, i);
            let rel = (got / v.value(i) - phi).abs();
            assert!(rel < 1e-12, "row {i}: ratio off by {rel}");
        }
    }

    #[test]
    fn apply_to_weight_linear_in_weight() {
        // Doubling V doubles (PV)(i); checked through a scaled tabulated copy.
        let (kernel, v, _, _) = walk_kernel();
        for i in [0usize, 1, 2, 7, 19] {
            let base = apply_to_weight(&kernel, &v, i);
            let doubled: f64 = kernel
                .row(i)
                .iter()
                .map(|&(j, p)| p * 2.0 * v.value(j))
                .sum();
            assert!((doubled - 2.0 * base).abs() <= 1e-12 * doubled.abs());
        }
    }

    #[test]
    fn verify_drift_walk_succeeds_analytically() {
        let (kernel, v, _, _) = walk_kernel();
        let cert = verify_drift(&kernel, &v, 0.6215, 2.26, 100).unwrap();
        assert!(cert.analytic_tail);
        assert_eq!(cert.rows_checked, 100);
    }

    #[test]
    fn verify_drift_identity_fails() {
        let kernel = DiscreteKernel::identity();
        let v = WeightSequence::geometric(2.0).unwrap();
        let err = verify_drift(&kernel, &v, 0.5, 1.0, 4).unwrap_err();
        match err {
            KernelError::DriftViolation { excess, .. } => assert!(excess > 0.0),
            other => panic!("expected DriftViolation, got {other:?}"),
        }
    }

    #[test]
    fn verify_drift_tail_violation_below_contraction_ratio() {
        // delta = 0.60 is below the tail ratio ~0.6214, so some tail row fails.
        let (kernel, v, _, _) = walk_kernel();
        let err = verify_drift(&kernel, &v, 0.60, 2.26, 10).unwrap_err();
        match err {
            KernelError::DriftViolation { row, .. } => assert!(row >= 2),
            other => panic!("expected tail DriftViolation, got {other:?}"),
        }
    }

    #[test]
    fn verify_drift_monotone_in_parameters() {
        let (kernel, v, _, _) = walk_kernel();
        assert!(verify_drift(&kernel, &v, 0.6215, 2.26, 50).is_ok());
        assert!(verify_drift(&kernel, &v, 0.70, 2.26, 50).is_ok());
        assert!(verify_drift(&kernel, &v, 0.6215, 5.0, 50).is_ok());
        assert!(verify_drift(&kernel, &v, 0.95, 9.0, 50).is_ok());
    }

    #[test]
    fn verify_drift_tabulated_weight_is_unverifiable() {
        let (kernel, _, gamma, _) = walk_kernel();
        let table: Vec<f64> = (0..64).map(|j| gamma.powi(j)).collect();
        let v = WeightSequence::tabulated(table).unwrap();
        let err = verify_drift(&kernel, &v, 0.6215, 2.26, 50).unwrap_err();
        assert_eq!(err, KernelError::TailUnverifiable);
    }

    #[test]
    fn weighted_norm_identity_is_one() {
        let v = WeightSequence::geometric(3.0).unwrap();
        let m = DMatrix::<f64>::identity(6, 6);
        assert_eq!(weighted_operator_norm(&m, &v), 1.0);
    }

    #[test]
    fn weighted_norm_stochastic_with_flat_weight_is_one() {
        // With an (almost) flat weight the norm of a stochastic matrix is the
        // plain max row sum, i.e. 1.
        let m = DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.5, 1.0, 0.0, 0.0, 0.1, 0.1, 0.8]);
        let v = WeightSequence::geometric(1.0 + 1e-12).unwrap();
        assert!((weighted_operator_norm(&m, &v) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weighted_norm_single_entry() {
        let v = WeightSequence::tabulated(vec![1.0, 2.0]).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        assert_eq!(weighted_operator_norm(&m, &v), 4.0);
    }

    #[test]
    fn weighted_norm_of_stochastic_matrix_at_least_one() {
        // The constant function 1 has norm 1 and M1 = 1 for stochastic M.
        let v = WeightSequence::geometric(1.5).unwrap();
        for seed in 0..20u64 {
            let n = 3 + (seed as usize % 4);
            let mut m = DMatrix::zeros(n, n);
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for i in 0..n {
                let mut row = Vec::with_capacity(n);
                let mut sum = 0.0;
                for _ in 0..n {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let u = ((state >> 11) as f64) / ((1u64 << 53) as f64);
                    row.push(u);
                    sum += u;
                }
                for j in 0..n {
                    m[(i, j)] = row[j] / sum;
                }
            }
            assert!(weighted_operator_norm(&m, &v) >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn first_index_reaching_matches_scan() {
        let v = WeightSequence::geometric(2.179981).unwrap();
        for &t in &[0.5, 1.0, 5.75, 1e3, 1e7, 1e12] {
            let n = v.first_index_reaching(t).unwrap();
            assert!(v.value(n) >= t);
            if n > 0 {
                assert!(v.value(n - 1) < t);
            }
        }
    }
}
