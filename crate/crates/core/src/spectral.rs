//! Spectral analysis of the finite truncations: stationary vectors, second
//! eigenvalues, and the ergodicity constants `(s, C_k)`.
//!
//! Two numerical choices matter here and are easy to get wrong:
//!
//! * The stationary vector is computed with the GTH (state-reduction)
//!   elimination, which uses no subtractions and delivers every entry with
//!   small *relative* error. A residual-accurate solve is not enough: the
//!   weighted norms multiply entry `j` by `V(j)`, so absolute noise of order
//!   `1e-16` in a tail entry becomes order-one garbage once `V(k)` passes
//!   `1e15`.
//! * All weighted norms of powers are evaluated in the conjugated basis
//!   `D^{-1} M D` with `D = diag(V)`. The conjugated matrices have entries of
//!   order one, so matrix powers stay well scaled at any truncation level.
//!   Powering first and weighting afterwards loses the same `V(k)` factors.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::kernels::WeightSequence;
use crate::truncation::FiniteTruncation;

/// Residual tolerance for the stationary vector, `‖πP − π‖_∞`.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-12;

/// Two eigenvalues within this distance of 1 means the unit eigenvalue is not
/// numerically simple.
pub const UNIT_EIGENVALUE_TOL: f64 = 1e-8;

/// Modulus threshold above which a non-unit eigenvalue counts as peripheral.
pub const PERIPHERAL_TOL: f64 = 1e-10;

/// Errors from the spectral computations.
#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    /// The truncated chain is not irreducible and aperiodic.
    #[error("truncated chain is not ergodic: {0}")]
    NotErgodic(String),
    /// Some eigenvalue other than the simple unit one has modulus >= 1 - tol.
    #[error("peripheral spectrum: eigenvalue of modulus {modulus} besides the unit eigenvalue")]
    PeripheralSpectrum { modulus: f64 },
    /// No power index `s <= cap` satisfies the norm inequality; the chosen
    /// rate is too close to the second eigenvalue.
    #[error("no s <= {cap} with |G^s| <= rho^s (rho = {rho}); raise rho or the cap")]
    SCapExceeded { cap: usize, rho: f64 },
    /// The rate must lie strictly between the second eigenvalue modulus and 1.
    #[error("rho = {rho} is not inside ({rho_tilde}, 1)")]
    RateOutOfRange { rho: f64, rho_tilde: f64 },
}

/// Per-level spectral data feeding the bound pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationAnalysis {
    pub k: usize,
    /// Stationary distribution of `P_k` (entrywise relative accuracy).
    pub pi_k: Vec<f64>,
    /// Modulus of the second-largest eigenvalue of `P_k`.
    pub rho_tilde: f64,
    /// Chosen rate in `(rho_tilde, 1)`.
    pub rho_k: f64,
    /// Smallest power index with `|G^s| <= rho_k^s` in the weighted norm.
    pub s: usize,
    /// Ergodicity constant: `|P_k^n - 1 pi_k| <= C_k rho_k^n` for all `n >= 0`.
    pub c_k: f64,
    /// Closed-form upper bound for `C_k` from the drift constants.
    pub c_bar_k: f64,
    /// Stationary weighted mass `sum_j pi_k(j) V(j)`.
    pub pi_v: f64,
}

impl TruncationAnalysis {
    /// Resolvent bound `H` for this analysis at a given `vartheta`, using the
    /// computed constant `C_k`.
    pub fn h_bar(&self, delta: f64, l: f64, vartheta: f64) -> f64 {
        h_k_bound(self.c_k, delta, l, vartheta)
    }
}

/// Checks irreducibility (single strongly connected class) and aperiodicity
/// of the support graph.
fn check_ergodic(p: &DMatrix<f64>) -> Result<(), SpectralError> {
    let n = p.nrows();
    let reach_from = |start: usize, transpose: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let edge = if transpose { p[(j, i)] } else { p[(i, j)] };
                if edge > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    let fwd = reach_from(0, false);
    let bwd = reach_from(0, true);
    if fwd.iter().any(|&b| !b) || bwd.iter().any(|&b| !b) {
        return Err(SpectralError::NotErgodic(
            "support graph is not strongly connected".into(),
        ));
    }
    // Aperiodicity: gcd of (level differences + 1) over edges in a BFS layering.
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    level[0] = 0;
    let mut g = 0usize;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if p[(i, j)] > 0.0 {
                if level[j] == usize::MAX {
                    level[j] = level[i] + 1;
                    queue.push_back(j);
                } else {
                    let diff = (level[i] + 1).abs_diff(level[j]);
                    g = gcd(g, diff);
                }
            }
        }
    }
    if g != 1 {
        return Err(SpectralError::NotErgodic(format!(
            "support graph is periodic with period {g}"
        )));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// GTH state-reduction: the stationary vector of an irreducible stochastic
/// matrix with entrywise relative accuracy (no subtractions anywhere).
fn gth(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let mut q = p.clone();
    for m in (1..n).rev() {
        let mut scale = 0.0;
        for j in 0..m {
            scale += q[(m, j)];
        }
        for i in 0..m {
            let factor = q[(i, m)] / scale;
            for j in 0..m {
                q[(i, j)] += factor * q[(m, j)];
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for m in 1..n {
        let mut num = 0.0;
        for i in 0..m {
            num += pi[i] * q[(i, m)];
        }
        let mut scale = 0.0;
        for j in 0..m {
            scale += q[(m, j)];
        }
        pi[m] = num / scale;
    }
    let total: f64 = pi.iter().sum();
    for x in &mut pi {
        *x /= total;
    }
    pi
}

/// Stationary distribution of the truncated matrix.
///
/// The chain is first checked to be irreducible and aperiodic; the vector is
/// then produced by GTH elimination and verified against the residual
/// tolerance [`STATIONARY_RESIDUAL_TOL`].
pub fn stationary(p_k: &FiniteTruncation) -> Result<Vec<f64>, SpectralError> {
    stationary_of(&p_k.matrix)
}

/// [`stationary`] for an arbitrary square stochastic matrix.
pub fn stationary_of(m: &DMatrix<f64>) -> Result<Vec<f64>, SpectralError> {
    check_ergodic(m)?;
    let pi = gth(m);
    let n = m.nrows();
    let mut resid = 0.0_f64;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += pi[i] * m[(i, j)];
        }
        resid = resid.max((col - pi[j]).abs());
    }
    if resid > STATIONARY_RESIDUAL_TOL {
        return Err(SpectralError::NotErgodic(format!(
            "stationary residual {resid} exceeds tolerance"
        )));
    }
    Ok(pi)
}

/// Modulus of the second-largest eigenvalue of the truncated matrix.
///
/// The full spectrum is computed by a dense real-Schur reduction. The unit
/// eigenvalue must be simple (exactly one eigenvalue within
/// [`UNIT_EIGENVALUE_TOL`] of 1) and no other eigenvalue may reach modulus
/// `1 - `[`PERIPHERAL_TOL`].
pub fn second_eigenvalue_modulus(p_k: &FiniteTruncation) -> Result<f64, SpectralError> {
    second_eigenvalue_of(&p_k.matrix)
}

/// [`second_eigenvalue_modulus`] for an arbitrary square stochastic matrix.
pub fn second_eigenvalue_of(m: &DMatrix<f64>) -> Result<f64, SpectralError> {
    let eigs = m.complex_eigenvalues();
    let mut unit_count = 0usize;
    let mut second = 0.0_f64;
    for e in eigs.iter() {
        let dist_to_one = ((e.re - 1.0).powi(2) + e.im.powi(2)).sqrt();
        if dist_to_one <= UNIT_EIGENVALUE_TOL {
            unit_count += 1;
            continue;
        }
        second = second.max(e.norm());
    }
    if unit_count != 1 {
        return Err(SpectralError::NotErgodic(format!(
            "{unit_count} eigenvalues within {UNIT_EIGENVALUE_TOL} of 1"
        )));
    }
    if second >= 1.0 - PERIPHERAL_TOL {
        return Err(SpectralError::PeripheralSpectrum { modulus: second });
    }
    Ok(second)
}

/// Conjugated iteration matrix `D^{-1} (P_k - 1 pi_k) D` with `D = diag(V)`.
///
/// Entry `(i, j)` is `(P_k(i,j) - pi_k(j)) V(j) / V(i)`; the weighted norm of
/// `(P_k - 1 pi_k)^n` is the plain max-abs-row-sum of the n-th power of this
/// matrix.
fn conjugated_deviation(
    p: &DMatrix<f64>,
    pi: &[f64],
    v: &WeightSequence,
) -> DMatrix<f64> {
    let n = p.nrows();
    // pi_j V(j) first: both factors are entrywise accurate.
    let pi_v: Vec<f64> = (0..n).map(|j| pi[j] * v.value(j)).collect();
    let inv_v: Vec<f64> = (0..n).map(|i| 1.0 / v.value(i)).collect();
    let ratio = |j: usize, i: usize| -> f64 {
        match v {
            WeightSequence::Geometric { gamma } => gamma.powi(j as i32 - i as i32),
            WeightSequence::Tabulated { .. } => v.value(j) * inv_v[i],
        }
    };
    let mut g = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            // V(j)/V(i) enters only where P(i,j) != 0; P is banded in j - i
            // wherever V is large, so these ratios stay order one.
            let scaled = if p[(i, j)] != 0.0 {
                p[(i, j)] * ratio(j, i)
            } else {
                0.0
            };
            g[(i, j)] = scaled - pi_v[j] * inv_v[i];
        }
    }
    g
}

fn max_abs_row_sum(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut best = 0.0_f64;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += m[(i, j)].abs();
        }
        best = best.max(s);
    }
    best
}

/// Weighted norm of `I - 1 pi_k`, the `n = 0` deviation.
fn identity_deviation_norm(pi: &[f64], v: &WeightSequence) -> f64 {
    let n = pi.len();
    let pi_v: Vec<f64> = (0..n).map(|j| pi[j] * v.value(j)).collect();
    let total: f64 = pi_v.iter().sum();
    let mut best = 0.0_f64;
    for i in 0..n {
        let vi = v.value(i);
        // |1 - pi_i| V(i) + sum_{j != i} pi_j V(j), all over V(i).
        let row = (1.0 - pi[i]).abs() * vi + (total - pi_v[i]);
        best = best.max(row / vi);
    }
    best
}

/// Ergodicity constants of the truncated chain for a chosen rate.
///
/// Iterates the deviation matrix `G_k = P_k - 1 pi_k` (in the conjugated
/// basis), finds the smallest `s` with `|G_k^s| <= rho_k^s`, and returns
///
/// * `s`,
/// * `C_k = max( max(1, |G_k^1|, ..., |G_k^{s-1}|) / rho_k^{s-1}, |I - 1 pi_k| )`,
/// * the closed-form bound `C̄_k = (1 - delta + 2L) / ((1 - delta) rho_k^{s-1})`.
///
/// The first argument of the outer max covers every `n >= 1` through the
/// decomposition `n = s·m + r` (the `r = 0` case needs only coefficient 1);
/// the second covers `n = 0`, where the deviation is `I - 1 pi_k`.
pub fn ergodicity_constants(
    p_k: &FiniteTruncation,
    pi_k: &[f64],
    rho_k: f64,
    v: &WeightSequence,
    s_cap: usize,
    delta: f64,
    l: f64,
) -> Result<(usize, f64, f64), SpectralError> {
    let g = conjugated_deviation(&p_k.matrix, pi_k, v);
    let mut power = g.clone();
    let mut running_max = 1.0_f64; // |G^0| = |I| = 1
    let mut s = None;
    for n in 1..=s_cap {
        let norm = max_abs_row_sum(&power);
        if norm <= rho_k.powi(n as i32) {
            s = Some(n);
            break;
        }
        running_max = running_max.max(norm);
        power *= &g;
    }
    let Some(s) = s else {
        return Err(SpectralError::SCapExceeded {
            cap: s_cap,
            rho: rho_k,
        });
    };
    let c_k = (running_max / rho_k.powi(s as i32 - 1)).max(identity_deviation_norm(pi_k, v));
    let c_bar_k = (1.0 - delta + 2.0 * l) / ((1.0 - delta) * rho_k.powi(s as i32 - 1));
    Ok((s, c_k, c_bar_k))
}

/// Resolvent bound `H̄ = max( (L + C(1-delta)) / (vartheta (1-delta)), 1/vartheta )`.
pub fn h_k_bound(c: f64, delta: f64, l: f64, vartheta: f64) -> f64 {
    assert!(vartheta > 0.0, "vartheta must be positive");
    assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
    let first = (l + c * (1.0 - delta)) / (vartheta * (1.0 - delta));
    first.max(1.0 / vartheta)
}

/// Full per-level analysis: stationary vector, second eigenvalue, rate pick
/// and ergodicity constants.
///
/// When `rho_k` is `None` the rate defaults to
/// `max(rho_tilde, hat_alpha) + margin`, the smallest window compatible with
/// both the spectral data and the essential-spectral-radius bound.
#[allow(clippy::too_many_arguments)]
pub fn analyze(
    p_k: &FiniteTruncation,
    v: &WeightSequence,
    rho_k: Option<f64>,
    rho_margin: f64,
    hat_alpha: f64,
    s_cap: usize,
    delta: f64,
    l: f64,
) -> Result<TruncationAnalysis, SpectralError> {
    let pi_k = stationary(p_k)?;
    let rho_tilde = second_eigenvalue_modulus(p_k)?;
    let rho = rho_k.unwrap_or_else(|| rho_tilde.max(hat_alpha) + rho_margin);
    if !(rho > rho_tilde && rho < 1.0) {
        return Err(SpectralError::RateOutOfRange { rho, rho_tilde });
    }
    let (s, c_k, c_bar_k) = ergodicity_constants(p_k, &pi_k, rho, v, s_cap, delta, l)?;
    let pi_v = pi_k
        .iter()
        .enumerate()
        .map(|(j, &p)| p * v.value(j))
        .sum();
    Ok(TruncationAnalysis {
        k: p_k.k,
        pi_k,
        rho_tilde,
        rho_k: rho,
        s,
        c_k,
        c_bar_k,
        pi_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::RandomWalkSpec;
    use crate::truncation::truncate;

    fn two_state(p: f64, q: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0 - p, p, q, 1.0 - q])
    }

    fn walk_setup() -> (crate::kernels::DiscreteKernel, WeightSequence, f64, f64) {
        let spec = RandomWalkSpec::reference_instance();
        let sol = crate::models::solve_gamma_hat(&spec).unwrap();
        let cert = crate::models::drift_params(&spec, &sol).unwrap();
        let v = WeightSequence::geometric(sol.gamma_hat).unwrap();
        (spec.to_kernel().unwrap(), v, cert.delta, cert.l)
    }

    #[test]
    fn stationary_doubly_stochastic_is_uniform() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[0.2, 0.5, 0.3, 0.5, 0.3, 0.2, 0.3, 0.2, 0.5],
        );
        let pi = stationary_of(&m).unwrap();
        for x in pi {
            assert!((x - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn stationary_two_state_closed_form() {
        let (p, q) = (0.3, 0.45);
        let pi = stationary_of(&two_state(p, q)).unwrap();
        assert!((pi[0] - q / (p + q)).abs() < 1e-15);
        assert!((pi[1] - p / (p + q)).abs() < 1e-15);
    }

    #[test]
    fn stationary_rejects_reducible_chain() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            stationary_of(&m),
            Err(SpectralError::NotErgodic(_))
        ));
    }

    #[test]
    fn stationary_rejects_periodic_chain() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            stationary_of(&m),
            Err(SpectralError::NotErgodic(_))
        ));
    }

    #[test]
    fn stationary_matches_power_iteration() {
        let (kernel, _, _, _) = walk_setup();
        let t = truncate(&kernel, 18);
        let pi = stationary(&t).unwrap();
        let n = t.dim();
        // Row of P^m for large m converges to pi.
        let mut row = DMatrix::<f64>::zeros(1, n);
        row[(0, 0)] = 1.0;
        for _ in 0..400 {
            row = &row * &t.matrix;
        }
        for j in 0..n {
            assert!((row[(0, j)] - pi[j]).abs() < 1e-9, "state {j}");
        }
    }

    #[test]
    fn second_eigenvalue_two_state_analytic() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64)
        };
        for _ in 0..100 {
            let p = 0.02 + 0.96 * next();
            let q = 0.02 + 0.96 * next();
            if (1.0 - p - q).abs() >= 1.0 - 1e-6 {
                continue;
            }
            let m = two_state(p, q);
            let got = second_eigenvalue_of(&m).unwrap();
            assert!(
                (got - (1.0 - p - q).abs()).abs() < 1e-12,
                "p={p} q={q}: {got}"
            );
        }
    }

    #[test]
    fn second_eigenvalue_detects_peripheral_spectrum() {
        // Period-2 chain has eigenvalue -1.
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        match second_eigenvalue_of(&m) {
            Err(SpectralError::PeripheralSpectrum { modulus }) => {
                assert!((modulus - 1.0).abs() < 1e-12)
            }
            other => panic!("expected PeripheralSpectrum, got {other:?}"),
        }
    }

    #[test]
    fn walk_second_eigenvalues_match_reference() {
        let (kernel, _, _, _) = walk_setup();
        for (k, expect) in [(15usize, 0.6018), (25, 0.6142), (35, 0.6177), (45, 0.6192)] {
            let t = truncate(&kernel, k);
            let got = second_eigenvalue_modulus(&t).unwrap();
            assert!((got - expect).abs() < 1e-3, "k={k}: {got}");
        }
    }

    #[test]
    fn ergodicity_constants_reference_instance() {
        let (kernel, v, delta, l) = walk_setup();
        for k in [25usize, 45] {
            let t = truncate(&kernel, k);
            let pi = stationary(&t).unwrap();
            let (s, c, c_bar) =
                ergodicity_constants(&t, &pi, 0.75, &v, 10_000, delta, l).unwrap();
            assert_eq!(s, 4, "k={k}");
            assert!((c - 4.153_82).abs() < 1e-4, "k={k}: C={c}");
            assert!(c <= c_bar, "k={k}: C={c} exceeds Cbar={c_bar}");
            assert!((c_bar - 30.606_946_5).abs() < 1e-4);
        }
    }

    #[test]
    fn ergodicity_power_bound_holds_beyond_s() {
        let (kernel, v, delta, l) = walk_setup();
        let t = truncate(&kernel, 20);
        let pi = stationary(&t).unwrap();
        let (s, c, _) = ergodicity_constants(&t, &pi, 0.75, &v, 10_000, delta, l).unwrap();
        let g = conjugated_deviation(&t.matrix, &pi, &v);
        let mut power = g.clone();
        for n in 1..=(3 * s) {
            let norm = max_abs_row_sum(&power);
            assert!(
                norm <= c * 0.75f64.powi(n as i32) + 1e-12,
                "n={n}: {norm} > C rho^n"
            );
            power *= &g;
        }
        // n = 0 case.
        assert!(identity_deviation_norm(&pi, &v) <= c + 1e-12);
    }

    #[test]
    fn ergodicity_s_one_branch() {
        // A rank-one chain: P = 1 pi, so G vanishes and s = 1; C is then the
        // n = 0 deviation norm.
        let pi_target = [0.5, 0.3, 0.2];
        let mut m = DMatrix::<f64>::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = pi_target[j];
            }
        }
        let t = FiniteTruncation {
            k: 2,
            matrix: m,
            augmented_mass: vec![0.2; 3],
        };
        let v = WeightSequence::tabulated(vec![1.0, 2.0, 4.0]).unwrap();
        let pi = stationary(&t).unwrap();
        let (s, c, _) = ergodicity_constants(&t, &pi, 0.5, &v, 100, 0.5, 1.0).unwrap();
        assert_eq!(s, 1);
        assert!((c - identity_deviation_norm(&pi, &v)).abs() < 1e-14);
    }

    #[test]
    fn ergodicity_rate_too_tight_exceeds_cap() {
        let (kernel, v, delta, l) = walk_setup();
        let t = truncate(&kernel, 25);
        let pi = stationary(&t).unwrap();
        let rho_tilde = second_eigenvalue_modulus(&t).unwrap();
        let err =
            ergodicity_constants(&t, &pi, rho_tilde + 1e-6, &v, 60, delta, l).unwrap_err();
        assert!(matches!(err, SpectralError::SCapExceeded { .. }));
    }

    #[test]
    fn h_k_bound_branches() {
        // Second branch dominates when L and C vanish.
        assert!((h_k_bound(0.0, 0.5, 1e-12, 0.1) - 10.0).abs() < 1e-9);
        // Direct substitution: delta=0.5, L=1, C=3, vartheta=0.1.
        assert!((h_k_bound(3.0, 0.5, 1.0, 0.1) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_tail_entrywise_accuracy() {
        // The stationary tail decays like the subdominant root; entries
        // around 1e-33 must come out with relative (not absolute) accuracy,
        // which shows up as pi_v stabilizing across k.
        let (kernel, v, _, _) = walk_setup();
        let t45 = truncate(&kernel, 45);
        let t60 = truncate(&kernel, 60);
        let pi45 = stationary(&t45).unwrap();
        let pi60 = stationary(&t60).unwrap();
        let pv45: f64 = pi45.iter().enumerate().map(|(j, &p)| p * v.value(j)).sum();
        let pv60: f64 = pi60.iter().enumerate().map(|(j, &p)| p * v.value(j)).sum();
        assert!((pv45 - 2.486_821).abs() < 1e-5, "pi_V(45) = {pv45}");
        assert!((pv45 - pv60).abs() < 1e-9);
        assert!(pi45[45] > 0.0 && pi45[45] < 1e-30);
    }
}
