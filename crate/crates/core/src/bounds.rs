//! Explicit constants and certified bounds.
//!
//! Everything here is plain arithmetic on the drift constants `(delta, L)`,
//! an essential-spectral-radius bound, and the per-truncation spectral data
//! `(rho_k, s, C_k)`. The chain of definitions:
//!
//! ```text
//! A     = 1 + L/(1-delta)
//! K     = max(2(delta+L), 1)
//! alpha = max(r_ess bound, delta)            (written hat_alpha)
//! B     = L/(1-alpha)
//! n1    = floor(ln 2 / ln(r/alpha)) + 1
//! n2    = floor(ln(8B(B+3) r^{-n1} H) / ln(r/alpha)) + 1
//! eps1  = r^{n1+n2} / (8B (H B + (1-r)^{-1}))
//! c     = 4(B+1)/(r^{n1}(1-r)) + 1/(2 eps1)
//! ```
//!
//! yielding `‖P^n − π(·)1‖ ≤ c·r^{n+1}` once the truncation is close enough
//! (`‖P̂_k − P‖ ≤ eps1`, certified through `V(k) ≥ K/eps1`), plus the two
//! total-variation bounds on `‖π̂_k − π‖`: the direct one in `k` and the
//! rate-based one in the truncation level `n`.

use serde::Serialize;
use thiserror::Error;

use crate::kernels::{DriftCertificate, WeightSequence};
use crate::spectral::TruncationAnalysis;

/// Errors from the bound formulas.
#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    /// `r` must exceed `hat_alpha` (and every window condition of the form
    /// `lo + vartheta < r < 1 - vartheta` must hold).
    #[error("invalid spectral window: {0}")]
    InvalidWindow(String),
    /// The rate-based TV bound only holds for levels `n >= n_K`.
    #[error("level {n} is below n_K = {n_k}")]
    BelowNK { n: usize, n_k: usize },
    /// No level up to the cap reaches the requested accuracy.
    #[error("no level up to {cap} reaches epsilon = {eps}")]
    NotReached { eps: f64, cap: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Drift-derived constants shared by every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoreConstants {
    pub delta: f64,
    pub l: f64,
    /// `A = 1 + L/(1-delta)`, a bound on `sup_n |P^n|`.
    pub a: f64,
    /// `K = max(2(delta+L), 1)`: `‖P̂_k − P‖ ≤ K/V(k)`.
    pub k_const: f64,
    /// `max(r_ess bound, delta)`.
    pub hat_alpha: f64,
    /// `B = L/(1-hat_alpha)`, the dual Doeblin-Fortet constant.
    pub b: f64,
}

/// Assembles the core constants from a verified drift certificate and a bound
/// on the essential spectral radius.
pub fn core_constants(drift: &DriftCertificate, r_ess_bound: f64) -> CoreConstants {
    assert!(r_ess_bound < 1.0, "essential spectral radius bound must be < 1");
    let delta = drift.delta;
    let l = drift.l;
    let hat_alpha = r_ess_bound.max(delta);
    CoreConstants {
        delta,
        l,
        a: 1.0 + l / (1.0 - delta),
        k_const: (2.0 * (delta + l)).max(1.0),
        hat_alpha,
        b: l / (1.0 - hat_alpha),
    }
}

/// Essential-spectral-radius bound from a drift/minorization pair:
/// `(delta nu(1) + tau) / (nu(1) + tau)` with `tau = max(0, L - nu(V))`.
///
/// Equal to `delta` when `nu(V) >= L` (in particular for an atom).
pub fn ress_bound_drift_minorization(delta: f64, l: f64, nu_mass: f64, nu_v: f64) -> f64 {
    assert!(nu_mass > 0.0, "minorization mass must be positive");
    assert!(nu_v >= nu_mass, "nu(V) >= nu(1) since V >= 1");
    assert!(delta > 0.0 && delta < 1.0);
    let tau = (l - nu_v).max(0.0);
    (delta * nu_mass + tau) / (nu_mass + tau)
}

/// The N-iterate variant: the same ratio built from the parameters of `P^N`,
/// raised to the power `1/N`.
pub fn ress_bound_iterate(delta_n: f64, l_n: f64, nu_mass: f64, nu_v: f64, n: usize) -> f64 {
    assert!(n >= 1);
    ress_bound_drift_minorization(delta_n, l_n, nu_mass, nu_v).powf(1.0 / n as f64)
}

/// Upper bound for the resolvent constant `H` from a known geometric rate and
/// constant `(rho, C)`:
/// `min( piV/vartheta + C/(r-rho), (piV + C)/vartheta )`.
///
/// `piV` may be the exact stationary weighted mass or its drift bound
/// `L/(1-delta)`.
pub fn remark32_h_bound(
    rho: f64,
    c: f64,
    pi_v_bound: f64,
    r: f64,
    vartheta: f64,
) -> Result<f64, BoundsError> {
    // Non-strict comparisons: at vartheta = r - rho the two branches coincide
    // and the bound is still finite.
    if !(rho + vartheta <= r && r <= 1.0 - vartheta) {
        return Err(BoundsError::InvalidWindow(format!(
            "need rho + vartheta <= r <= 1 - vartheta, got rho={rho}, vartheta={vartheta}, r={r}"
        )));
    }
    let first = pi_v_bound / vartheta + c / (r - rho);
    let second = (pi_v_bound + c) / vartheta;
    Ok(first.min(second))
}

/// The perturbation constants for one `(r, vartheta, H)` choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlConstants {
    pub r: f64,
    pub vartheta: f64,
    pub h: f64,
    pub n1: usize,
    pub n2: usize,
    pub eps1: f64,
    /// Only populated when the no-prior-rate variant is requested.
    pub eta: Option<f64>,
    pub eps2: Option<f64>,
    pub eps0: Option<f64>,
}

/// Computes `n1`, `n2` and `eps1` (and optionally `eta`, `eps2`,
/// `eps0 = min(eps1, eps2)` for the variant that needs no prior rate).
pub fn kl_constants(
    core: &CoreConstants,
    r: f64,
    vartheta: f64,
    h: f64,
    with_eps0: bool,
) -> Result<KlConstants, BoundsError> {
    if !(r > core.hat_alpha && r < 1.0) {
        return Err(BoundsError::InvalidWindow(format!(
            "need hat_alpha < r < 1, got r = {r} with hat_alpha = {}",
            core.hat_alpha
        )));
    }
    let vartheta_positive = vartheta > 0.0;
    if !vartheta_positive {
        return Err(BoundsError::InvalidParameter("vartheta must be positive".into()));
    }
    if h * vartheta < 1.0 - 1e-12 {
        return Err(BoundsError::InvalidParameter(format!(
            "resolvent bound H = {h} is below 1/vartheta = {}",
            1.0 / vartheta
        )));
    }
    let b = core.b;
    let gap = (r / core.hat_alpha).ln();
    let n1 = (2.0f64.ln() / gap).floor() as usize + 1;
    let n2 = ((8.0 * b * (b + 3.0) * r.powi(-(n1 as i32)) * h).ln() / gap).floor() as usize + 1;
    let eps1 = r.powi((n1 + n2) as i32) / (8.0 * b * (h * b + 1.0 / (1.0 - r)));
    let (eta, eps2, eps0) = if with_eps0 {
        let eta = 1.0 - r.ln() / core.hat_alpha.ln();
        let base =
            r.powi(n1 as i32) / (4.0 * b * (h * (2.0 * b + 3.0) + 2.0 * (1.0 + b) + 1.0 / (1.0 - r)));
        let eps2 = base.powf(1.0 / eta);
        (Some(eta), Some(eps2), Some(eps1.min(eps2)))
    } else {
        (None, None, None)
    };
    Ok(KlConstants {
        r,
        vartheta,
        h,
        n1,
        n2,
        eps1,
        eta,
        eps2,
        eps0,
    })
}

/// Rate constant `c = 4(B+1)/(r^{n1}(1-r)) + 1/(2 eps1)` attached to the
/// certified rate `r`.
pub fn rate_constant(core: &CoreConstants, r: f64, n1: usize, eps1: f64) -> f64 {
    assert!(eps1 > 0.0 && r > 0.0 && r < 1.0);
    4.0 * (core.b + 1.0) / (r.powi(n1 as i32) * (1.0 - r)) + 0.5 / eps1
}

/// Direct total-variation bound at truncation level `k`:
///
/// ```text
/// L/(1-delta) * (1 + 2 K C_k / rho_k + A K ln V(k) / ln(rho_k^{-1})) / V(k)
/// ```
pub fn tv_bound_direct(
    k: usize,
    analysis: &TruncationAnalysis,
    core: &CoreConstants,
    v: &WeightSequence,
) -> f64 {
    let ln_v = v.ln_value(k);
    let log_rate = (1.0 / analysis.rho_k).ln();
    core.l / (1.0 - core.delta)
        * (1.0 + 2.0 * core.k_const * analysis.c_k / analysis.rho_k
            + core.a * core.k_const * ln_v / log_rate)
        / v.value(k)
}

/// Smallest level with `V(n) >= K`; the rate-based TV bound needs `n` at
/// least this large.
pub fn n_threshold(core: &CoreConstants, v: &WeightSequence) -> usize {
    v.first_index_reaching(core.k_const)
        .expect("weight sequence never reaches K")
        .max(1)
}

/// Rate-based total-variation bound at truncation level `n >= n_K`:
///
/// ```text
/// L K/(1-delta) * (2 c_k + A ln V(n) / ln(r_k^{-1})) / V(n)
/// ```
pub fn tv_bound_from_rate(
    n: usize,
    c_k: f64,
    r_k: f64,
    core: &CoreConstants,
    v: &WeightSequence,
) -> Result<f64, BoundsError> {
    let n_k = n_threshold(core, v);
    if n < n_k {
        return Err(BoundsError::BelowNK { n, n_k });
    }
    Ok(tv_from_rate_unchecked(n as f64, c_k, r_k, core, v))
}

fn tv_from_rate_unchecked(
    n: f64,
    c_k: f64,
    r_k: f64,
    core: &CoreConstants,
    v: &WeightSequence,
) -> f64 {
    let gamma_ln = match v {
        WeightSequence::Geometric { gamma } => gamma.ln(),
        WeightSequence::Tabulated { .. } => {
            // Real-valued levels only arise for geometric weights; integer
            // levels work for both.
            return core.l * core.k_const / (1.0 - core.delta)
                * (2.0 * c_k + core.a * v.ln_value(n as usize) / (1.0 / r_k).ln())
                / v.value(n as usize);
        }
    };
    let ln_v = n * gamma_ln;
    core.l * core.k_const / (1.0 - core.delta) * (2.0 * c_k + core.a * ln_v / (1.0 / r_k).ln())
        / ln_v.exp()
}

/// General perturbation-style total-variation bound:
/// `first_term + L/(1-delta) * (2 C/rate + A |ln Delta| / ln(rate^{-1})) * Delta`.
///
/// `direction` records whether the pair `(rate, C)` belongs to the truncated
/// operator (`Backward`, bounding `‖π̂_k − π‖` from its ergodicity) or to the
/// full kernel (`Forward`, using a known rate for `P`); the arithmetic is the
/// same either way.
pub fn tv_bound_general(
    direction: Direction,
    delta_norm: f64,
    rate: f64,
    c_const: f64,
    core: &CoreConstants,
    first_term: f64,
) -> f64 {
    let _ = direction;
    assert!(delta_norm > 0.0 && delta_norm <= 1.0, "Delta must lie in (0, 1]");
    assert!(rate > 0.0 && rate < 1.0);
    assert!(c_const > 0.0);
    first_term
        + core.l / (1.0 - core.delta)
            * (2.0 * c_const / rate + core.a * delta_norm.ln().abs() / (1.0 / rate).ln())
            * delta_norm
}

/// Which operator the `(rate, C)` pair describes in [`tv_bound_general`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// `(rho, C)` is a rate for the full kernel `P`.
    Forward,
    /// `(rho_k, C_k)` is a rate for the truncated operator.
    Backward,
}

/// Iterate bound `‖P^n − π(·)1‖ ≤ c_k · r_k^{n+1}`.
pub fn pn_bound(n: usize, c_k: f64, r_k: f64) -> f64 {
    c_k * r_k.powi(n as i32 + 1)
}

/// How [`n_for_epsilon`] turns the real-valued crossing point into an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LevelRounding {
    /// Smallest integer level whose bound is at most epsilon; the returned
    /// level is guaranteed to satisfy the bound.
    Guaranteed,
    /// Nearest integer to the real solution of `bound(n) = epsilon`. The
    /// bound at the returned level can overshoot epsilon by a factor up to
    /// the per-level ratio; kept for reproducing published level tables.
    Nearest,
}

/// Smallest truncation level `n >= n_K` with rate-based TV bound at most
/// `eps` (or, under [`LevelRounding::Nearest`], the rounded real crossing).
pub fn n_for_epsilon(
    eps: f64,
    c_k: f64,
    r_k: f64,
    core: &CoreConstants,
    v: &WeightSequence,
    cap: usize,
    rounding: LevelRounding,
) -> Result<usize, BoundsError> {
    let eps_positive = eps > 0.0;
    if !eps_positive {
        return Err(BoundsError::InvalidParameter("epsilon must be positive".into()));
    }
    let n_k = n_threshold(core, v);
    match rounding {
        LevelRounding::Guaranteed => {
            // The bound decreases eventually (V grows faster than ln V); a
            // forward scan from n_K finds the first feasible level.
            for n in n_k..=cap {
                if tv_from_rate_unchecked(n as f64, c_k, r_k, core, v) <= eps {
                    return Ok(n);
                }
            }
            Err(BoundsError::NotReached { eps, cap })
        }
        LevelRounding::Nearest => {
            let f = |x: f64| tv_from_rate_unchecked(x, c_k, r_k, core, v) - eps;
            let mut lo = n_k as f64;
            if f(lo) <= 0.0 {
                return Ok(n_k);
            }
            let mut hi = lo + 1.0;
            while f(hi) > 0.0 {
                hi += (hi - lo).max(1.0);
                if hi > cap as f64 {
                    return Err(BoundsError::NotReached { eps, cap });
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok((0.5 * (lo + hi)).round() as usize)
        }
    }
}

/// Smallest level `k1` with `V(k1) >= K / eps1`; the certification gate
/// accepts a truncation level `k` once `k >= k1`.
///
/// For geometric weights the logarithmic closed form
/// `floor(ln(K/eps1)/ln gamma) + 1` is also evaluated and reconciled with the
/// direct minimum (the two differ only when `K/eps1` is an exact power of
/// `gamma`, where the closed form overshoots by one).
pub fn k1_threshold(eps1: f64, core: &CoreConstants, v: &WeightSequence) -> usize {
    assert!(eps1 > 0.0);
    let target = core.k_const / eps1;
    let direct = v
        .first_index_reaching(target)
        .expect("weight sequence never reaches K/eps1");
    if let Some(gamma) = v.geometric_base() {
        let closed = (target.ln() / gamma.ln()).floor() as usize + 1;
        debug_assert!(
            closed == direct || (closed == direct + 1 && v.value(direct) >= target),
            "closed-form k1 = {closed} vs direct {direct}"
        );
    }
    direct
}

/// One named constant with the formula it came from.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub name: String,
    pub value: f64,
    pub formula: String,
}

/// The certified output at an accepted truncation level.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub k: usize,
    pub rho_tilde: f64,
    pub rho_k: f64,
    pub s: usize,
    pub c_big_k: f64,
    pub vartheta: f64,
    pub r_k: f64,
    pub k1: usize,
    pub eps1: f64,
    /// Rate constant attached to `r_k`.
    pub c_k: f64,
    /// Direct TV bound at level `k`.
    pub tv_direct: f64,
    /// Rate-based TV bound evaluated at `n = k`.
    pub tv_from_rate_at_k: f64,
    /// Smallest level with `V(n) >= K`.
    pub n_k: usize,
    pub core: CoreConstants,
    pub weight: WeightSequence,
    pub provenance: Vec<Provenance>,
}

impl BoundReport {
    /// Rate-based TV bound at an arbitrary level `n >= n_K`.
    pub fn tv_from_rate(&self, n: usize) -> Result<f64, BoundsError> {
        tv_bound_from_rate(n, self.c_k, self.r_k, &self.core, &self.weight)
    }

    /// Iterate bound at time `n`.
    pub fn pn_bound(&self, n: usize) -> f64 {
        pn_bound(n, self.c_k, self.r_k)
    }

    /// Smallest level guaranteeing accuracy `eps`.
    pub fn n_for_epsilon(&self, eps: f64, cap: usize) -> Result<usize, BoundsError> {
        n_for_epsilon(
            eps,
            self.c_k,
            self.r_k,
            &self.core,
            &self.weight,
            cap,
            LevelRounding::Guaranteed,
        )
    }

    /// CSV header matching [`BoundReport::csv_row`].
    pub fn csv_header() -> &'static str {
        "k,rho_tilde,rho_k,s,C_k,vartheta,r_k,k1,eps1,c_k,tv_direct,tv_from_rate"
    }

    /// One CSV row with full float precision (shortest round-trip formatting).
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.k,
            self.rho_tilde,
            self.rho_k,
            self.s,
            self.c_big_k,
            self.vartheta,
            self.r_k,
            self.k1,
            self.eps1,
            self.c_k,
            self.tv_direct,
            self.tv_from_rate_at_k
        )
    }

    /// Human-readable provenance log.
    pub fn provenance_log(&self) -> String {
        let mut out = String::new();
        for p in &self.provenance {
            out.push_str(&format!("{:12} = {:<24} [{}]\n", p.name, p.value, p.formula));
        }
        out
    }
}
