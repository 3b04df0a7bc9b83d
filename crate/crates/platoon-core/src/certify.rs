//! Numerical string-stability certificates.
//!
//! The control design rests on a chain of scalar facts: a quadratic
//! storage function per vehicle with known upper/lower coefficients, a
//! decay constant for its derivative, a small-gain value built from the
//! coupling weights, and an M-matrix argument that stitches the per-vehicle
//! bounds into a platoon-wide one. Everything here evaluates those facts
//! numerically for a concrete parameter set, so a configuration can be
//! certified (or rejected) before it is simulated.

use nalgebra::{DMatrix, Matrix4};
use serde::Serialize;

use crate::controller::{spacing_reference, velocity_reference, ControllerParams};
use crate::macroscopic::{psi_dp, psi_dv};
use crate::state::{deviation, Equilibrium, ExtendedState};
use crate::{Error, Result};

/// The scalar certificate chain for one parameter set.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IssGain {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub alpha: f64,
    pub d: f64,
    pub upsilon: f64,
    pub gamma_tilde: f64,
    pub string_stable: bool,
}

/// Outcome of the diagonal-scaling search for the comparison matrix.
#[derive(Debug, Clone, Serialize)]
pub struct DiagonalScaling {
    pub s: Vec<Vec<f64>>,
    pub d_diag: Vec<f64>,
    /// Geometric ratio of the accepted diagonal (1 means the identity).
    pub c_ratio: f64,
    /// Smallest eigenvalue of the symmetrized scaled matrix.
    pub pd_margin: f64,
}

/// Everything the certification pipeline produces, in one report.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub n: usize,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub alpha: f64,
    /// Smallest eigenvalue of the symmetric part of the displayed decay
    /// form; reported as a cross-check on `alpha` (see [`alpha_symmetric`]).
    pub alpha_symmetric: f64,
    /// Rigorous sandwich coefficients from the symmetric part of the
    /// storage form; cross-checks on `alpha_lo`/`alpha_hi` (see
    /// [`storage_bounds_symmetric`]).
    pub alpha_lo_symmetric: f64,
    pub alpha_hi_symmetric: f64,
    pub d: f64,
    pub upsilon: f64,
    pub gamma_tilde: f64,
    pub string_stable: bool,
    pub recursive_bound_factor: f64,
    pub k_tilde: Vec<f64>,
    pub s: Vec<Vec<f64>>,
    pub d_diag: Vec<f64>,
    pub c_ratio: f64,
    pub pd_margin: f64,
}

/// Storage function of one vehicle:
/// `W = (s1^2 + s2^2 + rho1^2 + rho2^2) / 2` with `s1` the spacing error
/// and `s2` the velocity-tracking error.
pub fn lyapunov_value(x: &ExtendedState, p: &ControllerParams) -> f64 {
    let s1 = x.dp - spacing_reference(x.rho1, p.dp_bar);
    let s2 = x.dv - velocity_reference(x, p);
    0.5 * (s1 * s1 + s2 * s2 + x.rho1 * x.rho1 + x.rho2 * x.rho2)
}

/// Coefficients sandwiching the storage function between multiples of the
/// squared deviation norm: `(1/2, max{1 + k_dp^2, 2 + (lambda1 - k_dp)^2} / 2)`.
///
/// These are the design's declared coefficients — the extreme diagonal
/// entries of the triangular [`storage_form`]. The extremes of the actual
/// quadratic form are governed by its symmetric part and can fall outside
/// this pair; see [`storage_bounds_symmetric`] for the rigorous values.
pub fn lyapunov_bounds(p: &ControllerParams) -> (f64, f64) {
    let k = p.k_dp;
    let l = p.weights.lambda1;
    let hi = 0.5 * (1.0 + k * k).max(2.0 + (l - k) * (l - k));
    (0.5, hi)
}

/// The displayed (upper-triangular, non-symmetric) matrix of the storage
/// quadratic form: `W = chi^T storage_form chi / 2` in deviation
/// coordinates.
pub fn storage_form(p: &ControllerParams) -> Matrix4<f64> {
    let k = p.k_dp;
    let l1 = p.weights.lambda1;
    let p1 = 2.0 * k;
    let p2 = 2.0 * (1.0 + k * k - l1 * k);
    let p3 = 2.0 * (k - l1);
    Matrix4::new(
        1.0 + k * k,
        p1,
        p2,
        p1,
        0.0,
        1.0,
        p3,
        2.0,
        0.0,
        0.0,
        2.0 + (l1 - k) * (l1 - k),
        p3,
        0.0,
        0.0,
        0.0,
        2.0,
    )
}

/// Rigorous sandwich coefficients: half the extreme eigenvalues of the
/// symmetric part of [`storage_form`].
pub fn storage_bounds_symmetric(p: &ControllerParams) -> (f64, f64) {
    let q = storage_form(p);
    let sym = 0.5 * (q + q.transpose());
    let ev = sym.symmetric_eigenvalues();
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0.5 * lo, 0.5 * hi)
}

/// Decay constant of the storage derivative, taken as the smallest
/// diagonal entry of the displayed decay form:
/// `min{k_dp(1 + k_dp k_dv), k_dv, k_dp + lambda1 + k_dv(lambda1 - k_dp)^2,
/// lambda2 + k_dv}`.
pub fn alpha_decay(p: &ControllerParams) -> f64 {
    let (k1, k2) = (p.k_dp, p.k_dv);
    let (l1, l2) = (p.weights.lambda1, p.weights.lambda2);
    let q1 = k1 * (1.0 + k1 * k2);
    let q4 = k1 + l1 + k2 * (l1 - k1) * (l1 - k1);
    q1.min(k2).min(q4).min(l2 + k2)
}

/// The displayed (upper-triangular, non-symmetric) matrix of the decay
/// quadratic form, in the coordinates `(s1, s2, rho1, rho2)`-adjacent
/// deviation basis.
pub fn decay_form(p: &ControllerParams) -> Matrix4<f64> {
    let (k1, k2) = (p.k_dp, p.k_dv);
    let (l1, l2) = (p.weights.lambda1, p.weights.lambda2);
    let q1 = k1 * (1.0 + k1 * k2);
    let q2 = 2.0 * k1 * (1.0 + k2 * (k1 - l1));
    let q3 = 2.0 * k2 * (k1 - l1);
    let q4 = k1 + l1 + k2 * (l1 - k1) * (l1 - k1);
    let q5 = 1.0 - 2.0 * k2 * (k1 - l1);
    Matrix4::new(
        q1,
        2.0 * k1 * k2,
        q2,
        2.0 * k1 * k2,
        0.0,
        k2,
        q3,
        2.0 * k2,
        0.0,
        0.0,
        q4,
        q5,
        0.0,
        0.0,
        0.0,
        l2 + k2,
    )
}

/// Smallest eigenvalue of the symmetric part of [`decay_form`].
///
/// For a non-symmetric matrix the quadratic form is governed by the
/// symmetric part, so this value — not the diagonal minimum used by
/// [`alpha_decay`] — is the rigorous decay coefficient of the displayed
/// form. The certificate reports both; they need not agree.
pub fn alpha_symmetric(p: &ControllerParams) -> f64 {
    let q = decay_form(p);
    let sym = 0.5 * (q + q.transpose());
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// The small-gain chain: coupling magnitude `d = a*gamma_dp + b*gamma_dv`
/// and gain value `gamma_tilde = sqrt(alpha_hi/alpha_lo) * d / (alpha *
/// upsilon)`. The configuration is declared string stable when the gain is
/// below one.
pub fn iss_gain(p: &ControllerParams) -> Result<IssGain> {
    if !(p.upsilon > 0.0 && p.upsilon < 1.0) {
        return Err(Error::InvalidParameter {
            name: "upsilon",
            reason: format!("{} is outside (0, 1)", p.upsilon),
        });
    }
    let (alpha_lo, alpha_hi) = lyapunov_bounds(p);
    let alpha = alpha_decay(p);
    let d = p.weights.a * p.weights.gamma_dp + p.weights.b * p.weights.gamma_dv;
    let gamma_tilde = (alpha_hi / alpha_lo).sqrt() * d / (alpha * p.upsilon);
    Ok(IssGain {
        alpha_lo,
        alpha_hi,
        alpha,
        d,
        upsilon: p.upsilon,
        gamma_tilde,
        string_stable: gamma_tilde < 1.0,
    })
}

/// Storage-function derivative along the closed loop, given the coupling
/// pair the vehicle received:
/// `-k_dp s1^2 - k_dv s2^2 - lambda1 rho1^2 - lambda2 rho2^2 + rho1 rho2
///  + rho2 (a psi_dp_prev + b psi_dv_prev)`.
///
/// Valid on unsaturated segments only; the caller is responsible for that.
pub fn lyapunov_derivative(
    x: &ExtendedState,
    psi_dp_prev: f64,
    psi_dv_prev: f64,
    p: &ControllerParams,
) -> f64 {
    let w = &p.weights;
    let s1 = x.dp - spacing_reference(x.rho1, p.dp_bar);
    let s2 = x.dv - velocity_reference(x, p);
    -p.k_dp * s1 * s1 - p.k_dv * s2 * s2 - w.lambda1 * x.rho1 * x.rho1 - w.lambda2 * x.rho2 * x.rho2
        + x.rho1 * x.rho2
        + x.rho2 * (w.a * psi_dp_prev + w.b * psi_dv_prev)
}

/// Result of probing one point against the regional decay inequality.
#[derive(Debug, Clone, Copy)]
pub struct RegionProbe {
    /// Whether the point's deviation norm clears the regional threshold
    /// `(d / (alpha*upsilon)) * max_j |pred_j|`.
    pub in_region: bool,
    /// Whether the decay inequality held; vacuously true outside the region.
    pub holds: bool,
    pub wdot: f64,
    pub decay_bound: f64,
}

/// Check the regional decay inequality at one state, with the coupling
/// pair computed from the actual predecessor deviations: inside the region
/// the storage derivative must fall below `-(1-upsilon)*alpha*|chi|^2`.
pub fn iss_region_check(
    x: &ExtendedState,
    predecessors: &[[f64; 4]],
    p: &ControllerParams,
) -> Result<RegionProbe> {
    let gain = iss_gain(p)?;
    let eq = Equilibrium::for_spacing(p.dp_bar);
    let chi = deviation(x, &eq);
    let norm = |v: &[f64; 4]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let chi_norm = norm(&chi);
    let max_pred = predecessors.iter().map(norm).fold(0.0, f64::max);
    let threshold = gain.d / (gain.alpha * p.upsilon) * max_pred;
    let in_region = chi_norm >= threshold;

    // Reconstruct the coupling pair the vehicle would receive from these
    // predecessors (their deviations shifted back to raw pair coordinates).
    let dp: Vec<f64> = predecessors.iter().map(|c| c[0] - p.dp_bar).collect();
    let dv: Vec<f64> = predecessors.iter().map(|c| c[1]).collect();
    let last = predecessors.len() as isize - 1;
    let pdp = psi_dp(&dp, p.dp_bar, &p.weights, last)?;
    let pdv = psi_dv(&dv, &p.weights, last)?;

    let wdot = lyapunov_derivative(x, pdp, pdv, p);
    let decay_bound = -(1.0 - p.upsilon) * gain.alpha * chi_norm * chi_norm;
    let holds = !in_region || wdot <= decay_bound + 1e-8;
    Ok(RegionProbe {
        in_region,
        holds,
        wdot,
        decay_bound,
    })
}

/// Uniform trajectory bound from the small-gain recursion: `beta0 / (1 -
/// gamma_tilde)`. Defined for gains in `[0, 1)`; anything else cannot be
/// certified.
pub fn recursive_bound(gamma_tilde: f64, beta0: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma_tilde) {
        return Err(Error::NotStringStable { gamma_tilde });
    }
    Ok(beta0 / (1.0 - gamma_tilde))
}

/// Per-index coupling coefficients of the comparison system:
/// `k_tilde[i-1] = (2 / sqrt(i)) * max{a*gamma_dp, b*gamma_dv}` for
/// `i = 1..=n`.
pub fn k_tilde_coefficients(n: usize, p: &ControllerParams) -> Vec<f64> {
    let kmax = (p.weights.a * p.weights.gamma_dp).max(p.weights.b * p.weights.gamma_dv);
    (1..=n).map(|i| 2.0 / (i as f64).sqrt() * kmax).collect()
}

/// Leading principal minors of a square matrix (index k holds the
/// determinant of the top-left (k+1)x(k+1) block).
pub fn leading_principal_minors(m: &DMatrix<f64>) -> Vec<f64> {
    (1..=m.nrows())
        .map(|k| m.view((0, 0), (k, k)).clone_owned().determinant())
        .collect()
}

/// Assemble the comparison matrix and search for a positive diagonal
/// scaling that makes its symmetrized product positive definite.
///
/// The matrix is lower triangular: `alpha` on the diagonal and row `r`
/// (the vehicle with `r` certified predecessors) carrying `-k_tilde[r]`
/// against every earlier index. The scaling is geometric, `d_i = c *
/// d_{i+1}` with the last entry 1, and `c` is scanned over a logarithmic
/// grid on `[1, 1e3]` (121 points); the first grid value whose margin is
/// positive wins.
pub fn build_s_and_find_d(n: usize, alpha: f64, k_tilde: &[f64]) -> Result<DiagonalScaling> {
    if n == 0 || k_tilde.len() < n {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("need n >= 1 and {n} coefficients, got {}", k_tilde.len()),
        });
    }
    let mut s = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        s[(r, r)] = alpha;
        for c in 0..r {
            s[(r, c)] = -k_tilde[r];
        }
    }

    let margin_for = |c: f64| -> f64 {
        let d: Vec<f64> = (0..n).map(|i| c.powi((n - 1 - i) as i32)).collect();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = 0.5 * (d[i] * s[(i, j)] + d[j] * s[(j, i)]);
            }
        }
        m.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    };

    let mut best = f64::NEG_INFINITY;
    for k in 0..=120 {
        let c = 10f64.powf(3.0 * k as f64 / 120.0);
        let margin = margin_for(c);
        if margin > 0.0 {
            let d_diag: Vec<f64> = (0..n).map(|i| c.powi((n - 1 - i) as i32)).collect();
            let s_rows = (0..n)
                .map(|r| (0..n).map(|c| s[(r, c)]).collect())
                .collect();
            return Ok(DiagonalScaling {
                s: s_rows,
                d_diag,
                c_ratio: c,
                pd_margin: margin,
            });
        }
        best = best.max(margin);
    }
    Err(Error::ScalingSearchFailed { best_margin: best })
}

/// Run the whole certification pipeline for a parameter set and a
/// comparison-system size.
pub fn certificate(p: &ControllerParams, n: usize) -> Result<Certificate> {
    p.validate()?;
    let gain = iss_gain(p)?;
    let k_tilde = k_tilde_coefficients(n, p);
    let scaling = build_s_and_find_d(n, gain.alpha, &k_tilde)?;
    let recursive_bound_factor = recursive_bound(gain.gamma_tilde, 1.0)?;
    let (alpha_lo_symmetric, alpha_hi_symmetric) = storage_bounds_symmetric(p);
    Ok(Certificate {
        n,
        alpha_lo: gain.alpha_lo,
        alpha_hi: gain.alpha_hi,
        alpha: gain.alpha,
        alpha_symmetric: alpha_symmetric(p),
        alpha_lo_symmetric,
        alpha_hi_symmetric,
        d: gain.d,
        upsilon: gain.upsilon,
        gamma_tilde: gain.gamma_tilde,
        string_stable: gain.string_stable,
        recursive_bound_factor,
        k_tilde,
        s: scaling.s,
        d_diag: scaling.d_diag,
        c_ratio: scaling.c_ratio,
        pd_margin: scaling.pd_margin,
    })
}
