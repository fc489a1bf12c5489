//! Instability and blow-up analytics over completed trajectories: the Riccati
//! comparison solution, exponential growth-rate fitting, and the smallness
//! audit for the nonlocal terms at the peak.

use crate::error::{Error, Result};
use crate::field::fmt;

/// One time sample of a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub e: f64,
    pub f: f64,
    pub h1_v: f64,
    pub linf_vx_plus: f64,
    pub linf_vx_minus: f64,
    pub v0: f64,
    pub w0_plus: f64,
    pub w0_minus: f64,
    pub a: f64,
    pub qs_min: f64,
    pub pq0: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "t,E,F,H1_v,Linf_vx_plus,Linf_vx_minus,V0,W0_plus,W0_minus,a,qs_min,PQ0";

    pub fn csv_row(&self) -> String {
        [
            self.t,
            self.e,
            self.f,
            self.h1_v,
            self.linf_vx_plus,
            self.linf_vx_minus,
            self.v0,
            self.w0_plus,
            self.w0_minus,
            self.a,
            self.qs_min,
            self.pq0,
        ]
        .map(fmt)
        .join(",")
    }
}

/// Comparison equation `dy/dt = -a (y - 1)² + b` with `a = ½(1 - 12ε)` and
/// `b = ½ + 20ε`, bounding the peak slope `W⁰₊` from above.
#[derive(Debug, Clone, Copy)]
pub struct RiccatiComparison {
    pub eps: f64,
    pub a_coef: f64,
    pub b_coef: f64,
    pub y0: f64,
}

impl RiccatiComparison {
    pub fn new(eps: f64, y0: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0 / 12.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("need 0 < eps < 1/12 so the Riccati coefficient stays positive, got {eps}"),
            });
        }
        Ok(Self { eps, a_coef: 0.5 * (1.0 - 12.0 * eps), b_coef: 0.5 + 20.0 * eps, y0 })
    }

    pub fn rhs(&self, y: f64) -> f64 {
        -self.a_coef * (y - 1.0) * (y - 1.0) + self.b_coef
    }

    /// Blow-up threshold `1 - sqrt((1 + 40ε)/(1 - 12ε))`: initial values below
    /// it reach `-∞` in finite time.
    pub fn threshold(&self) -> f64 {
        1.0 - (self.b_coef / self.a_coef).sqrt()
    }
}

/// Exact blow-up time of the comparison equation, `None` when the solution
/// exists globally (initial value at or above the threshold).
pub fn riccati_blowup_time(r: &RiccatiComparison) -> Option<f64> {
    let m = (r.b_coef / r.a_coef).sqrt();
    let z0 = r.y0 - 1.0;
    if z0 >= -m {
        return None;
    }
    // z(t) = m (1 + r(t)) / (1 - r(t)) with r(t) = r0 e^{-2amt}; the pole sits
    // where r reaches 1.
    let r0 = (z0 - m) / (z0 + m);
    Some(r0.ln() / (2.0 * r.a_coef * m))
}

#[derive(Debug, Clone, Copy)]
pub struct BlowupConsistency {
    pub t_num: Option<f64>,
    pub t_riccati: Option<f64>,
    pub consistent: bool,
}

/// Comparison-principle check: the numerical breakdown must not come later
/// than the Riccati pole (within `rel_tol` slack). `t_reached` is the last
/// accepted solver time, used to detect a survived run outliving the bound.
pub fn check_blowup_consistency(
    t_num: Option<f64>,
    t_reached: f64,
    r: &RiccatiComparison,
    rel_tol: f64,
) -> BlowupConsistency {
    let t_riccati = riccati_blowup_time(r);
    let consistent = match (t_num, t_riccati) {
        (Some(tn), Some(tr)) => tn <= tr * (1.0 + rel_tol),
        (None, Some(tr)) => t_reached <= tr * (1.0 + rel_tol),
        // no comparison pole: any behaviour is admissible
        (_, None) => true,
    };
    BlowupConsistency { t_num, t_riccati, consistent }
}

/// Least-squares slope of `log |V⁰ + W⁰₊|` against `t` over the records whose
/// magnitude lies in `[window.0, window.1]`. Returns `(rate, r²)`; a perfect
/// fit (including a constant signal) has `r² = 1`, fewer than two usable
/// points give `(0, 0)`.
pub fn fit_exponential_rate(records: &[DiagnosticsRecord], window: (f64, f64)) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| {
            let y = (r.v0 + r.w0_plus).abs();
            (y >= window.0 && y <= window.1).then(|| (r.t, y.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return (0.0, 0.0);
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for (t, y) in &pts {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let rate = sty / stt;
    let ss_res = syy - rate * sty;
    let r2 = if syy <= f64::EPSILON * n { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    (rate, r2)
}

/// `t₀ = log(2 / (C ε²))`, the time by which the perturbation gradient must
/// have left the unit ball.
pub fn instability_time_estimate(eps: f64, c_const: f64) -> f64 {
    (2.0 / (c_const * eps * eps)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqAudit {
    Pass,
    Fail,
    /// The smallness hypothesis `‖v₀‖_{H¹} < ε⁴` does not hold, so the bound
    /// is not claimed for this run.
    Skipped,
}

/// Measured smallness bound for the nonlocal terms at the peak:
/// `|P[v](0) + Q[v](0)| <= C₀ ε² (1 + ‖u₀ₓ‖_∞^{3/2} + ε ‖u₀ₓ‖_∞²)`,
/// with `C₀` calibrated once and frozen in the scenario configuration.
pub fn audit_pq_bound(
    pq0: f64,
    eps: f64,
    u0x_linf: f64,
    c0: f64,
    v0_h1: f64,
) -> PqAudit {
    if !(v0_h1 < eps.powi(4)) {
        return PqAudit::Skipped;
    }
    let bound = c0 * eps * eps * (1.0 + u0x_linf.powf(1.5) + eps * u0x_linf * u0x_linf);
    if pq0.abs() <= bound {
        PqAudit::Pass
    } else {
        PqAudit::Fail
    }
}
