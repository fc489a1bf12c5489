//! The nonlinear solver: per-node evolution of the characteristic position
//! `q`, the perturbation values `V`, slopes `W` and the Jacobian `q_s`,
//! coupled to the peak-limit scalars `V⁰`, `W⁰±` and the modulation position
//! `a(t)`.
//!
//! The peak scalars are independent ODE states, not extrapolations from the
//! innermost nodes: the slope equation is singular at the peak, and the
//! one-sided limits obey their own closed equations. Extrapolation is kept as
//! a consistency diagnostic only. Likewise `q_s` is evolved as its own ODE so
//! that quadrature weights never amplify node-spacing noise; the finite
//! difference `Δq/Δs` is a cross-check.
//!
//! All nonlocal terms are evaluated in label coordinates with the Jacobian
//! folded into the amplitudes, which keeps every right-hand-side evaluation
//! O(N) because `q` is monotone.

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::field::PeakedFunction;
use crate::kernel::{phi, phi_x, PeakSamples, SplitGrid};

/// Breakdown thresholds. A `jacobian_min <= 0` disables the Jacobian check.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    pub slope_blowup: f64,
    pub jacobian_min: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { slope_blowup: 1e6, jacobian_min: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakdownKind {
    /// A slope field or peak slope limit left the configured bound (or the
    /// state stopped being finite, which only the slope dynamics can cause).
    SlopeBlowup,
    /// The label-to-position map degenerated: `min q_s` under the threshold
    /// or characteristics crossing numerically.
    JacobianCollapse,
}

#[derive(Debug, Clone)]
pub struct Breakdown {
    pub kind: BreakdownKind,
    /// Midpoint of the last accepted and the first rejected step.
    pub t: f64,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub enum StepOutcome {
    Ok,
    Breakdown(Breakdown),
}

/// Solver state along the characteristics.
#[derive(Debug, Clone)]
pub struct CharacteristicEnsemble {
    /// Lagrangian labels, fixed for the lifetime of the ensemble.
    s: Vec<f64>,
    n_neg: usize,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub qs: Vec<f64>,
    pub v0: f64,
    pub w0_plus: f64,
    pub w0_minus: f64,
    pub a: f64,
    pub t: f64,
}

/// Time derivative of every ensemble field.
#[derive(Debug, Clone)]
pub struct Derivs {
    pub dq: Vec<f64>,
    pub dv: Vec<f64>,
    pub dw: Vec<f64>,
    pub dqs: Vec<f64>,
    pub dv0: f64,
    pub dw0_plus: f64,
    pub dw0_minus: f64,
    pub da: f64,
}

/// Nonlocal ingredients of the vector field, all evaluated in label
/// coordinates: the peak-anchored H¹ primitive `I(s) = ∫_0^s (V² + W²) q_s ds'`
/// plus `Q[v]` and `P[v]` pulled back to the nodes and to the peak.
#[derive(Debug, Clone)]
pub struct NonlocalTerms {
    pub i_int: Vec<f64>,
    pub qv: Vec<f64>,
    pub qv0: f64,
    pub pv: Vec<f64>,
    pub pv0: f64,
}

pub fn init_ensemble(v0: &PeakedFunction) -> CharacteristicEnsemble {
    let n = v0.coords().len();
    CharacteristicEnsemble {
        s: v0.coords().to_vec(),
        n_neg: v0.n_neg(),
        q: v0.coords().to_vec(),
        v: v0.values().to_vec(),
        w: v0.slopes().to_vec(),
        qs: vec![1.0; n],
        v0: v0.peak_value(),
        w0_plus: v0.slope_right(),
        w0_minus: v0.slope_left(),
        a: 0.0,
        t: 0.0,
    }
}

impl CharacteristicEnsemble {
    pub fn labels(&self) -> &[f64] {
        &self.s
    }

    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    pub fn min_qs(&self) -> f64 {
        self.qs.iter().fold(f64::INFINITY, |m, &x| m.min(x))
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.w
            .iter()
            .fold(self.w0_plus.abs().max(self.w0_minus.abs()), |m, w| m.max(w.abs()))
    }

    fn is_finite(&self) -> bool {
        let arrays = self
            .q
            .iter()
            .chain(&self.v)
            .chain(&self.w)
            .chain(&self.qs)
            .all(|x| x.is_finite());
        arrays
            && self.v0.is_finite()
            && self.w0_plus.is_finite()
            && self.w0_minus.is_finite()
            && self.a.is_finite()
    }

    /// The perturbation in the peak frame as a sampled field.
    pub fn v_field(&self) -> PeakedFunction {
        PeakedFunction::from_parts_unchecked(
            self.q.clone(),
            self.v.clone(),
            self.w.clone(),
            self.v0,
            self.w0_minus,
            self.w0_plus,
        )
        .expect("ensemble positions stay ordered")
    }

    fn axpy(&self, c: f64, d: &Derivs) -> CharacteristicEnsemble {
        let n = self.s.len();
        let mut out = self.clone();
        for i in 0..n {
            out.q[i] += c * d.dq[i];
            out.v[i] += c * d.dv[i];
            out.w[i] += c * d.dw[i];
            out.qs[i] += c * d.dqs[i];
        }
        out.v0 += c * d.dv0;
        out.w0_plus += c * d.dw0_plus;
        out.w0_minus += c * d.dw0_minus;
        out.a += c * d.da;
        out
    }
}

/// Nonlocal terms for the given state. Errors when the Jacobian check is
/// enabled and `min q_s` sits under the threshold.
pub fn nonlocal_terms(e: &CharacteristicEnsemble, jacobian_min: f64) -> Result<NonlocalTerms> {
    if jacobian_min > 0.0 {
        let min_qs = e.min_qs();
        if !(min_qs >= jacobian_min) {
            return Err(Error::JacobianDegenerate { min_qs, t: e.t });
        }
    }
    let grid = SplitGrid::from_labels(&e.s, &e.q)?;
    let n = e.s.len();
    // peak-side Jacobian from the innermost nodes (the limits are not states)
    let qs0m = e.qs[e.n_neg - 1];
    let qs0p = e.qs[e.n_neg];

    let cubic = |v: f64, w: f64| 1.5 * v * w * w + v.powi(3);
    let mut g1 = Vec::with_capacity(n);
    let mut g2 = Vec::with_capacity(n);
    let mut dens = Vec::with_capacity(n);
    for i in 0..n {
        let (v, w, qs) = (e.v[i], e.w[i], e.qs[i]);
        g1.push(cubic(v, w) * qs);
        g2.push(w * w * w * qs);
        dens.push((v * v + w * w) * qs);
    }
    let g1 = PeakSamples {
        values: g1,
        left0: cubic(e.v0, e.w0_minus) * qs0m,
        right0: cubic(e.v0, e.w0_plus) * qs0p,
    };
    let g2 = PeakSamples {
        values: g2,
        left0: e.w0_minus.powi(3) * qs0m,
        right0: e.w0_plus.powi(3) * qs0p,
    };
    let dens = PeakSamples {
        values: dens,
        left0: (e.v0 * e.v0 + e.w0_minus * e.w0_minus) * qs0m,
        right0: (e.v0 * e.v0 + e.w0_plus * e.w0_plus) * qs0p,
    };

    let c1 = grid.conv_phix(&g1);
    let c2 = grid.conv_phi(&g1);
    let c3 = grid.conv_phi(&g2);
    let c4 = grid.conv_phix(&g2);
    let i_int = grid.cumulative_from_peak(&dens);

    let qv: Vec<f64> = (0..n).map(|i| 0.5 * c1.values[i] + 0.25 * c3.values[i]).collect();
    let pv: Vec<f64> = (0..n).map(|i| 0.5 * c2.values[i] + 0.25 * c4.values[i]).collect();
    Ok(NonlocalTerms {
        i_int,
        qv,
        qv0: 0.5 * c1.at_zero + 0.25 * c3.at_zero,
        pv,
        pv0: 0.5 * c2.at_zero + 0.25 * c4.at_zero,
    })
}

/// Full vector field of the coupled system.
pub fn vector_field(e: &CharacteristicEnsemble, jacobian_min: f64) -> Result<Derivs> {
    let nl = nonlocal_terms(e, jacobian_min)?;
    let n = e.s.len();
    let one_v0 = 1.0 + e.v0;
    let mut d = Derivs {
        dq: Vec::with_capacity(n),
        dv: Vec::with_capacity(n),
        dw: Vec::with_capacity(n),
        dqs: Vec::with_capacity(n),
        dv0: -nl.qv0,
        dw0_plus: 0.0,
        dw0_minus: 0.0,
        da: one_v0 * one_v0,
    };
    for i in 0..n {
        let (q, v, w, qs) = (e.q[i], e.v[i], e.w[i], e.qs[i]);
        let ph = phi(q);
        let px = phi_x(q);
        let quad = v * v - e.v0 * e.v0;
        d.dq.push((ph + v) * (ph + v) - one_v0 * one_v0);
        d.dv.push(px * (ph * v - e.v0) + 0.5 * px * quad + 1.5 * ph * nl.i_int[i] - nl.qv[i]);
        d.dw.push(
            ph * (ph * v - e.v0) + 0.5 * ph * quad - ph * px * w + ph * ph * v - px * v * w
                - 2.0 * ph * w * w
                - 0.5 * v * w * w
                + v.powi(3)
                + 1.5 * ph * ph * (v * v + w * w)
                + 1.5 * px * nl.i_int[i]
                - nl.pv[i],
        );
        d.dqs.push(2.0 * (ph + v) * (px + w) * qs);
    }
    let w0_rate = |w0: f64, sign: f64| {
        sign * one_v0 * w0 + e.v0 - 0.5 * one_v0 * w0 * w0 + 1.5 * e.v0 * e.v0 + e.v0.powi(3)
            - nl.pv0
    };
    d.dw0_plus = w0_rate(e.w0_plus, 1.0);
    d.dw0_minus = w0_rate(e.w0_minus, -1.0);
    Ok(d)
}

/// One classical RK4 step. On breakdown the ensemble is left untouched and
/// the returned outcome is terminal.
pub fn step_rk4(e: &mut CharacteristicEnsemble, dt: f64, th: &Thresholds) -> StepOutcome {
    debug_assert!(dt > 0.0);
    let t_mid = e.t + 0.5 * dt;
    let jacobian_collapse = |detail: String| {
        StepOutcome::Breakdown(Breakdown { kind: BreakdownKind::JacobianCollapse, t: t_mid, detail })
    };
    let slope_blowup = |detail: String| {
        StepOutcome::Breakdown(Breakdown { kind: BreakdownKind::SlopeBlowup, t: t_mid, detail })
    };

    // A stage state that is no longer finite means the slope dynamics
    // diverged inside the step; a failed nonlocal evaluation on a finite
    // state means the characteristics degenerated.
    let stage = |state: &CharacteristicEnsemble| -> std::result::Result<Derivs, StepOutcome> {
        if !state.is_finite() {
            return Err(slope_blowup("state lost finiteness inside an RK4 stage".into()));
        }
        vector_field(state, th.jacobian_min).map_err(|err| jacobian_collapse(err.to_string()))
    };

    let k1 = match stage(e) {
        Ok(k) => k,
        Err(out) => return out,
    };
    let y2 = e.axpy(0.5 * dt, &k1);
    let k2 = match stage(&y2) {
        Ok(k) => k,
        Err(out) => return out,
    };
    let y3 = e.axpy(0.5 * dt, &k2);
    let k3 = match stage(&y3) {
        Ok(k) => k,
        Err(out) => return out,
    };
    let y4 = e.axpy(dt, &k3);
    let k4 = match stage(&y4) {
        Ok(k) => k,
        Err(out) => return out,
    };

    let mut cand = e.clone();
    let n = e.s.len();
    let c = dt / 6.0;
    for i in 0..n {
        cand.q[i] += c * (k1.dq[i] + 2.0 * k2.dq[i] + 2.0 * k3.dq[i] + k4.dq[i]);
        cand.v[i] += c * (k1.dv[i] + 2.0 * k2.dv[i] + 2.0 * k3.dv[i] + k4.dv[i]);
        cand.w[i] += c * (k1.dw[i] + 2.0 * k2.dw[i] + 2.0 * k3.dw[i] + k4.dw[i]);
        cand.qs[i] += c * (k1.dqs[i] + 2.0 * k2.dqs[i] + 2.0 * k3.dqs[i] + k4.dqs[i]);
    }
    cand.v0 += c * (k1.dv0 + 2.0 * k2.dv0 + 2.0 * k3.dv0 + k4.dv0);
    cand.w0_plus += c * (k1.dw0_plus + 2.0 * k2.dw0_plus + 2.0 * k3.dw0_plus + k4.dw0_plus);
    cand.w0_minus += c * (k1.dw0_minus + 2.0 * k2.dw0_minus + 2.0 * k3.dw0_minus + k4.dw0_minus);
    cand.a += c * (k1.da + 2.0 * k2.da + 2.0 * k3.da + k4.da);
    cand.t = e.t + dt;

    if !cand.is_finite() || cand.max_abs_slope() > th.slope_blowup {
        return slope_blowup(format!(
            "max slope {:.3e} crossed {:.1e}",
            cand.max_abs_slope(),
            th.slope_blowup
        ));
    }
    if th.jacobian_min > 0.0 && cand.min_qs() < th.jacobian_min {
        return jacobian_collapse(format!(
            "min q_s {:.3e} under {:.1e}",
            cand.min_qs(),
            th.jacobian_min
        ));
    }
    *e = cand;
    StepOutcome::Ok
}

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    /// Last accepted time.
    pub t_final: f64,
    pub breakdown: Option<Breakdown>,
}

/// Fixed-step RK4 integration to `t_end`, sampling one diagnostics record at
/// `t = 0` and every `record_interval`, and always at the final accepted step.
pub fn evolve(
    e: &mut CharacteristicEnsemble,
    t_end: f64,
    dt: f64,
    th: &Thresholds,
    record_interval: f64,
) -> Result<(Vec<DiagnosticsRecord>, EvolveOutcome)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::StepSize { dt, reason: "step must be positive".into() });
    }
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter { name: "t_end", reason: "must be positive".into() });
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let every = (record_interval / dt).round().max(1.0) as usize;

    let mut records = vec![make_record(e, th)?];
    for k in 1..=steps {
        match step_rk4(e, dt, th) {
            StepOutcome::Ok => {
                e.t = k as f64 * dt;
                if k % every == 0 || k == steps {
                    records.push(make_record(e, th)?);
                }
            }
            StepOutcome::Breakdown(b) => {
                if (k - 1) % every != 0 {
                    records.push(make_record(e, th)?);
                }
                return Ok((records, EvolveOutcome { t_final: e.t, breakdown: Some(b) }));
            }
        }
    }
    Ok((records, EvolveOutcome { t_final: e.t, breakdown: None }))
}

/// One diagnostics sample of the current state.
pub fn make_record(e: &CharacteristicEnsemble, th: &Thresholds) -> Result<DiagnosticsRecord> {
    let nl = nonlocal_terms(e, th.jacobian_min)?;
    let vf = e.v_field();
    let (profile, _a) = reconstruct(e);
    Ok(DiagnosticsRecord {
        t: e.t,
        e: profile.energy_e(),
        f: profile.energy_f(),
        h1_v: vf.h1_norm(),
        linf_vx_plus: vf.linf_slope(crate::field::Side::Plus),
        linf_vx_minus: vf.linf_slope(crate::field::Side::Minus),
        v0: e.v0,
        w0_plus: e.w0_plus,
        w0_minus: e.w0_minus,
        a: e.a,
        qs_min: e.min_qs(),
        pq0: nl.pv0 + nl.qv0,
    })
}

/// The full wave `u = phi + v` in the peak frame, together with the lab-frame
/// peak position: `u_lab(x) = profile(x - a)`.
pub fn reconstruct(e: &CharacteristicEnsemble) -> (PeakedFunction, f64) {
    let n = e.s.len();
    let mut values = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    for i in 0..n {
        values.push(phi(e.q[i]) + e.v[i]);
        slopes.push(phi_x(e.q[i]) + e.w[i]);
    }
    let profile = PeakedFunction::from_parts_unchecked(
        e.q.clone(),
        values,
        slopes,
        1.0 + e.v0,
        1.0 + e.w0_minus,
        -1.0 + e.w0_plus,
    )
    .expect("ensemble positions stay ordered");
    (profile, e.a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_grid, InitialDatum};
    use crate::kernel::q_functional;
    use approx::assert_relative_eq;

    fn grid(n: usize, ratio: f64) -> Vec<f64> {
        make_grid(25.0, n, ratio).unwrap()
    }

    fn small_gaussian(scale: f64) -> PeakedFunction {
        InitialDatum::Gaussian { amplitude: scale, sigma: 1.0, center: 0.4 }
            .sample(&grid(400, 1.015))
            .unwrap()
    }

    #[test]
    fn init_matches_datum() {
        let v0 = small_gaussian(0.1);
        let e = init_ensemble(&v0);
        assert_eq!(e.q, v0.coords());
        assert!(e.qs.iter().all(|&x| x == 1.0));
        assert_eq!(e.a, 0.0);
        assert_eq!(e.t, 0.0);
        assert_eq!(e.v0, v0.peak_value());
        let zero = InitialDatum::Zero.sample(&grid(400, 1.015)).unwrap();
        let ez = init_ensemble(&zero);
        assert!(ez.v.iter().all(|&x| x == 0.0));
        assert!(ez.w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nonlocal_terms_vanish_for_zero_perturbation() {
        let zero = InitialDatum::Zero.sample(&grid(400, 1.015)).unwrap();
        let e = init_ensemble(&zero);
        let nl = nonlocal_terms(&e, 1e-8).unwrap();
        assert!(nl.i_int.iter().all(|&x| x == 0.0));
        assert!(nl.qv.iter().all(|&x| x == 0.0));
        assert!(nl.pv.iter().all(|&x| x == 0.0));
        assert_eq!(nl.qv0, 0.0);
        assert_eq!(nl.pv0, 0.0);
    }

    #[test]
    fn nonlocal_terms_match_x_space_at_initial_time() {
        // At t = 0 the labels coincide with positions and q_s = 1, so the
        // label-space scan must reproduce the x-space functional to rounding.
        let v0 = small_gaussian(0.3);
        let e = init_ensemble(&v0);
        let nl = nonlocal_terms(&e, 1e-8).unwrap();
        let qx = q_functional(&v0).unwrap();
        let scale = qx.values.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
        for (a, b) in nl.qv.iter().zip(&qx.values) {
            assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn vector_field_of_steady_peakon() {
        let zero = InitialDatum::Zero.sample(&grid(400, 1.015)).unwrap();
        let e = init_ensemble(&zero);
        let d = vector_field(&e, 1e-8).unwrap();
        assert!(d.dv.iter().all(|&x| x == 0.0));
        assert!(d.dw.iter().all(|&x| x == 0.0));
        assert_eq!(d.dv0, 0.0);
        assert_eq!(d.dw0_plus, 0.0);
        assert_eq!(d.dw0_minus, 0.0);
        assert_eq!(d.da, 1.0);
        for (i, &s) in e.labels().iter().enumerate() {
            let expect = phi(s) * phi(s) - 1.0;
            assert_relative_eq!(d.dq[i], expect, max_relative = 1e-14);
        }
    }

    #[test]
    fn slope_field_is_regular_at_peak_for_continuous_data() {
        // f^(q) -> 0 at the innermost nodes when V -> V0
        let v0 = small_gaussian(0.3);
        let e = init_ensemble(&v0);
        let d = vector_field(&e, 1e-8).unwrap();
        let i = e.n_neg();
        assert!(d.dq[i].abs() < 1e-2, "inner dq {:.3e}", d.dq[i]);
        assert!(d.dq[i - 1].abs() < 1e-2);
    }

    #[test]
    fn peak_rates_linearize_for_tiny_data() {
        let v0 = small_gaussian(1e-6);
        let e = init_ensemble(&v0);
        let d = vector_field(&e, 1e-8).unwrap();
        let lin_p = e.w0_plus + e.v0;
        let lin_m = -e.w0_minus + e.v0;
        assert!((d.dw0_plus - lin_p).abs() < 1e-10);
        assert!((d.dw0_minus - lin_m).abs() < 1e-10);
    }

    #[test]
    fn steady_peakon_stays_steady() {
        let zero = InitialDatum::Zero.sample(&grid(300, 1.02)).unwrap();
        let mut e = init_ensemble(&zero);
        let th = Thresholds::default();
        let (records, out) = evolve(&mut e, 1.0, 1e-3, &th, 0.25).unwrap();
        assert!(out.breakdown.is_none());
        let max_v = e.v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let max_w = e.w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max_v <= 1e-12 && max_w <= 1e-12);
        assert!(e.v0.abs() <= 1e-12 && e.w0_plus.abs() <= 1e-12);
        assert!((e.a - 1.0).abs() <= 1e-8, "a = {} after t = 1", e.a);
        assert!(records.iter().all(|r| r.qs_min > 0.0));
        // the reconstructed wave is the unit peakon
        let (profile, a) = reconstruct(&e);
        assert!((a - 1.0).abs() <= 1e-8);
        assert_relative_eq!(profile.energy_e(), 2.0, max_relative = 1e-4);
        assert_eq!(profile.peak_value(), 1.0);
    }

    #[test]
    fn rk4_order_on_endpoint_state() {
        let v0 = small_gaussian(0.05);
        let run = |dt: f64| {
            let mut e = init_ensemble(&v0);
            let th = Thresholds::default();
            evolve(&mut e, 0.5, dt, &th, 1.0).unwrap();
            e
        };
        let coarse = run(0.02);
        let mid = run(0.01);
        let fine = run(0.005);
        // Richardson: err(dt) ~ |y(dt) - y(dt/2)|
        let diff = |a: &CharacteristicEnsemble, b: &CharacteristicEnsemble| {
            let mut worst: f64 = (a.v0 - b.v0).abs().max((a.w0_plus - b.w0_plus).abs());
            for i in 0..a.v.len() {
                worst = worst.max((a.v[i] - b.v[i]).abs()).max((a.w[i] - b.w[i]).abs());
            }
            worst
        };
        let ratio = diff(&coarse, &mid) / diff(&mid, &fine);
        assert!((10.0..26.0).contains(&ratio), "RK4 ratio {ratio:.1}");
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let v0 = small_gaussian(0.1);
        let mut e = init_ensemble(&v0);
        let th = Thresholds::default();
        evolve(&mut e, 1.0, 1e-3, &th, 1.0).unwrap();
        // q_s (own ODE) against Δq/Δs away from the outer fringe
        let n = e.s.len();
        for i in (n / 4)..(3 * n / 4 - 1) {
            let fd = (e.q[i + 1] - e.q[i]) / (e.s[i + 1] - e.s[i]);
            let qs_mid = 0.5 * (e.qs[i] + e.qs[i + 1]);
            assert!(
                (fd - qs_mid).abs() <= 0.01 * qs_mid.abs(),
                "node {i}: fd {fd:.6e} vs qs {qs_mid:.6e}"
            );
        }
    }

    #[test]
    fn modulation_follows_peak_speed() {
        let v0 = small_gaussian(0.1);
        let mut e = init_ensemble(&v0);
        let th = Thresholds::default();
        let (records, _) = evolve(&mut e, 0.5, 1e-3, &th, 0.05).unwrap();
        for pair in records.windows(2) {
            let da_fd = (pair[1].a - pair[0].a) / (pair[1].t - pair[0].t);
            let rate = {
                let mid = 0.5 * (pair[1].v0 + pair[0].v0);
                (1.0 + mid) * (1.0 + mid)
            };
            assert!((da_fd - rate).abs() < 1e-4, "da {da_fd} vs (1+V0)^2 {rate}");
        }
    }

    #[test]
    fn tiny_data_follow_linear_growth() {
        // peaked datum, ||v0|| ~ 1e-4: (V0 + W0+)(t) tracks e^t (v0(0) + v0'(0+))
        let base = InitialDatum::PeakedExponential {
            amplitude: 1.0,
            beta: 1.0,
            slope_right: 0.0,
            slope_left: 0.0,
        }
        .sample(&grid(400, 1.015))
        .unwrap();
        let v0 = base.scaled(1e-4 / base.h1_norm());
        let mut e = init_ensemble(&v0);
        let th = Thresholds::default();
        let (records, _) = evolve(&mut e, 0.5, 1e-3, &th, 0.1).unwrap();
        let expect0 = v0.peak_value() + v0.slope_right();
        for r in &records {
            let predicted = r.t.exp() * expect0;
            let got = r.v0 + r.w0_plus;
            assert!(
                (got - predicted).abs() <= 0.01 * predicted.abs(),
                "t={}: {got:.6e} vs {predicted:.6e}",
                r.t
            );
        }
    }

    #[test]
    fn energy_is_conserved_for_small_data() {
        let base = small_gaussian(1.0);
        let v0 = base.scaled(0.05 / base.h1_norm());
        let mut e = init_ensemble(&v0);
        let th = Thresholds::default();
        let (records, out) = evolve(&mut e, 0.5, 2e-3, &th, 0.1).unwrap();
        assert!(out.breakdown.is_none());
        let e0 = records[0].e;
        let f0 = records[0].f;
        for r in &records {
            assert!((r.e - e0).abs() / e0 < 1e-3, "E drift {:.2e}", (r.e - e0).abs() / e0);
            assert!((r.f - f0).abs() / f0.abs() < 3e-3, "F drift {:.2e}", (r.f - f0).abs() / f0.abs());
        }
    }

    #[test]
    fn steep_negative_slope_blows_up() {
        let v0 = InitialDatum::PeakedExponential {
            amplitude: 0.0,
            beta: 0.05,
            slope_right: -2.0,
            slope_left: 0.0,
        }
        .sample(&grid(600, 1.01))
        .unwrap();
        let mut e = init_ensemble(&v0);
        let th = Thresholds { slope_blowup: 1e3, jacobian_min: 1e-14 };
        let (_records, out) = evolve(&mut e, 3.0, 5e-4, &th, 0.05).unwrap();
        let b = out.breakdown.expect("run must break down");
        assert_eq!(b.kind, BreakdownKind::SlopeBlowup, "detail: {}", b.detail);
        assert!(b.t > 0.3 && b.t < 1.5, "T_num = {}", b.t);
    }
}
