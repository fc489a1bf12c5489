//! Exact solution of the linearized flow around the unit peakon, by the
//! method of characteristics, plus an independent Runge-Kutta integration of
//! the same characteristic system for cross-validation.
//!
//! The linearized equation is `v_t + (phi² - 1) v_x + phi_x [v(t,0) - phi v] = 0`.
//! Along the characteristics `dq/dt = phi²(q) - 1` it closes into scalar ODEs
//! per label `s`, all solvable in elementary functions. The solution is global
//! in time, so `t` may be negative everywhere in this module.

use crate::error::{Error, Result};
use crate::field::PeakedFunction;
use crate::kernel::{phi, phi_x};

/// Characteristic position `q(t, s)`; `q(t, 0) = 0` for all `t` and the sign
/// of `s` is preserved. Evaluated in log1p/expm1 form so small `s`, large `t`
/// and wide domains all stay accurate.
pub fn char_position(t: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    if s < 0.0 {
        return -char_position(-t, -s);
    }
    // q = ½ log(1 + (e^{2s} - 1) e^{-2t}), rearranged around e^{2(s-t)}
    // when that factor dominates.
    let a = 2.0 * (s - t);
    if a >= 0.0 {
        0.5 * a + 0.5 * (((1.0 - (-2.0 * t).exp()) * (-a).exp()).ln_1p())
    } else {
        0.5 * ((2.0 * s).exp_m1() * (-2.0 * t).exp()).ln_1p()
    }
}

/// Characteristic Jacobian `q_s(t, s) > 0`; `s` must be nonzero.
pub fn char_jacobian(t: f64, s: f64) -> f64 {
    if s < 0.0 || (s == 0.0 && s.is_sign_negative()) {
        return char_jacobian(-t, -s);
    }
    // q_s = 1 / (1 + (1 - e^{-2t}) e^{2(t-s)})
    1.0 / (1.0 + (-(-2.0 * t).exp_m1()) * (2.0 * (t - s)).exp())
}

/// Closed-form `V(t, s) = v(t, q(t, s))` given the datum values `v0(s)` and
/// `v0(0)`.
pub fn linear_v_closed(t: f64, s: f64, v0_s: f64, v00: f64) -> f64 {
    if s == 0.0 {
        return v00;
    }
    if s > 0.0 {
        let growth = t.exp_m1() * (-s).exp(); // (e^t - 1) e^{-s}
        let d = 1.0 + (2.0 * t).exp_m1() * (-2.0 * s).exp();
        (v0_s + v00 * growth) / d.sqrt()
    } else {
        let decay = -(-t).exp_m1() * s.exp(); // (1 - e^{-t}) e^{s}
        let d = 1.0 + (-2.0 * t).exp_m1() * (2.0 * s).exp();
        (v0_s - v00 * decay) / d.sqrt()
    }
}

/// Closed-form slope `W(t, s) = v_x(t, q(t, s))` for `s != 0`; the relation
/// `W = V_s / q_s` holds identically.
pub fn linear_w_closed(t: f64, s: f64, v0_s: f64, v0x_s: f64, v00: f64) -> f64 {
    if s > 0.0 {
        let growth = t.exp_m1() * (-s).exp();
        let g = (2.0 * t).exp_m1() * (-2.0 * s).exp();
        let sq = (1.0 + g).sqrt();
        sq * (v0x_s - v00 * growth) + g * (v0_s + v00 * growth) / sq
    } else {
        let decay = -(-t).exp_m1() * s.exp();
        let g = -(-2.0 * t).exp_m1() * (2.0 * s).exp(); // (1 - e^{-2t}) e^{2s}
        let sq = (1.0 - g).sqrt();
        sq * (v0x_s - v00 * decay) + g * (v0_s - v00 * decay) / sq
    }
}

/// One-sided slope limit at the peak: `W(t, 0⁺) = v0(0)(e^t - 1) + v0'(0⁺) e^t`,
/// growing exponentially forward in time.
pub fn peak_slope_limit_plus(t: f64, v00: f64, v0x0_plus: f64) -> f64 {
    v00 * t.exp_m1() + v0x0_plus * t.exp()
}

/// `W(t, 0⁻) = v0(0)(1 - e^{-t}) + v0'(0⁻) e^{-t}`, decaying forward in time.
pub fn peak_slope_limit_minus(t: f64, v00: f64, v0x0_minus: f64) -> f64 {
    -v00 * (-t).exp_m1() + v0x0_minus * (-t).exp()
}

/// Slope jump `[v_x]⁺₋` generated from a C¹ datum with `v0'(0) = v0x0`.
pub fn slope_jump(t: f64, v00: f64, v0x0: f64) -> f64 {
    2.0 * v00 * (t.cosh() - 1.0) + 2.0 * v0x0 * t.sinh()
}

/// Lower bound `|v0(0) + v0'(0⁺)| e^t - |v0(0)|` for `‖v_x(t)‖_{L∞(ℝ⁺)}`.
pub fn growth_lower_bound(t: f64, v0: &PeakedFunction) -> f64 {
    (v0.peak_value() + v0.slope_right()).abs() * t.exp() - v0.peak_value().abs()
}

/// The full linearized solution at time `t`, sampled on the characteristic
/// image of the datum grid.
pub fn linear_solution_field(t: f64, v0: &PeakedFunction) -> PeakedFunction {
    let n = v0.coords().len();
    let mut coords = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    let v00 = v0.peak_value();
    for i in 0..n {
        let s = v0.coords()[i];
        coords.push(char_position(t, s));
        values.push(linear_v_closed(t, s, v0.values()[i], v00));
        slopes.push(linear_w_closed(t, s, v0.values()[i], v0.slopes()[i], v00));
    }
    PeakedFunction::from_parts_unchecked(
        coords,
        values,
        slopes,
        v00,
        peak_slope_limit_minus(t, v00, v0.slope_left()),
        peak_slope_limit_plus(t, v00, v0.slope_right()),
    )
    .expect("characteristic image grid stays ordered")
}

/// Linearized solution at time `t` sampled on a fixed grid by pulling every
/// node back along its characteristic (`s = q(-t, x)`, using that the flow is
/// autonomous). The image-grid sampling of [`linear_solution_field`] loses
/// resolution left of the peak, where the characteristics stretch like
/// `e^{2t}`; this variant keeps the quadrature resolution uniform in time but
/// needs the datum in analytic form.
pub fn linear_solution_on_grid(
    t: f64,
    datum: &crate::field::InitialDatum,
    scale: f64,
    x_grid: &[f64],
) -> Result<PeakedFunction> {
    use crate::field::Side;
    let v00 = scale * datum.value_at(0.0);
    let mut values = Vec::with_capacity(x_grid.len());
    let mut slopes = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let s = char_position(-t, x);
        let v0_s = scale * datum.value_at(s);
        let side = if s > 0.0 { Side::Plus } else { Side::Minus };
        let v0x_s = scale * datum.slope_at(s, side);
        values.push(linear_v_closed(t, s, v0_s, v00));
        slopes.push(linear_w_closed(t, s, v0_s, v0x_s, v00));
    }
    PeakedFunction::from_parts_unchecked(
        x_grid.to_vec(),
        values,
        slopes,
        v00,
        peak_slope_limit_minus(t, v00, scale * datum.slope_at(0.0, Side::Minus)),
        peak_slope_limit_plus(t, v00, scale * datum.slope_at(0.0, Side::Plus)),
    )
}

/// Independent check of the closed forms: integrate the characteristic system
/// with classical RK4. Per label the state is `(q, V, V_s, log q_s)`; the
/// slope is recovered through `W = V_s / q_s`, with `q_s` obtained by
/// quadrature of its defining time integral. The peak limits are integrated
/// from their own limiting ODEs.
pub fn linear_ode_crosscheck(v0: &PeakedFunction, t_end: f64, dt: f64) -> Result<PeakedFunction> {
    if !(dt > 0.0) || dt > 0.1 {
        return Err(Error::StepSize { dt, reason: "crosscheck requires 0 < dt <= 0.1".into() });
    }
    let steps = (t_end.abs() / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let v00 = v0.peak_value();

    let n = v0.coords().len();
    let mut q: Vec<f64> = v0.coords().to_vec();
    let mut v: Vec<f64> = v0.values().to_vec();
    let mut p: Vec<f64> = v0.slopes().to_vec(); // V_s(0, s) = v0'(s)
    let mut xi = vec![0.0; n]; // log q_s

    // d/dt (q, V, V_s, xi) for one node
    let rhs = |q: f64, v: f64, p: f64, xi: f64| -> (f64, f64, f64, f64) {
        let ph = phi(q);
        let px = phi_x(q);
        let qs = xi.exp();
        let dq = ph * ph - 1.0;
        let dv = px * (ph * v - v00);
        let dp = qs * (ph * (ph * v - v00) + ph * ph * v) + ph * px * p;
        let dxi = 2.0 * ph * px;
        (dq, dv, dp, dxi)
    };

    for _ in 0..steps {
        for i in 0..n {
            let y = (q[i], v[i], p[i], xi[i]);
            let k1 = rhs(y.0, y.1, y.2, y.3);
            let k2 = rhs(
                y.0 + 0.5 * h * k1.0,
                y.1 + 0.5 * h * k1.1,
                y.2 + 0.5 * h * k1.2,
                y.3 + 0.5 * h * k1.3,
            );
            let k3 = rhs(
                y.0 + 0.5 * h * k2.0,
                y.1 + 0.5 * h * k2.1,
                y.2 + 0.5 * h * k2.2,
                y.3 + 0.5 * h * k2.3,
            );
            let k4 = rhs(y.0 + h * k3.0, y.1 + h * k3.1, y.2 + h * k3.2, y.3 + h * k3.3);
            q[i] = y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v[i] = y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            p[i] = y.2 + h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
            xi[i] = y.3 + h / 6.0 * (k1.3 + 2.0 * k2.3 + 2.0 * k3.3 + k4.3);
        }
    }

    let w: Vec<f64> = (0..n).map(|i| p[i] * (-xi[i]).exp()).collect();

    // peak limits: dW⁰₊/dt = W⁰₊ + v0(0), dW⁰₋/dt = -W⁰₋ + v0(0)
    let mut w0p = v0.slope_right();
    let mut w0m = v0.slope_left();
    for _ in 0..steps {
        let step_scalar = |y: f64, sign: f64| -> f64 {
            let f = |y: f64| sign * y + v00;
            let k1 = f(y);
            let k2 = f(y + 0.5 * h * k1);
            let k3 = f(y + 0.5 * h * k2);
            let k4 = f(y + h * k3);
            y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        };
        w0p = step_scalar(w0p, 1.0);
        w0m = step_scalar(w0m, -1.0);
    }

    PeakedFunction::from_parts_unchecked(q, v, w, v00, w0m, w0p)
}
