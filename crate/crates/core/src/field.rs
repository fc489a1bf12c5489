//! Grids and sampled representations of single-peak perturbations.
//!
//! A perturbation lives in H¹ ∩ C¹₀: continuous on the line, C¹ away from the
//! origin, with a possible slope jump at the peak. The one-sided limits at the
//! peak are first-class data here — they are stored, never differenced from
//! neighbouring samples, because the jump is genuine.

use std::io::{self, Write};

use crate::error::{Error, Result};

/// Default tolerance for the continuity-at-the-peak audit.
pub const CONTINUITY_TOL: f64 = 1e-3;
/// Default tolerance for endpoint values and the H¹ tail mass beyond L/2.
pub const DECAY_TOL: f64 = 1e-8;

/// Which half-line a one-sided quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Symmetric grid on [-L, L] excluding the origin, with geometric clustering
/// toward the peak. `ratio = 1` gives uniform spacing; larger ratios shrink
/// the innermost cells.
pub fn make_grid(l: f64, n: usize, ratio: f64) -> Result<Vec<f64>> {
    if !l.is_finite() || l < 20.0 {
        return Err(Error::InvalidParameter {
            name: "l",
            reason: format!("half-width must be >= 20 so kernel truncation stays below e^-20, got {l}"),
        });
    }
    if n < 2 {
        return Err(Error::InvalidParameter { name: "n", reason: format!("need n >= 2 nodes per side, got {n}") });
    }
    if !ratio.is_finite() || ratio < 1.0 {
        return Err(Error::InvalidParameter {
            name: "ratio",
            reason: format!("clustering factor must be >= 1, got {ratio}"),
        });
    }
    let d0 = if ratio == 1.0 {
        l / n as f64
    } else {
        l * (ratio - 1.0) / (ratio.powi(n as i32) - 1.0)
    };
    let mut pos = Vec::with_capacity(n);
    let mut x = 0.0;
    let mut h = d0;
    for _ in 0..n {
        x += h;
        pos.push(x);
        h *= ratio;
    }
    let mut coords = Vec::with_capacity(2 * n);
    coords.extend(pos.iter().rev().map(|&x| -x));
    coords.extend_from_slice(&pos);
    for w in coords.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidGrid("grid failed monotonicity audit".into()));
        }
    }
    Ok(coords)
}

/// A sampled v ∈ H¹ ∩ C¹₀: values and slopes on a grid excluding the origin,
/// plus the peak value and both one-sided peak slopes.
#[derive(Debug, Clone)]
pub struct PeakedFunction {
    coords: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    peak_value: f64,
    slope_left: f64,
    slope_right: f64,
    n_neg: usize,
}

impl PeakedFunction {
    pub fn new(
        coords: Vec<f64>,
        values: Vec<f64>,
        slopes: Vec<f64>,
        peak_value: f64,
        slope_left: f64,
        slope_right: f64,
    ) -> Result<Self> {
        Self::with_tolerances(
            coords,
            values,
            slopes,
            peak_value,
            slope_left,
            slope_right,
            CONTINUITY_TOL,
            DECAY_TOL,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_tolerances(
        coords: Vec<f64>,
        values: Vec<f64>,
        slopes: Vec<f64>,
        peak_value: f64,
        slope_left: f64,
        slope_right: f64,
        continuity_tol: f64,
        decay_tol: f64,
    ) -> Result<Self> {
        let f = Self::from_parts_unchecked(coords, values, slopes, peak_value, slope_left, slope_right)?;
        // Continuity at the peak: linear extrapolation from the two innermost
        // nodes on each side must reproduce the stored peak value.
        for side in [Side::Minus, Side::Plus] {
            let (x1, v1, x2, v2) = match side {
                Side::Minus => {
                    let i = f.n_neg - 1;
                    (f.coords[i], f.values[i], f.coords[i - 1], f.values[i - 1])
                }
                Side::Plus => {
                    let i = f.n_neg;
                    (f.coords[i], f.values[i], f.coords[i + 1], f.values[i + 1])
                }
            };
            let extrap = v1 - (v2 - v1) / (x2 - x1) * x1;
            if (extrap - peak_value).abs() > continuity_tol {
                return Err(Error::InvalidDatum(format!(
                    "discontinuous at the peak ({side:?}): extrapolated {extrap:.6e} vs stored {peak_value:.6e}"
                )));
            }
        }
        // Decay: endpoint values and the H¹ tail beyond half the domain.
        let l = f.coords[0].abs().max(f.coords[f.coords.len() - 1].abs());
        for i in [0, f.coords.len() - 1] {
            if f.values[i].abs() > decay_tol.sqrt() {
                return Err(Error::InvalidDatum(format!(
                    "no decay at the boundary: |v({})| = {:.3e}",
                    f.coords[i],
                    f.values[i].abs()
                )));
            }
        }
        let tail = f.integrate(|v, w| {
            v * v + w * w
        }) - f.integrate_within(l / 2.0, |v, w| v * v + w * w);
        if tail > decay_tol {
            return Err(Error::InvalidDatum(format!(
                "H¹ tail mass {tail:.3e} beyond |x| = {:.1} exceeds {decay_tol:.1e}",
                l / 2.0
            )));
        }
        Ok(f)
    }

    /// Constructor for solver-produced fields; checks only structural sanity,
    /// not the physical invariants.
    pub fn from_parts_unchecked(
        coords: Vec<f64>,
        values: Vec<f64>,
        slopes: Vec<f64>,
        peak_value: f64,
        slope_left: f64,
        slope_right: f64,
    ) -> Result<Self> {
        if coords.len() != values.len() || coords.len() != slopes.len() {
            return Err(Error::InvalidGrid("coords/values/slopes length mismatch".into()));
        }
        for w in coords.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidGrid("coords must be strictly increasing".into()));
            }
        }
        let n_neg = coords.iter().take_while(|&&x| x < 0.0).count();
        if n_neg < 2 || coords.len() - n_neg < 2 {
            return Err(Error::InvalidGrid("need at least two nodes on each side of the peak".into()));
        }
        if coords.iter().any(|&x| x == 0.0) {
            return Err(Error::InvalidGrid("the peak node 0 must not be a grid node".into()));
        }
        let finite = values.iter().chain(slopes.iter()).all(|x| x.is_finite())
            && peak_value.is_finite()
            && slope_left.is_finite()
            && slope_right.is_finite();
        if !finite {
            return Err(Error::InvalidDatum("values and slopes must be finite".into()));
        }
        Ok(Self { coords, values, slopes, peak_value, slope_left, slope_right, n_neg })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }
    pub fn peak_value(&self) -> f64 {
        self.peak_value
    }
    pub fn slope_left(&self) -> f64 {
        self.slope_left
    }
    pub fn slope_right(&self) -> f64 {
        self.slope_right
    }
    /// Number of nodes left of the peak.
    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    pub fn scaled(&self, lambda: f64) -> PeakedFunction {
        PeakedFunction {
            coords: self.coords.clone(),
            values: self.values.iter().map(|v| lambda * v).collect(),
            slopes: self.slopes.iter().map(|w| lambda * w).collect(),
            peak_value: lambda * self.peak_value,
            slope_left: lambda * self.slope_left,
            slope_right: lambda * self.slope_right,
            n_neg: self.n_neg,
        }
    }

    /// Trapezoid of `f(v, v_x)` over one half-line, the peak entering through
    /// its one-sided limits.
    fn integrate_halfline(&self, side: Side, f: &impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        match side {
            Side::Plus => {
                let mut px = 0.0;
                let mut pv = f(self.peak_value, self.slope_right);
                for i in self.n_neg..self.coords.len() {
                    let fv = f(self.values[i], self.slopes[i]);
                    acc += 0.5 * (self.coords[i] - px) * (pv + fv);
                    px = self.coords[i];
                    pv = fv;
                }
            }
            Side::Minus => {
                let mut px = 0.0;
                let mut pv = f(self.peak_value, self.slope_left);
                for i in (0..self.n_neg).rev() {
                    let fv = f(self.values[i], self.slopes[i]);
                    acc += 0.5 * (px - self.coords[i]) * (pv + fv);
                    px = self.coords[i];
                    pv = fv;
                }
            }
        }
        acc
    }

    /// ∫ f(v, v_x) dx over the whole sampled domain.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.integrate_halfline(Side::Minus, &f) + self.integrate_halfline(Side::Plus, &f)
    }

    /// Same, restricted to |x| <= cut (intervals fully inside).
    fn integrate_within(&self, cut: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        let g = |i: usize| f(self.values[i], self.slopes[i]);
        for i in 0..self.coords.len() - 1 {
            if i == self.n_neg - 1 {
                continue; // peak-straddling interval handled below
            }
            if self.coords[i].abs() <= cut && self.coords[i + 1].abs() <= cut {
                acc += 0.5 * (self.coords[i + 1] - self.coords[i]) * (g(i) + g(i + 1));
            }
        }
        let (il, ir) = (self.n_neg - 1, self.n_neg);
        acc += 0.5 * (-self.coords[il]) * (g(il) + f(self.peak_value, self.slope_left));
        acc += 0.5 * self.coords[ir] * (f(self.peak_value, self.slope_right) + g(ir));
        acc
    }

    /// ‖v‖_{H¹(ℝ±)}.
    pub fn h1_norm_halfline(&self, side: Side) -> f64 {
        self.integrate_halfline(side, &|v, w| v * v + w * w).max(0.0).sqrt()
    }

    /// The conserved energy E(v) = ∫ (v² + v_x²) dx = ‖v‖²_{H¹}.
    pub fn energy_e(&self) -> f64 {
        let p = self.h1_norm_halfline(Side::Plus);
        let m = self.h1_norm_halfline(Side::Minus);
        p * p + m * m
    }

    pub fn h1_norm(&self) -> f64 {
        self.energy_e().max(0.0).sqrt()
    }

    /// The second conserved functional F(v) = ∫ (v⁴ + 2v²v_x² − v_x⁴/3) dx.
    pub fn energy_f(&self) -> f64 {
        self.integrate(|v, w| {
            let (v2, w2) = (v * v, w * w);
            v2 * v2 + 2.0 * v2 * w2 - w2 * w2 / 3.0
        })
    }

    /// max |v_x| on one side, including the one-sided peak limit.
    pub fn linf_slope(&self, side: Side) -> f64 {
        match side {
            Side::Plus => self.slopes[self.n_neg..]
                .iter()
                .fold(self.slope_right.abs(), |m, w| m.max(w.abs())),
            Side::Minus => self.slopes[..self.n_neg]
                .iter()
                .fold(self.slope_left.abs(), |m, w| m.max(w.abs())),
        }
    }

    /// max(‖v‖_∞, ‖v_x‖_∞).
    pub fn w1inf_norm(&self) -> f64 {
        let v = self
            .values
            .iter()
            .fold(self.peak_value.abs(), |m, x| m.max(x.abs()));
        v.max(self.linf_slope(Side::Plus)).max(self.linf_slope(Side::Minus))
    }

    /// Piecewise-linear interpolation with the peak as a breakpoint; zero
    /// outside the sampled domain (the field decays there).
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.coords.len();
        if x < self.coords[0] || x > self.coords[n - 1] {
            return 0.0;
        }
        if x == 0.0 {
            return self.peak_value;
        }
        // virtual node list: coords with 0 inserted at n_neg
        let (xl, vl, xr, vr) = if x > 0.0 {
            match self.coords[self.n_neg..].binary_search_by(|c| c.partial_cmp(&x).unwrap()) {
                Ok(k) => return self.values[self.n_neg + k],
                Err(0) => (0.0, self.peak_value, self.coords[self.n_neg], self.values[self.n_neg]),
                Err(k) => {
                    let i = self.n_neg + k;
                    (self.coords[i - 1], self.values[i - 1], self.coords[i], self.values[i])
                }
            }
        } else {
            match self.coords[..self.n_neg].binary_search_by(|c| c.partial_cmp(&x).unwrap()) {
                Ok(k) => return self.values[k],
                Err(k) if k == self.n_neg => {
                    (self.coords[self.n_neg - 1], self.values[self.n_neg - 1], 0.0, self.peak_value)
                }
                Err(k) => (self.coords[k - 1], self.values[k - 1], self.coords[k], self.values[k]),
            }
        };
        vl + (vr - vl) * (x - xl) / (xr - xl)
    }

    /// Snapshot rows `x,v,vx,side` with the peak written twice (side L then R).
    pub fn write_snapshot<W: Write>(&self, t: f64, out: &mut W) -> io::Result<()> {
        writeln!(out, "# t={}", fmt(t))?;
        for i in 0..self.n_neg {
            writeln!(out, "{},{},{},.", fmt(self.coords[i]), fmt(self.values[i]), fmt(self.slopes[i]))?;
        }
        writeln!(out, "{},{},{},L", fmt(0.0), fmt(self.peak_value), fmt(self.slope_left))?;
        writeln!(out, "{},{},{},R", fmt(0.0), fmt(self.peak_value), fmt(self.slope_right))?;
        for i in self.n_neg..self.coords.len() {
            writeln!(out, "{},{},{},.", fmt(self.coords[i]), fmt(self.values[i]), fmt(self.slopes[i]))?;
        }
        Ok(())
    }
}

/// 17-significant-digit float formatting used in every CSV artifact, so that
/// repeated runs are byte-identical and round-trip losslessly.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Families of initial perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDatum {
    Zero,
    /// v = A·e^{-|x|}, a pure amplitude perturbation of the peakon.
    ScaledPeakon { amplitude: f64 },
    /// v(0) = A with prescribed one-sided slopes and decay scale beta:
    /// v = (A + c± x) e^{∓x/beta} with c± matched to the slopes.
    PeakedExponential { amplitude: f64, beta: f64, slope_right: f64, slope_left: f64 },
    /// Smooth bump A·exp(-(x-center)²/(2 sigma²)).
    Gaussian { amplitude: f64, sigma: f64, center: f64 },
}

impl InitialDatum {
    pub fn value_at(&self, x: f64) -> f64 {
        match *self {
            InitialDatum::Zero => 0.0,
            InitialDatum::ScaledPeakon { amplitude } => amplitude * (-x.abs()).exp(),
            InitialDatum::PeakedExponential { amplitude, beta, slope_right, slope_left } => {
                if x >= 0.0 {
                    let c = slope_right + amplitude / beta;
                    (amplitude + c * x) * (-x / beta).exp()
                } else {
                    let c = slope_left - amplitude / beta;
                    (amplitude + c * x) * (x / beta).exp()
                }
            }
            InitialDatum::Gaussian { amplitude, sigma, center } => {
                let z = (x - center) / sigma;
                amplitude * (-0.5 * z * z).exp()
            }
        }
    }

    /// One-sided derivative (the side only matters at x = 0).
    pub fn slope_at(&self, x: f64, side: Side) -> f64 {
        match *self {
            InitialDatum::Zero => 0.0,
            InitialDatum::ScaledPeakon { amplitude } => {
                let sgn = match side {
                    _ if x > 0.0 => 1.0,
                    _ if x < 0.0 => -1.0,
                    Side::Plus => 1.0,
                    Side::Minus => -1.0,
                };
                -sgn * amplitude * (-x.abs()).exp()
            }
            InitialDatum::PeakedExponential { amplitude, beta, slope_right, slope_left } => {
                let plus = x > 0.0 || (x == 0.0 && side == Side::Plus);
                if plus {
                    let c = slope_right + amplitude / beta;
                    (c - (amplitude + c * x) / beta) * (-x / beta).exp()
                } else {
                    let c = slope_left - amplitude / beta;
                    (c + (amplitude + c * x) / beta) * (x / beta).exp()
                }
            }
            InitialDatum::Gaussian { amplitude, sigma, center } => {
                let z = (x - center) / sigma;
                -amplitude * z / sigma * (-0.5 * z * z).exp()
            }
        }
    }

    pub fn sample(&self, coords: &[f64]) -> Result<PeakedFunction> {
        let values = coords.iter().map(|&x| self.value_at(x)).collect();
        let slopes = coords
            .iter()
            .map(|&x| self.slope_at(x, if x > 0.0 { Side::Plus } else { Side::Minus }))
            .collect();
        PeakedFunction::new(
            coords.to_vec(),
            values,
            slopes,
            self.value_at(0.0),
            self.slope_at(0.0, Side::Minus),
            self.slope_at(0.0, Side::Plus),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn default_grid() -> Vec<f64> {
        make_grid(25.0, 2000, 1.003).unwrap()
    }

    fn peakon() -> PeakedFunction {
        InitialDatum::ScaledPeakon { amplitude: 1.0 }
            .sample(&default_grid())
            .unwrap()
    }

    #[test]
    fn uniform_grid_layout() {
        let g = make_grid(20.0, 4, 1.0).unwrap();
        let expected = [-20.0, -15.0, -10.0, -5.0, 5.0, 10.0, 15.0, 20.0];
        for (a, b) in g.iter().zip(expected.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn clustered_grid_spacing() {
        let g = make_grid(20.0, 1000, 1.005).unwrap();
        assert_eq!(g.len(), 2000);
        let n = g.len();
        let min_h = g[n / 2] - g[n / 2 - 1]; // innermost gap straddles 0
        let max_h = g[n - 1] - g[n - 2];
        assert!(min_h < max_h);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(make_grid(10.0, 100, 1.0).is_err());
        assert!(make_grid(25.0, 100, 0.9).is_err());
    }

    #[test]
    fn halfline_h1_of_peakon() {
        let p = peakon();
        // ∫_0^∞ e^{-2x} dx = ½ for both the value and the slope part.
        assert_relative_eq!(p.h1_norm_halfline(Side::Plus).powi(2), 1.0, max_relative = 1e-5);
        assert_relative_eq!(p.h1_norm_halfline(Side::Minus).powi(2), 1.0, max_relative = 1e-5);
        let zero = InitialDatum::Zero.sample(&default_grid()).unwrap();
        assert_eq!(zero.h1_norm_halfline(Side::Plus), 0.0);
        // full-line consistency
        let g = InitialDatum::Gaussian { amplitude: 0.4, sigma: 1.0, center: 0.3 }
            .sample(&default_grid())
            .unwrap();
        let total = g.h1_norm_halfline(Side::Plus).powi(2) + g.h1_norm_halfline(Side::Minus).powi(2);
        assert_relative_eq!(total, g.energy_e(), max_relative = 1e-14);
    }

    #[test]
    fn energies_of_peakon() {
        let p = peakon();
        assert_relative_eq!(p.energy_e(), 2.0, max_relative = 1e-5);
        assert_relative_eq!(p.scaled(2.0).energy_e(), 8.0, max_relative = 1e-5);
        assert_relative_eq!(p.energy_f(), 4.0 / 3.0, max_relative = 1e-5);
        let zero = InitialDatum::Zero.sample(&default_grid()).unwrap();
        assert_eq!(zero.energy_e(), 0.0);
        assert_eq!(zero.energy_f(), 0.0);
        // ∫ phi_x⁶ dx = 1/3
        assert_relative_eq!(p.integrate(|_, w| w.powi(6)), 1.0 / 3.0, max_relative = 1e-5);
    }

    #[test]
    fn energies_converge_at_second_order() {
        let coarse = peakon();
        let fine = InitialDatum::ScaledPeakon { amplitude: 1.0 }
            .sample(&make_grid(25.0, 4000, 1.0015).unwrap())
            .unwrap();
        let e_ratio = (coarse.energy_e() - 2.0).abs() / (fine.energy_e() - 2.0).abs();
        let f_ratio = (coarse.energy_f() - 4.0 / 3.0).abs() / (fine.energy_f() - 4.0 / 3.0).abs();
        assert!(e_ratio >= 3.0, "E refinement ratio {e_ratio:.2}");
        assert!(f_ratio >= 3.0, "F refinement ratio {f_ratio:.2}");
    }

    #[test]
    fn sup_norms_and_interpolation() {
        let p = peakon();
        assert_eq!(p.w1inf_norm(), 1.0);
        assert_eq!(p.linf_slope(Side::Plus), 1.0);
        let zero = InitialDatum::Zero.sample(&default_grid()).unwrap();
        assert_eq!(zero.linf_slope(Side::Minus), 0.0);
        let i = p.coords().len() / 3;
        assert_eq!(p.interpolate(p.coords()[i]), p.values()[i]);
        assert_eq!(p.interpolate(0.0), 1.0);
        assert_eq!(p.interpolate(1e9), 0.0);
        // between the innermost node and the peak
        let x = 0.5 * p.coords()[p.n_neg()];
        assert!((p.interpolate(x) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn continuity_violation_is_rejected() {
        let coords = default_grid();
        let d = InitialDatum::Gaussian { amplitude: 0.4, sigma: 1.0, center: 0.0 };
        let values: Vec<f64> = coords.iter().map(|&x| d.value_at(x)).collect();
        let slopes: Vec<f64> = coords.iter().map(|&x| d.slope_at(x, Side::Plus)).collect();
        let err = PeakedFunction::new(coords, values, slopes, 0.9, 0.0, 0.0);
        assert!(matches!(err, Err(Error::InvalidDatum(_))));
    }

    #[test]
    fn missing_decay_is_rejected() {
        let coords = default_grid();
        let n = coords.len();
        let err = PeakedFunction::new(coords, vec![0.5; n], vec![0.0; n], 0.5, 0.0, 0.0);
        assert!(matches!(err, Err(Error::InvalidDatum(_))));
    }

    #[test]
    fn snapshot_format() {
        let p = InitialDatum::PeakedExponential {
            amplitude: 0.2,
            beta: 1.0,
            slope_right: -0.1,
            slope_left: 0.05,
        }
        .sample(&default_grid())
        .unwrap();
        let mut buf = Vec::new();
        p.write_snapshot(0.25, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# t=2.5"));
        let n_neg = p.n_neg();
        let peak_l: Vec<&str> = text.lines().nth(1 + n_neg).unwrap().split(',').collect();
        let peak_r: Vec<&str> = text.lines().nth(2 + n_neg).unwrap().split(',').collect();
        assert_eq!(peak_l[3], "L");
        assert_eq!(peak_r[3], "R");
        assert_eq!(peak_l[0].parse::<f64>().unwrap(), 0.0);
        assert_eq!(text.lines().count(), 1 + p.coords().len() + 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn norms_are_absolutely_homogeneous(lambda in -4.0f64..4.0, amp in 0.05f64..0.5) {
            let grid = make_grid(25.0, 200, 1.03).unwrap();
            let v = InitialDatum::Gaussian { amplitude: amp, sigma: 1.0, center: 0.5 }
                .sample(&grid)
                .unwrap();
            let s = v.scaled(lambda);
            prop_assert!((s.w1inf_norm() - lambda.abs() * v.w1inf_norm()).abs() <= 1e-15);
            let rel = (s.h1_norm() - lambda.abs() * v.h1_norm()).abs() / v.h1_norm().max(1e-300);
            prop_assert!(rel <= 1e-12);
        }
    }
}
