//! Peakon profile and the `e^{-|x|}` convolution engine.
//!
//! `phi(x) = e^{-|x|}` is twice the Green's function of `1 - d²/dx²`, so the
//! nonlocal terms of the Novikov equation are convolutions against `phi` and
//! `phi_x`. Both factor across any evaluation point into a left and a right
//! exponential moment,
//!
//! ```text
//! (phi * g)(x)   =  e^{-x} ∫_{-∞}^{x} e^{y} g dy  +  e^{x} ∫_{x}^{∞} e^{-y} g dy
//! (phi_x * g)(x) = -e^{-x} ∫_{-∞}^{x} e^{y} g dy  +  e^{x} ∫_{x}^{∞} e^{-y} g dy
//! ```
//!
//! which cumulative trapezoid scans evaluate at every node in O(N) total.
//! The scans are carried in shifted form (each recurrence multiplies by
//! `e^{x_i - x_{i+1}} <= 1`), so no intermediate quantity can overflow no
//! matter how wide the domain is.
//!
//! All functions here are pure; the module holds no state.

use crate::error::{Error, Result};
use crate::field::PeakedFunction;

/// Traveling-wave parameters of `sqrt(c) e^{-|x - x0 - ct|}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakonParams {
    /// Wave speed, strictly positive.
    pub c: f64,
    /// Phase shift.
    pub x0: f64,
}

impl PeakonParams {
    pub fn new(c: f64, x0: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "c",
                reason: format!("wave speed must be positive and finite, got {c}"),
            });
        }
        if !x0.is_finite() {
            return Err(Error::InvalidParameter {
                name: "x0",
                reason: "phase must be finite".into(),
            });
        }
        Ok(Self { c, x0 })
    }
}

/// Peakon profile `sqrt(c) e^{-|x - x0|}` at a point.
pub fn peakon_profile(p: PeakonParams, x: f64) -> f64 {
    p.c.sqrt() * (-(x - p.x0).abs()).exp()
}

/// Unit-speed peakon `phi(x) = e^{-|x|}`.
#[inline]
pub fn phi(x: f64) -> f64 {
    (-x.abs()).exp()
}

/// `phi_x(x) = -sgn(x) e^{-|x|}` away from the corner. The argument must not
/// be exactly zero; use the one-sided limits `∓1` there.
#[inline]
pub fn phi_x(x: f64) -> f64 {
    -x.signum() * (-x.abs()).exp()
}

/// A function sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn new(coords: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if coords.len() != values.len() {
            return Err(Error::InvalidGrid(format!(
                "{} coords vs {} values",
                coords.len(),
                values.len()
            )));
        }
        if coords.len() < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        check_strictly_increasing(&coords)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("values must be finite".into()));
        }
        Ok(Self { coords, values })
    }
}

fn check_strictly_increasing(coords: &[f64]) -> Result<()> {
    for w in coords.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidGrid(format!(
                "coords must be strictly increasing, found {} after {}",
                w[1], w[0]
            )));
        }
    }
    if coords.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid("coords must be finite".into()));
    }
    Ok(())
}

/// Trapezoid lattice for the exponential scans.
///
/// `pos` are the kernel-argument positions (weakly increasing; a position may
/// repeat where an integrand jumps), `width` the measure of each interval in
/// the integration variable. Along characteristics `pos` is the image `q(s)`
/// while `width` stays the label spacing, with the Jacobian folded into the
/// amplitudes.
#[derive(Debug, Clone)]
pub struct Lattice {
    pos: Vec<f64>,
    width: Vec<f64>,
    decay: Vec<f64>,
}

impl Lattice {
    pub fn new(pos: Vec<f64>, width: Vec<f64>) -> Result<Self> {
        if pos.len() < 2 || width.len() + 1 != pos.len() {
            return Err(Error::InvalidGrid("lattice needs n positions and n-1 widths".into()));
        }
        for w in pos.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::InvalidGrid(format!(
                    "positions must be non-decreasing, found {} after {}",
                    w[1], w[0]
                )));
            }
        }
        let decay = pos.windows(2).map(|w| (w[0] - w[1]).exp()).collect();
        Ok(Self { pos, width, decay })
    }

    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        check_strictly_increasing(coords)?;
        let width = coords.windows(2).map(|w| w[1] - w[0]).collect();
        Lattice::new(coords.to_vec(), width)
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    /// Left and right exponential moments of the amplitudes `g`:
    ///
    /// `S_i = e^{-x_i} ∫_{x_0}^{x_i} e^{y} g dy`,
    /// `T_i = e^{x_i} ∫_{x_i}^{x_n} e^{-y} g dy`,
    ///
    /// so `(phi * g)_i = S_i + T_i` and `(phi_x * g)_i = T_i - S_i` up to the
    /// truncated tails (the caller guarantees decay at the boundary).
    pub fn scan(&self, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.pos.len();
        assert_eq!(g.len(), n, "amplitude array does not match lattice");
        let mut s = vec![0.0; n];
        for i in 1..n {
            let f = self.decay[i - 1];
            let h = 0.5 * self.width[i - 1];
            s[i] = f * (s[i - 1] + h * g[i - 1]) + h * g[i];
        }
        let mut t = vec![0.0; n];
        for i in (0..n - 1).rev() {
            let f = self.decay[i];
            let h = 0.5 * self.width[i];
            t[i] = f * (t[i + 1] + h * g[i + 1]) + h * g[i];
        }
        (s, t)
    }

    /// Plain cumulative trapezoid `C_i = ∫_{x_0}^{x_i} g`.
    pub fn cumulative(&self, g: &[f64]) -> Vec<f64> {
        let n = self.pos.len();
        assert_eq!(g.len(), n, "amplitude array does not match lattice");
        let mut c = vec![0.0; n];
        for i in 1..n {
            c[i] = c[i - 1] + 0.5 * self.width[i - 1] * (g[i - 1] + g[i]);
        }
        c
    }
}

/// `(phi * f)` sampled on the grid of `f`.
pub fn conv_phi(f: &SampledField) -> Result<SampledField> {
    let lat = Lattice::from_coords(&f.coords)?;
    let (s, t) = lat.scan(&f.values);
    let values = s.iter().zip(&t).map(|(a, b)| a + b).collect();
    Ok(SampledField { coords: f.coords.clone(), values })
}

/// `(phi_x * f)` sampled on the grid of `f`.
pub fn conv_phix(f: &SampledField) -> Result<SampledField> {
    let lat = Lattice::from_coords(&f.coords)?;
    let (s, t) = lat.scan(&f.values);
    let values = s.iter().zip(&t).map(|(a, b)| b - a).collect();
    Ok(SampledField { coords: f.coords.clone(), values })
}

/// Integrand samples on a peak-split grid: one value per regular node plus the
/// two one-sided limits at the origin.
#[derive(Debug, Clone)]
pub struct PeakSamples {
    pub values: Vec<f64>,
    pub left0: f64,
    pub right0: f64,
}

/// Convolution output on a peak-split grid.
#[derive(Debug, Clone)]
pub struct ConvOut {
    pub values: Vec<f64>,
    pub at_zero: f64,
}

/// Grid with the origin inserted as a doubled node so that integrands with a
/// jump across the peak keep the trapezoid rule second order.
#[derive(Debug, Clone)]
pub struct SplitGrid {
    lattice: Lattice,
    n_neg: usize,
    n: usize,
}

impl SplitGrid {
    /// `coords` must be strictly increasing, exclude 0 and straddle it.
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        check_strictly_increasing(coords)?;
        let n_neg = coords.iter().take_while(|&&x| x < 0.0).count();
        if n_neg == 0 || n_neg == coords.len() {
            return Err(Error::InvalidGrid("grid must have nodes on both sides of 0".into()));
        }
        if coords.iter().any(|&x| x == 0.0) {
            return Err(Error::InvalidGrid("grid must not contain the peak node 0".into()));
        }
        let mut pos = Vec::with_capacity(coords.len() + 2);
        pos.extend_from_slice(&coords[..n_neg]);
        pos.push(0.0);
        pos.push(0.0);
        pos.extend_from_slice(&coords[n_neg..]);
        let width = pos.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { lattice: Lattice::new(pos, width)?, n_neg, n: coords.len() })
    }

    /// Build a split grid whose kernel positions come from `pos` (the image
    /// of the labels) while interval widths stay the label spacings; the
    /// caller folds the Jacobian into the amplitudes.
    pub fn from_labels(labels: &[f64], pos: &[f64]) -> Result<Self> {
        if labels.len() != pos.len() {
            return Err(Error::InvalidGrid("labels and positions differ in length".into()));
        }
        let n_neg = labels.iter().take_while(|&&x| x < 0.0).count();
        if n_neg == 0 || n_neg == labels.len() {
            return Err(Error::InvalidGrid("grid must have nodes on both sides of 0".into()));
        }
        let mut p = Vec::with_capacity(pos.len() + 2);
        p.extend_from_slice(&pos[..n_neg]);
        p.push(0.0);
        p.push(0.0);
        p.extend_from_slice(&pos[n_neg..]);
        let mut w = Vec::with_capacity(labels.len() + 1);
        for i in 0..n_neg - 1 {
            w.push(labels[i + 1] - labels[i]);
        }
        w.push(-labels[n_neg - 1]);
        w.push(0.0);
        w.push(labels[n_neg]);
        for i in n_neg..labels.len() - 1 {
            w.push(labels[i + 1] - labels[i]);
        }
        Ok(Self { lattice: Lattice::new(p, w)?, n_neg, n: labels.len() })
    }

    fn augment(&self, g: &PeakSamples) -> Vec<f64> {
        assert_eq!(g.values.len(), self.n, "sample count does not match grid");
        let mut a = Vec::with_capacity(self.n + 2);
        a.extend_from_slice(&g.values[..self.n_neg]);
        a.push(g.left0);
        a.push(g.right0);
        a.extend_from_slice(&g.values[self.n_neg..]);
        a
    }

    fn strip(&self, mut aug: Vec<f64>) -> ConvOut {
        let at_zero = aug[self.n_neg];
        aug.drain(self.n_neg..self.n_neg + 2);
        ConvOut { values: aug, at_zero }
    }

    pub fn conv_phi(&self, g: &PeakSamples) -> ConvOut {
        let (s, t) = self.lattice.scan(&self.augment(g));
        self.strip(s.iter().zip(&t).map(|(a, b)| a + b).collect())
    }

    pub fn conv_phix(&self, g: &PeakSamples) -> ConvOut {
        let (s, t) = self.lattice.scan(&self.augment(g));
        self.strip(s.iter().zip(&t).map(|(a, b)| b - a).collect())
    }

    /// `J_i = ∫_0^{x_i} g dy`, signed on the negative side.
    pub fn cumulative_from_peak(&self, g: &PeakSamples) -> Vec<f64> {
        let c = self.lattice.cumulative(&self.augment(g));
        let c0 = c[self.n_neg];
        let mut out = Vec::with_capacity(self.n);
        out.extend(c[..self.n_neg].iter().map(|v| v - c0));
        out.extend(c[self.n_neg + 2..].iter().map(|v| v - c0));
        out
    }
}

struct NonlocalScans {
    q: ConvOut,
    p: ConvOut,
}

/// Shared scans for Q[v] and P[v]: both are built from the integrands
/// `(3/2) v v_x² + v³` and `v_x³` with the kernels swapped.
fn nonlocal_scans(v: &PeakedFunction) -> Result<NonlocalScans> {
    let grid = SplitGrid::from_coords(v.coords())?;
    let cubic = |val: f64, slope: f64| 1.5 * val * slope * slope + val.powi(3);
    let g1 = PeakSamples {
        values: v
            .values()
            .iter()
            .zip(v.slopes())
            .map(|(&val, &sl)| cubic(val, sl))
            .collect(),
        left0: cubic(v.peak_value(), v.slope_left()),
        right0: cubic(v.peak_value(), v.slope_right()),
    };
    let g2 = PeakSamples {
        values: v.slopes().iter().map(|w| w.powi(3)).collect(),
        left0: v.slope_left().powi(3),
        right0: v.slope_right().powi(3),
    };
    let c1 = grid.conv_phix(&g1);
    let c2 = grid.conv_phi(&g1);
    let c3 = grid.conv_phi(&g2);
    let c4 = grid.conv_phix(&g2);
    let zip = |a: &ConvOut, b: &ConvOut, fa: f64, fb: f64| ConvOut {
        values: a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| fa * x + fb * y)
            .collect(),
        at_zero: fa * a.at_zero + fb * b.at_zero,
    };
    Ok(NonlocalScans {
        q: zip(&c1, &c3, 0.5, 0.25),
        p: zip(&c2, &c4, 0.5, 0.25),
    })
}

/// `Q[v] = ½ phi_x * ((3/2) v v_x² + v³) + ¼ phi * v_x³` on the grid of `v`.
pub fn q_functional(v: &PeakedFunction) -> Result<SampledField> {
    let scans = nonlocal_scans(v)?;
    Ok(SampledField { coords: v.coords().to_vec(), values: scans.q.values })
}

/// `P[v] = ½ phi * ((3/2) v v_x² + v³) + ¼ phi_x * v_x³` on the grid of `v`.
pub fn p_functional(v: &PeakedFunction) -> Result<SampledField> {
    let scans = nonlocal_scans(v)?;
    Ok(SampledField { coords: v.coords().to_vec(), values: scans.p.values })
}

/// `(Q[v](0), P[v](0))`; both are continuous across the peak.
pub fn pq_peak_values(v: &PeakedFunction) -> Result<(f64, f64)> {
    let scans = nonlocal_scans(v)?;
    Ok((scans.q.at_zero, scans.p.at_zero))
}

/// Sup-norm defect of the linear simplification identity
///
/// `(3/2) phi_x*(phi²v + ½ phi_x²v + phi phi_x v_x) + (3/4) phi*(phi_x² v_x)
///  = 3 phi_x [v(0) - phi v]`.
pub fn identity_residual_linear(v: &PeakedFunction) -> Result<f64> {
    let grid = SplitGrid::from_coords(v.coords())?;
    let n = v.coords().len();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let x = v.coords()[i];
        let e2 = (-2.0 * x.abs()).exp();
        let sgn = x.signum();
        a.push(e2 * (1.5 * v.values()[i] - sgn * v.slopes()[i]));
        b.push(e2 * v.slopes()[i]);
    }
    let a = PeakSamples {
        values: a,
        left0: 1.5 * v.peak_value() + v.slope_left(),
        right0: 1.5 * v.peak_value() - v.slope_right(),
    };
    let b = PeakSamples { values: b, left0: v.slope_left(), right0: v.slope_right() };
    let lhs_a = grid.conv_phix(&a);
    let lhs_b = grid.conv_phi(&b);
    let mut worst: f64 = (1.5 * lhs_a.at_zero + 0.75 * lhs_b.at_zero).abs();
    for i in 0..n {
        let x = v.coords()[i];
        let lhs = 1.5 * lhs_a.values[i] + 0.75 * lhs_b.values[i];
        let rhs = 3.0 * phi_x(x) * (v.peak_value() - phi(x) * v.values()[i]);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Sup-norm defect of `phi_x*(phi f) + phi*(phi_x f) + 2 phi(x) ∫_0^x f = 0`
/// for integrable `f`.
///
/// In the weighted moments the combination collapses pointwise:
/// `e^{y}(phi_x(y) - phi(y)) = -2` on `y > 0` and
/// `e^{-y}(phi_x(y) + phi(y)) = 2` on `y < 0`, leaving the unweighted
/// primitive of `f` anchored at the origin.
pub fn identity_residual_calc(f: &SampledField) -> Result<f64> {
    let grid = SplitGrid::from_coords(&f.coords)?;
    // f itself is continuous; interpolate its value at the origin.
    let k = f.coords.iter().take_while(|&&x| x < 0.0).count();
    let (xl, xr) = (f.coords[k - 1], f.coords[k]);
    let f0 = (f.values[k - 1] * xr - f.values[k] * xl) / (xr - xl);
    let n = f.coords.len();
    let mut pf = Vec::with_capacity(n);
    let mut pxf = Vec::with_capacity(n);
    for i in 0..n {
        let x = f.coords[i];
        pf.push(phi(x) * f.values[i]);
        pxf.push(phi_x(x) * f.values[i]);
    }
    let pf = PeakSamples { values: pf, left0: f0, right0: f0 };
    let pxf = PeakSamples { values: pxf, left0: f0, right0: -f0 };
    let plain = PeakSamples { values: f.values.clone(), left0: f0, right0: f0 };
    let c1 = grid.conv_phix(&pf);
    let c2 = grid.conv_phi(&pxf);
    let j = grid.cumulative_from_peak(&plain);
    let mut worst: f64 = (c1.at_zero + c2.at_zero).abs();
    for i in 0..n {
        let x = f.coords[i];
        worst = worst.max((c1.values[i] + c2.values[i] + 2.0 * phi(x) * j[i]).abs());
    }
    Ok(worst)
}

/// Sup-norm defect of the quadratic simplification identity
///
/// `½ phi_x*((3/2) phi v_x² + 3 phi_x v v_x + 3 phi v²) + (3/4) phi*(phi_x v_x²)
///  = -(3/2) phi_x [v² - v(0)²] - (3/2) phi ∫_0^x (v² + v_y²) dy`,
///
/// the cumulative term being the unweighted H¹ density (it enters through the
/// pointwise collapse noted at [`identity_residual_calc`]).
pub fn identity_residual_quadratic(v: &PeakedFunction) -> Result<f64> {
    let grid = SplitGrid::from_coords(v.coords())?;
    let n = v.coords().len();
    let mut c = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut h1_density = Vec::with_capacity(n);
    for i in 0..n {
        let x = v.coords()[i];
        let (val, sl) = (v.values()[i], v.slopes()[i]);
        let ph = phi(x);
        let sgn = x.signum();
        c.push(ph * (1.5 * sl * sl + 3.0 * val * val - 3.0 * sgn * val * sl));
        d.push(-sgn * ph * sl * sl);
        h1_density.push(val * val + sl * sl);
    }
    let (v0, sl, sr) = (v.peak_value(), v.slope_left(), v.slope_right());
    let c = PeakSamples {
        values: c,
        left0: 1.5 * sl * sl + 3.0 * v0 * v0 + 3.0 * v0 * sl,
        right0: 1.5 * sr * sr + 3.0 * v0 * v0 - 3.0 * v0 * sr,
    };
    let d = PeakSamples { values: d, left0: sl * sl, right0: -sr * sr };
    let dens = PeakSamples {
        values: h1_density,
        left0: v0 * v0 + sl * sl,
        right0: v0 * v0 + sr * sr,
    };
    let lhs_c = grid.conv_phix(&c);
    let lhs_d = grid.conv_phi(&d);
    let j = grid.cumulative_from_peak(&dens);
    let mut worst: f64 = (0.5 * lhs_c.at_zero + 0.75 * lhs_d.at_zero).abs();
    for i in 0..n {
        let x = v.coords()[i];
        let lhs = 0.5 * lhs_c.values[i] + 0.75 * lhs_d.values[i];
        let rhs = -1.5 * phi_x(x) * (v.values()[i] * v.values()[i] - v0 * v0)
            - 1.5 * phi(x) * j[i];
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_grid, InitialDatum};
    use approx::assert_relative_eq;

    fn default_grid() -> Vec<f64> {
        make_grid(25.0, 2000, 1.003).unwrap()
    }

    fn refined_grid() -> Vec<f64> {
        make_grid(25.0, 4000, 1.0015).unwrap()
    }

    fn peakon_field(coords: &[f64]) -> SampledField {
        let values = coords.iter().map(|&x| phi(x)).collect();
        SampledField::new(coords.to_vec(), values).unwrap()
    }

    /// O(N²) trapezoid quadrature of (kernel * f)(x_i), independent of the
    /// scan path.
    fn direct_conv(kernel: impl Fn(f64) -> f64, f: &SampledField, i: usize) -> f64 {
        let x = f.coords[i];
        let mut acc = 0.0;
        for j in 0..f.coords.len() - 1 {
            let (ya, yb) = (f.coords[j], f.coords[j + 1]);
            let ga = kernel(x - ya) * f.values[j];
            let gb = kernel(x - yb) * f.values[j + 1];
            acc += 0.5 * (yb - ya) * (ga + gb);
        }
        acc
    }

    #[test]
    fn peakon_profile_examples() {
        let p = PeakonParams::new(1.0, 0.0).unwrap();
        assert_eq!(peakon_profile(p, 0.0), 1.0);
        let p4 = PeakonParams::new(4.0, 0.0).unwrap();
        assert_eq!(peakon_profile(p4, 0.0), 2.0);
        assert_relative_eq!(peakon_profile(p, 1.0), (-1.0f64).exp(), max_relative = 1e-15);
        assert!(PeakonParams::new(0.0, 0.0).is_err());
        assert!(PeakonParams::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn conv_phi_of_peakon_matches_closed_form() {
        // (phi * phi)(x) = (1 + |x|) e^{-|x|}; at the origin this is the
        // integral of e^{-2|y|}, i.e. exactly 1.
        let f = peakon_field(&default_grid());
        let out = conv_phi(&f).unwrap();
        let mut worst: f64 = 0.0;
        for (x, v) in out.coords.iter().zip(&out.values) {
            let exact = (1.0 + x.abs()) * (-x.abs()).exp();
            worst = worst.max((v - exact).abs());
        }
        assert!(worst < 2e-6, "sup error {worst:.3e}");
    }

    #[test]
    fn conv_of_zero_is_zero() {
        let coords = default_grid();
        let zero = SampledField::new(coords.clone(), vec![0.0; coords.len()]).unwrap();
        assert!(conv_phi(&zero).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(conv_phix(&zero).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn helmholtz_inverse_recovers_gaussian() {
        // For g a Gaussian, (1 - d²/dx²) g = (2 - x²) g (unit variance), and
        // ½ phi * ((1-∂²)g) must recover g to quadrature accuracy.
        let sup_err = |coords: &[f64]| {
            let f = SampledField::new(
                coords.to_vec(),
                coords.iter().map(|&x| (2.0 - x * x) * (-0.5 * x * x).exp()).collect(),
            )
            .unwrap();
            let out = conv_phi(&f).unwrap();
            let mut worst: f64 = 0.0;
            for (x, v) in out.coords.iter().zip(&out.values) {
                worst = worst.max((0.5 * v - (-0.5 * x * x).exp()).abs());
            }
            worst
        };
        let coarse = sup_err(&default_grid());
        assert!(coarse < 5e-6, "sup error {coarse:.3e}");
        let fine = sup_err(&refined_grid());
        assert!(coarse / fine >= 3.0, "second-order ratio {:.2}", coarse / fine);
    }

    #[test]
    fn conv_phix_odd_kernel_kills_even_input_at_origin() {
        let coords = default_grid();
        let grid = SplitGrid::from_coords(&coords).unwrap();
        let g = PeakSamples {
            values: coords.iter().map(|&x| phi(x)).collect(),
            left0: 1.0,
            right0: 1.0,
        };
        // Mirror symmetry of the grid makes the two scans cancel exactly.
        assert_eq!(grid.conv_phix(&g).at_zero, 0.0);
    }

    #[test]
    fn scan_agrees_with_direct_quadrature() {
        let coords = make_grid(25.0, 5000, 1.0012).unwrap();
        let f = SampledField::new(coords.iter().map(|&x| x).collect(), coords.iter().map(|&x| phi(x) * phi(x)).collect()).unwrap();
        let out = conv_phix(&f).unwrap();
        let scale = out.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for &i in &[0usize, 137, 2500, 5000, 7321, 9999] {
            let direct = direct_conv(|z| -z.signum() * (-z.abs()).exp(), &f, i);
            assert!(
                (out.values[i] - direct).abs() <= 1e-10 * scale,
                "node {i}: scan {} vs direct {}",
                out.values[i],
                direct
            );
        }
    }

    #[test]
    fn scan_is_finite_on_very_wide_domains() {
        // Shifted recurrences keep every exponent non-positive, so a domain
        // half-width of 400 must not overflow.
        let n = 4000;
        let coords: Vec<f64> = (0..=2 * n)
            .filter(|&i| i != n)
            .map(|i| (i as f64 - n as f64) * 0.1)
            .collect();
        let f = SampledField::new(coords.clone(), coords.iter().map(|&x| phi(x)).collect()).unwrap();
        let out = conv_phi(&f).unwrap();
        assert!(out.values.iter().all(|v| v.is_finite()));
        let mid = coords.iter().position(|&x| x > 0.0).unwrap();
        assert_relative_eq!(out.values[mid], 1.0, max_relative = 1e-2);
    }

    #[test]
    fn q_functional_on_zero_and_homogeneity() {
        let datum = InitialDatum::Gaussian { amplitude: 0.3, sigma: 0.8, center: 0.7 };
        let v = datum.sample(&default_grid()).unwrap();
        let zero = InitialDatum::Zero.sample(&default_grid()).unwrap();
        assert!(q_functional(&zero).unwrap().values.iter().all(|&x| x == 0.0));
        assert!(p_functional(&zero).unwrap().values.iter().all(|&x| x == 0.0));

        let q1 = q_functional(&v).unwrap();
        let q2 = q_functional(&v.scaled(2.0)).unwrap();
        let scale = q2.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in q1.values.iter().zip(&q2.values) {
            assert!((8.0 * a - b).abs() <= 1e-12 * scale, "cubic homogeneity violated");
        }
        let p1 = p_functional(&v).unwrap();
        let p2 = p_functional(&v.scaled(2.0)).unwrap();
        for (a, b) in p1.values.iter().zip(&p2.values) {
            assert!((8.0 * a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn stationary_peakon_residual() {
        // (phi² - 1) phi_x + Q[phi] = 0 away from the corner.
        let v = InitialDatum::ScaledPeakon { amplitude: 1.0 }
            .sample(&default_grid())
            .unwrap();
        let q = q_functional(&v).unwrap();
        let mut worst: f64 = 0.0;
        for (x, qv) in q.coords.iter().zip(&q.values) {
            let res = (phi(x.clone()).powi(2) - 1.0) * phi_x(*x) + qv;
            worst = worst.max(res.abs());
        }
        assert!(worst < 1e-6, "stationary residual {worst:.3e}");
    }

    #[test]
    fn peak_values_of_p_plus_q_obey_cubic_bound() {
        // |P[v](0) + Q[v](0)| <= (3/2)||v||³_{H1} + ½||v_x||³_{L3}
        let datum = InitialDatum::Gaussian { amplitude: 0.05, sigma: 1.2, center: -0.4 };
        let v = datum.sample(&default_grid()).unwrap();
        let (q0, p0) = pq_peak_values(&v).unwrap();
        let h1 = v.energy_e().sqrt();
        let l3 = v.integrate(|_, w| w.abs().powi(3)).powf(1.0);
        let bound = 1.5 * h1.powi(3) + 0.5 * l3;
        assert!((p0 + q0).abs() <= bound, "|P+Q|(0) = {} vs bound {}", (p0 + q0).abs(), bound);
    }

    #[test]
    fn linear_identity_residual() {
        let grid = default_grid();
        let phi_pf = InitialDatum::ScaledPeakon { amplitude: 1.0 }.sample(&grid).unwrap();
        let zero = InitialDatum::Zero.sample(&grid).unwrap();
        let bump = InitialDatum::Gaussian { amplitude: 1.0, sigma: 1.0, center: 1.0 }
            .sample(&grid)
            .unwrap();
        assert_eq!(identity_residual_linear(&zero).unwrap(), 0.0);
        assert!(identity_residual_linear(&phi_pf).unwrap() < 1e-6);
        assert!(identity_residual_linear(&bump).unwrap() < 1e-6);
    }

    #[test]
    fn calc_identity_residual() {
        let grid = default_grid();
        let f = peakon_field(&grid);
        assert!(identity_residual_calc(&f).unwrap() < 1e-6);
        let zero = SampledField::new(grid.clone(), vec![0.0; grid.len()]).unwrap();
        assert_eq!(identity_residual_calc(&zero).unwrap(), 0.0);
        // smoothed indicator of [-1, 1]
        let bump = SampledField::new(
            grid.clone(),
            grid.iter()
                .map(|&x| 0.5 * (((x + 1.0) / 0.2).tanh() - ((x - 1.0) / 0.2).tanh()))
                .collect(),
        )
        .unwrap();
        assert!(identity_residual_calc(&bump).unwrap() < 1e-6);
    }

    #[test]
    fn quadratic_identity_residual() {
        let grid = default_grid();
        let phi_pf = InitialDatum::ScaledPeakon { amplitude: 1.0 }.sample(&grid).unwrap();
        let zero = InitialDatum::Zero.sample(&grid).unwrap();
        let peaked = InitialDatum::PeakedExponential {
            amplitude: 0.4,
            beta: 0.9,
            slope_right: -0.3,
            slope_left: 0.2,
        }
        .sample(&grid)
        .unwrap();
        assert_eq!(identity_residual_quadratic(&zero).unwrap(), 0.0);
        assert!(identity_residual_quadratic(&phi_pf).unwrap() < 1e-6);
        assert!(identity_residual_quadratic(&peaked).unwrap() < 1e-6);
    }

    #[test]
    fn identity_residuals_converge_at_second_order() {
        let coarse = InitialDatum::ScaledPeakon { amplitude: 1.0 }
            .sample(&default_grid())
            .unwrap();
        let fine = InitialDatum::ScaledPeakon { amplitude: 1.0 }
            .sample(&refined_grid())
            .unwrap();
        for (rc, rf) in [
            (
                identity_residual_linear(&coarse).unwrap(),
                identity_residual_linear(&fine).unwrap(),
            ),
            (
                identity_residual_quadratic(&coarse).unwrap(),
                identity_residual_quadratic(&fine).unwrap(),
            ),
        ] {
            assert!(rc / rf >= 3.0, "refinement ratio {:.2} below second order", rc / rf);
        }
    }
}
