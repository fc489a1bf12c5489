use peakon_core::field::{make_grid, InitialDatum};
use peakon_core::kernel::*;

fn main() {
    for (n, ratio) in [(2000usize, 1.003f64), (3000, 1.002), (4000, 1.0015), (2000, 1.004), (1500, 1.004)] {
        let g = make_grid(25.0, n, ratio).unwrap();
        let inner = g[n] ;
        let outer = g[2*n-1] - g[2*n-2];
        let phi_pf = InitialDatum::ScaledPeakon { amplitude: 1.0 }.sample(&g).unwrap();
        let rl = identity_residual_linear(&phi_pf).unwrap();
        let rq = identity_residual_quadratic(&phi_pf).unwrap();
        let f = SampledField::new(g.clone(), g.iter().map(|&x| (-x.abs() as f64).exp()).collect()).unwrap();
        let rc = identity_residual_calc(&f).unwrap();
        // helmholtz
        let hf = SampledField::new(g.clone(), g.iter().map(|&x| (2.0 - x*x)*(-0.5*x*x).exp()).collect()).unwrap();
        let out = conv_phi(&hf).unwrap();
        let mut hw: f64 = 0.0;
        for (x, v) in out.coords.iter().zip(&out.values) {
            hw = hw.max((0.5*v - (-0.5*x*x).exp()).abs());
        }
        println!("n={n} ratio={ratio}: d0={inner:.2e} hmax={outer:.2e} lin={rl:.2e} quad={rq:.2e} calc={rc:.2e} helm={hw:.2e}");
    }
}
