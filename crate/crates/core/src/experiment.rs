//! Experiment harness: flat key-value configs, scenario runners and CSV
//! artifacts. One process runs one scenario deterministically; identical
//! configs produce byte-identical output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::characteristics::{evolve, init_ensemble, reconstruct, BreakdownKind, Thresholds};
use crate::diagnostics::{
    audit_pq_bound, check_blowup_consistency, fit_exponential_rate, instability_time_estimate,
    riccati_blowup_time, DiagnosticsRecord, PqAudit, RiccatiComparison,
};
use crate::direct::{compare, direct_evolve, DirectState};
use crate::error::Result;
use crate::field::{fmt, make_grid, InitialDatum, PeakedFunction, Side};
use crate::kernel::{
    identity_residual_calc, identity_residual_linear, identity_residual_quadratic, phi,
    SampledField,
};
use crate::linear::{growth_lower_bound, linear_solution_field};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Identities,
    Linear,
    Nonlinear,
    Instability,
    Blowup,
    OracleCompare,
}

impl Scenario {
    fn as_str(self) -> &'static str {
        match self {
            Scenario::Identities => "identities",
            Scenario::Linear => "linear",
            Scenario::Nonlinear => "nonlinear",
            Scenario::Instability => "instability",
            Scenario::Blowup => "blowup",
            Scenario::OracleCompare => "oracle_compare",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "identities" => Scenario::Identities,
            "linear" => Scenario::Linear,
            "nonlinear" => Scenario::Nonlinear,
            "instability" => Scenario::Instability,
            "blowup" => Scenario::Blowup,
            "oracle_compare" => Scenario::OracleCompare,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Zero,
    ScaledPeakon,
    PeakedExponential,
    Gaussian,
}

impl Family {
    fn as_str(self) -> &'static str {
        match self {
            Family::Zero => "zero",
            Family::ScaledPeakon => "scaled_peakon",
            Family::PeakedExponential => "peaked_exponential",
            Family::Gaussian => "gaussian",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "zero" => Family::Zero,
            "scaled_peakon" => Family::ScaledPeakon,
            "peaked_exponential" => Family::PeakedExponential,
            "gaussian" => Family::Gaussian,
            _ => return None,
        })
    }
}

/// Fully-resolved parameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    // grid
    pub l: f64,
    pub n: usize,
    pub ratio: f64,
    // time control
    pub dt: f64,
    pub t_end: f64,
    pub record_interval: f64,
    // datum
    pub family: Family,
    pub amplitude: f64,
    pub beta: f64,
    pub slope_right: f64,
    pub slope_left: f64,
    pub sigma: f64,
    pub center: f64,
    /// When positive, rescale the sampled datum to this H¹ norm.
    pub h1_target: f64,
    // analysis parameters
    pub eps: f64,
    pub c0: f64,
    pub c_growth: f64,
    // thresholds and audit tolerances
    pub slope_blowup_threshold: f64,
    pub jacobian_threshold: f64,
    pub e_drift_tol: f64,
    pub f_drift_tol: f64,
    pub h1_drift_tol: f64,
    pub identity_tol: f64,
    pub oracle_tol: f64,
    // direct-solver controls
    pub oracle_l: f64,
    pub oracle_dx: f64,
    pub oracle_dt: f64,
    pub oracle_nu: f64,
    pub oracle_exclude_cells: usize,
    // bookkeeping
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Identities,
            l: 25.0,
            n: 2000,
            ratio: 1.003,
            dt: 1e-3,
            t_end: 2.0,
            record_interval: 0.01,
            family: Family::Zero,
            amplitude: 0.0,
            beta: 1.0,
            slope_right: 0.0,
            slope_left: 0.0,
            sigma: 1.0,
            center: 0.0,
            h1_target: 0.0,
            eps: 0.05,
            c0: 50.0,
            c_growth: 1.0,
            slope_blowup_threshold: 1e6,
            jacobian_threshold: 1e-8,
            e_drift_tol: 1e-3,
            f_drift_tol: 3e-3,
            h1_drift_tol: 1e-4,
            identity_tol: 1e-6,
            oracle_tol: 1e-2,
            oracle_l: 20.0,
            oracle_dx: 2e-3,
            oracle_dt: 1.8e-3,
            oracle_nu: 1e-5,
            oracle_exclude_cells: 2,
            seed: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Config-file errors carry the line or field they refer to.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("field `{field}`: {message}")]
    Validation { field: &'static str, message: String },
}

/// Parse `key = value` lines (`#` comments allowed, unknown keys rejected)
/// into a fully-validated config with defaults applied.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |message: String| ConfigError::Parse { line: line_no, message };
        let as_f64 = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| bad(format!("`{key}` expects a number, got `{v}`")))
        };
        let as_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| bad(format!("`{key}` expects a non-negative integer, got `{v}`")))
        };
        match key {
            "scenario" => {
                cfg.scenario = Scenario::parse(value)
                    .ok_or_else(|| bad(format!("unknown scenario `{value}`")))?
            }
            "family" => {
                cfg.family =
                    Family::parse(value).ok_or_else(|| bad(format!("unknown family `{value}`")))?
            }
            "l" => cfg.l = as_f64(value)?,
            "n" => cfg.n = as_usize(value)?,
            "ratio" => cfg.ratio = as_f64(value)?,
            "dt" => cfg.dt = as_f64(value)?,
            "t_end" => cfg.t_end = as_f64(value)?,
            "record_interval" => cfg.record_interval = as_f64(value)?,
            "amplitude" => cfg.amplitude = as_f64(value)?,
            "beta" => cfg.beta = as_f64(value)?,
            "slope_right" => cfg.slope_right = as_f64(value)?,
            "slope_left" => cfg.slope_left = as_f64(value)?,
            "sigma" => cfg.sigma = as_f64(value)?,
            "center" => cfg.center = as_f64(value)?,
            "h1_target" => cfg.h1_target = as_f64(value)?,
            "eps" => cfg.eps = as_f64(value)?,
            "c0" => cfg.c0 = as_f64(value)?,
            "c_growth" => cfg.c_growth = as_f64(value)?,
            "slope_blowup_threshold" => cfg.slope_blowup_threshold = as_f64(value)?,
            "jacobian_threshold" => cfg.jacobian_threshold = as_f64(value)?,
            "e_drift_tol" => cfg.e_drift_tol = as_f64(value)?,
            "f_drift_tol" => cfg.f_drift_tol = as_f64(value)?,
            "h1_drift_tol" => cfg.h1_drift_tol = as_f64(value)?,
            "identity_tol" => cfg.identity_tol = as_f64(value)?,
            "oracle_tol" => cfg.oracle_tol = as_f64(value)?,
            "oracle_l" => cfg.oracle_l = as_f64(value)?,
            "oracle_dx" => cfg.oracle_dx = as_f64(value)?,
            "oracle_dt" => cfg.oracle_dt = as_f64(value)?,
            "oracle_nu" => cfg.oracle_nu = as_f64(value)?,
            "oracle_exclude_cells" => cfg.oracle_exclude_cells = as_usize(value)?,
            "seed" => {
                cfg.seed = value
                    .parse::<u64>()
                    .map_err(|_| bad(format!("`seed` expects an integer, got `{value}`")))?
            }
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            _ => return Err(bad(format!("unknown key `{key}`"))),
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig) -> std::result::Result<(), ConfigError> {
    let positive = |field: &'static str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(ConfigError::Validation { field, message: format!("must be positive, got {v}") })
        }
    };
    positive("dt", cfg.dt)?;
    positive("t_end", cfg.t_end)?;
    positive("record_interval", cfg.record_interval)?;
    positive("ratio", cfg.ratio)?;
    positive("eps", cfg.eps)?;
    positive("slope_blowup_threshold", cfg.slope_blowup_threshold)?;
    if cfg.l < 20.0 {
        return Err(ConfigError::Validation {
            field: "l",
            message: format!("half-width must be >= 20, got {}", cfg.l),
        });
    }
    if cfg.n < 16 {
        return Err(ConfigError::Validation {
            field: "n",
            message: format!("need at least 16 nodes per side, got {}", cfg.n),
        });
    }
    if cfg.ratio < 1.0 {
        return Err(ConfigError::Validation {
            field: "ratio",
            message: "clustering factor must be >= 1".into(),
        });
    }
    if cfg.scenario == Scenario::OracleCompare {
        positive("oracle_dx", cfg.oracle_dx)?;
        positive("oracle_dt", cfg.oracle_dt)?;
        positive("oracle_l", cfg.oracle_l)?;
    }
    Ok(())
}

/// Canonical text form; `parse(serialize(cfg)) == cfg` and serialization is
/// byte-stable.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    fn num(s: &mut String, k: &str, v: f64) {
        writeln!(s, "{k} = {v}").unwrap();
    }
    let mut s = String::new();
    writeln!(s, "scenario = {}", cfg.scenario.as_str()).unwrap();
    writeln!(s, "l = {}", cfg.l).unwrap();
    writeln!(s, "n = {}", cfg.n).unwrap();
    num(&mut s, "ratio", cfg.ratio);
    num(&mut s, "dt", cfg.dt);
    num(&mut s, "t_end", cfg.t_end);
    num(&mut s, "record_interval", cfg.record_interval);
    writeln!(s, "family = {}", cfg.family.as_str()).unwrap();
    num(&mut s, "amplitude", cfg.amplitude);
    num(&mut s, "beta", cfg.beta);
    num(&mut s, "slope_right", cfg.slope_right);
    num(&mut s, "slope_left", cfg.slope_left);
    num(&mut s, "sigma", cfg.sigma);
    num(&mut s, "center", cfg.center);
    num(&mut s, "h1_target", cfg.h1_target);
    num(&mut s, "eps", cfg.eps);
    num(&mut s, "c0", cfg.c0);
    num(&mut s, "c_growth", cfg.c_growth);
    num(&mut s, "slope_blowup_threshold", cfg.slope_blowup_threshold);
    num(&mut s, "jacobian_threshold", cfg.jacobian_threshold);
    num(&mut s, "e_drift_tol", cfg.e_drift_tol);
    num(&mut s, "f_drift_tol", cfg.f_drift_tol);
    num(&mut s, "h1_drift_tol", cfg.h1_drift_tol);
    num(&mut s, "identity_tol", cfg.identity_tol);
    num(&mut s, "oracle_tol", cfg.oracle_tol);
    num(&mut s, "oracle_l", cfg.oracle_l);
    num(&mut s, "oracle_dx", cfg.oracle_dx);
    num(&mut s, "oracle_dt", cfg.oracle_dt);
    num(&mut s, "oracle_nu", cfg.oracle_nu);
    writeln!(s, "oracle_exclude_cells = {}", cfg.oracle_exclude_cells).unwrap();
    writeln!(s, "seed = {}", cfg.seed).unwrap();
    writeln!(s, "output_dir = {}", cfg.output_dir.display()).unwrap();
    s
}

/// Outcome of one run: the report key-values and the audits that failed.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub passed: bool,
    pub failures: Vec<String>,
    pub report: Vec<(String, String)>,
}

impl RunOutcome {
    fn new() -> Self {
        Self { passed: true, failures: Vec::new(), report: Vec::new() }
    }

    fn audit(&mut self, name: &str, ok: bool, detail: String) {
        self.report.push((format!("audit_{name}"), if ok { "pass".into() } else { detail.clone() }));
        if !ok {
            self.passed = false;
            self.failures.push(format!("{name}: {detail}"));
        }
    }

    fn kv(&mut self, key: &str, value: String) {
        self.report.push((key.to_string(), value));
    }
}

pub fn datum_from_config(cfg: &ExperimentConfig) -> InitialDatum {
    match cfg.family {
        Family::Zero => InitialDatum::Zero,
        Family::ScaledPeakon => InitialDatum::ScaledPeakon { amplitude: cfg.amplitude },
        Family::PeakedExponential => InitialDatum::PeakedExponential {
            amplitude: cfg.amplitude,
            beta: cfg.beta,
            slope_right: cfg.slope_right,
            slope_left: cfg.slope_left,
        },
        Family::Gaussian => InitialDatum::Gaussian {
            amplitude: cfg.amplitude,
            sigma: cfg.sigma,
            center: cfg.center,
        },
    }
}

fn sample_datum(cfg: &ExperimentConfig, coords: &[f64]) -> Result<PeakedFunction> {
    let v0 = datum_from_config(cfg).sample(coords)?;
    if cfg.h1_target > 0.0 {
        let norm = v0.h1_norm();
        if norm > 0.0 {
            return Ok(v0.scaled(cfg.h1_target / norm));
        }
    }
    Ok(v0)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_trajectory(dir: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut s = String::with_capacity(records.len() * 240);
    s.push_str(DiagnosticsRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    write_file(dir, "trajectory.csv", &s)
}

fn write_snapshot_file(dir: &Path, name: &str, f: &PeakedFunction, t: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    f.write_snapshot(t, &mut buf)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}

fn write_report(dir: &Path, out: &RunOutcome) -> Result<()> {
    let mut s = String::new();
    for (k, v) in &out.report {
        writeln!(s, "{k} = {v}").unwrap();
    }
    writeln!(s, "passed = {}", out.passed).unwrap();
    write_file(dir, "report.txt", &s)
}

/// Run the configured scenario, writing `manifest`, CSV artifacts and
/// `report.txt` into the output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    fs::create_dir_all(&cfg.output_dir)?;
    write_file(&cfg.output_dir, "manifest", &serialize_config(cfg))?;
    let mut out = match cfg.scenario {
        Scenario::Identities => run_identities(cfg),
        Scenario::Linear => run_linear(cfg),
        Scenario::Nonlinear => run_nonlinear(cfg),
        Scenario::Instability => run_instability(cfg),
        Scenario::Blowup => run_blowup(cfg),
        Scenario::OracleCompare => run_oracle_compare(cfg),
    }?;
    out.report.sort_by(|a, b| a.0.cmp(&b.0));
    write_report(&cfg.output_dir, &out)?;
    Ok(out)
}

/// Seeded family of peaked test data for the identity suite.
pub fn random_peaked_data(seed: u64, count: usize) -> Vec<InitialDatum> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            if i % 2 == 0 {
                InitialDatum::Gaussian {
                    amplitude: rng.gen_range(0.1..0.5),
                    sigma: rng.gen_range(0.6..1.6),
                    center: rng.gen_range(-2.0..2.0),
                }
            } else {
                InitialDatum::PeakedExponential {
                    amplitude: rng.gen_range(-0.4..0.4),
                    beta: rng.gen_range(0.5..1.0),
                    slope_right: rng.gen_range(-0.6..0.6),
                    slope_left: rng.gen_range(-0.6..0.6),
                }
            }
        })
        .collect()
}

struct IdentityResiduals {
    linear: f64,
    calc: f64,
    quadratic: f64,
}

fn identity_residuals(datum: &InitialDatum, coords: &[f64]) -> Result<IdentityResiduals> {
    let v = datum.sample(coords)?;
    let f = SampledField::new(coords.to_vec(), coords.iter().map(|&x| datum.value_at(x)).collect())?;
    Ok(IdentityResiduals {
        linear: identity_residual_linear(&v)?,
        calc: identity_residual_calc(&f)?,
        quadratic: identity_residual_quadratic(&v)?,
    })
}

fn run_identities(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let mut out = RunOutcome::new();
    let coords = make_grid(cfg.l, cfg.n, cfg.ratio)?;
    let refined = make_grid(cfg.l, 2 * cfg.n, 1.0 + 0.5 * (cfg.ratio - 1.0))?;
    let mut data = vec![InitialDatum::ScaledPeakon { amplitude: 1.0 }];
    data.extend(random_peaked_data(cfg.seed, 5));

    let mut csv = String::from("dataset,grid,linear,calc,quadratic\n");
    let mut max_default = [0.0f64; 3];
    let mut max_refined = [0.0f64; 3];
    for (k, datum) in data.iter().enumerate() {
        for (tag, grid, maxes) in [
            ("default", &coords, &mut max_default),
            ("refined", &refined, &mut max_refined),
        ] {
            let r = identity_residuals(datum, grid)?;
            writeln!(csv, "{k},{tag},{},{},{}", fmt(r.linear), fmt(r.calc), fmt(r.quadratic))
                .unwrap();
            maxes[0] = maxes[0].max(r.linear);
            maxes[1] = maxes[1].max(r.calc);
            maxes[2] = maxes[2].max(r.quadratic);
        }
    }
    write_file(&cfg.output_dir, "identities.csv", &csv)?;

    for (i, name) in ["linear", "calc", "quadratic"].iter().enumerate() {
        out.kv(&format!("residual_{name}"), fmt(max_default[i]));
        out.audit(
            &format!("identity_{name}"),
            max_default[i] <= cfg.identity_tol,
            format!("max residual {:.3e} over {:.1e}", max_default[i], cfg.identity_tol),
        );
        let ratio = max_default[i] / max_refined[i].max(1e-300);
        out.kv(&format!("refinement_ratio_{name}"), format!("{ratio:.3}"));
        out.audit(
            &format!("identity_{name}_refinement"),
            ratio >= 3.0,
            format!("refinement ratio {ratio:.2} below 3"),
        );
    }
    Ok(out)
}

fn run_linear(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let mut out = RunOutcome::new();
    let coords = make_grid(cfg.l, cfg.n, cfg.ratio)?;
    let v0 = sample_datum(cfg, &coords)?;
    let p0 = v0.h1_norm_halfline(Side::Plus).powi(2);
    let m0 = v0.h1_norm_halfline(Side::Minus).powi(2);

    let mut csv = String::from("t,H1_plus,H1_minus,Linf_vx_plus,bound\n");
    let steps = (cfg.t_end / cfg.record_interval).round().max(1.0) as usize;
    let mut max_p_drift: f64 = 0.0;
    let mut max_m_drift: f64 = 0.0;
    let mut bound_ok = true;
    for k in 0..=steps {
        let t = k as f64 * cfg.record_interval;
        let f = linear_solution_field(t, &v0);
        let p = f.h1_norm_halfline(Side::Plus).powi(2);
        let m = f.h1_norm_halfline(Side::Minus).powi(2);
        let sup = f.linf_slope(Side::Plus);
        let bound = growth_lower_bound(t, &v0);
        writeln!(
            csv,
            "{},{},{},{},{}",
            fmt(t),
            fmt(p.sqrt()),
            fmt(m.sqrt()),
            fmt(sup),
            fmt(bound)
        )
        .unwrap();
        if p0 > 0.0 {
            max_p_drift = max_p_drift.max((p - p0).abs() / p0);
        }
        if m0 > 0.0 {
            max_m_drift = max_m_drift.max((m - m0).abs() / m0);
        }
        bound_ok &= sup >= bound - 1e-12;
        if k == steps {
            write_snapshot_file(&cfg.output_dir, "snapshot_final.csv", &f, t)?;
        }
    }
    write_file(&cfg.output_dir, "linear.csv", &csv)?;
    write_snapshot_file(&cfg.output_dir, "snapshot_initial.csv", &v0, 0.0)?;

    out.kv("h1_drift_plus", fmt(max_p_drift));
    out.kv("h1_drift_minus", fmt(max_m_drift));
    out.audit(
        "linear_h1_conservation",
        max_p_drift <= cfg.h1_drift_tol && max_m_drift <= cfg.h1_drift_tol,
        format!("H1 half-line drift ({max_p_drift:.3e}, {max_m_drift:.3e}) over {:.1e}", cfg.h1_drift_tol),
    );
    out.audit("linear_growth_bound", bound_ok, "measured sup slope under the lower bound".into());
    Ok(out)
}

/// Shared trajectory bookkeeping for the nonlinear scenarios.
struct TrajectoryRun {
    records: Vec<DiagnosticsRecord>,
    breakdown: Option<(BreakdownKind, f64, String)>,
    u0x_linf: f64,
    v0_h1: f64,
}

fn run_trajectory(cfg: &ExperimentConfig, dt: f64) -> Result<TrajectoryRun> {
    let coords = make_grid(cfg.l, cfg.n, cfg.ratio)?;
    let v0 = sample_datum(cfg, &coords)?;
    let mut e = init_ensemble(&v0);
    let th = Thresholds { slope_blowup: cfg.slope_blowup_threshold, jacobian_min: cfg.jacobian_threshold };
    let (records, outcome) = evolve(&mut e, cfg.t_end, dt, &th, cfg.record_interval)?;
    let (profile, _) = reconstruct(&init_ensemble(&v0));
    Ok(TrajectoryRun {
        records,
        breakdown: outcome.breakdown.map(|b| (b.kind, b.t, b.detail)),
        u0x_linf: profile.w1inf_norm(),
        v0_h1: v0.h1_norm(),
    })
}

fn conservation_audits(out: &mut RunOutcome, cfg: &ExperimentConfig, records: &[DiagnosticsRecord]) {
    let e0 = records[0].e;
    let f0 = records[0].f;
    let mut e_drift: f64 = 0.0;
    let mut f_drift: f64 = 0.0;
    for r in records {
        e_drift = e_drift.max((r.e - e0).abs() / e0.abs().max(1e-300));
        f_drift = f_drift.max((r.f - f0).abs() / f0.abs().max(1e-300));
    }
    out.kv("E_drift", fmt(e_drift));
    out.kv("F_drift", fmt(f_drift));
    out.audit(
        "energy_e_conserved",
        e_drift <= cfg.e_drift_tol,
        format!("relative E drift {e_drift:.3e} over {:.1e}", cfg.e_drift_tol),
    );
    out.audit(
        "energy_f_conserved",
        f_drift <= cfg.f_drift_tol,
        format!("relative F drift {f_drift:.3e} over {:.1e}", cfg.f_drift_tol),
    );
}

fn stability_and_pq_audits(
    out: &mut RunOutcome,
    cfg: &ExperimentConfig,
    run: &TrajectoryRun,
) {
    let pq_max = run.records.iter().fold(0.0f64, |m, r| m.max(r.pq0.abs()));
    out.kv("pq_max", fmt(pq_max));
    let gated = run.v0_h1 < cfg.eps.powi(4);
    if gated {
        // Theorem-style running bound on the perturbation norm.
        let cap = 2.0 * (4.0 + run.u0x_linf.sqrt()) * cfg.eps;
        let h1_max = run.records.iter().fold(0.0f64, |m, r| m.max(r.h1_v));
        out.audit(
            "h1_stability_bound",
            h1_max < cap,
            format!("max ||v||_H1 {h1_max:.3e} over cap {cap:.3e}"),
        );
        let worst = run
            .records
            .iter()
            .map(|r| audit_pq_bound(r.pq0, cfg.eps, run.u0x_linf, cfg.c0, run.v0_h1))
            .find(|a| *a == PqAudit::Fail);
        out.audit(
            "pq_smallness",
            worst.is_none(),
            "measured |P+Q|(0) over the frozen C0 bound".into(),
        );
    } else {
        out.kv("audit_h1_stability_bound", "skipped (||v0|| >= eps^4)".into());
        out.kv("audit_pq_smallness", "skipped (||v0|| >= eps^4)".into());
    }
}

fn run_nonlinear(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let mut out = RunOutcome::new();
    let run = run_trajectory(cfg, cfg.dt)?;
    write_trajectory(&cfg.output_dir, &run.records)?;
    let coords = make_grid(cfg.l, cfg.n, cfg.ratio)?;
    let v0 = sample_datum(cfg, &coords)?;
    write_snapshot_file(&cfg.output_dir, "snapshot_initial.csv", &v0, 0.0)?;

    out.audit(
        "completed",
        run.breakdown.is_none(),
        run.breakdown
            .as_ref()
            .map(|(k, t, d)| format!("breakdown {k:?} at t = {t:.6}: {d}"))
            .unwrap_or_default(),
    );
    conservation_audits(&mut out, cfg, &run.records);
    stability_and_pq_audits(&mut out, cfg, &run);
    let qs_min = run.records.iter().fold(f64::INFINITY, |m, r| m.min(r.qs_min));
    out.kv("qs_min", fmt(qs_min));
    out.audit("jacobian_positive", qs_min > 0.0, format!("min q_s {qs_min:.3e}"));
    Ok(out)
}

fn run_instability(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let mut out = RunOutcome::new();
    let run = run_trajectory(cfg, cfg.dt)?;
    write_trajectory(&cfg.output_dir, &run.records)?;

    let (rate, r2) = fit_exponential_rate(&run.records, (1e-3, 1e-1));
    out.kv("rate", fmt(rate));
    out.kv("r2", fmt(r2));
    out.kv("t0_estimate", fmt(instability_time_estimate(cfg.eps, cfg.c_growth)));
    out.audit(
        "growth_rate_unit",
        (rate - 1.0).abs() <= 0.1 && r2 >= 0.99,
        format!("rate {rate:.4} (want 1.0 +- 0.1), r2 {r2:.5} (want >= 0.99)"),
    );
    // ||u_x - phi_x(. - a)||_inf = sup |W|: must cross 1 before breakdown/t_end
    let crossing = run
        .records
        .iter()
        .find(|r| r.linf_vx_plus.max(r.linf_vx_minus) > 1.0)
        .map(|r| r.t);
    match crossing {
        Some(t) => out.kv("gradient_crossing_t", fmt(t)),
        None => out.kv("gradient_crossing_t", "none".into()),
    }
    out.audit(
        "gradient_leaves_unit_ball",
        crossing.is_some(),
        "sup |u_x - phi_x| never crossed 1".into(),
    );
    if let Some((kind, t, _)) = &run.breakdown {
        out.kv("T_num", fmt(*t));
        out.kv("breakdown_kind", format!("{kind:?}"));
    }
    stability_and_pq_audits(&mut out, cfg, &run);
    Ok(out)
}

fn run_blowup(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let mut out = RunOutcome::new();
    // reference run plus dt-halving reruns until the breakdown time settles
    let mut dts = vec![cfg.dt];
    let mut times = Vec::new();
    let mut kinds = Vec::new();
    let mut records_main = None;
    for pass in 0..4 {
        let dt = cfg.dt / 2f64.powi(pass);
        dts.truncate(pass as usize);
        dts.push(dt);
        let run = run_trajectory(cfg, dt)?;
        match &run.breakdown {
            Some((kind, t, _)) => {
                times.push(*t);
                kinds.push(*kind);
            }
            None => {
                times.push(f64::INFINITY);
                kinds.push(BreakdownKind::SlopeBlowup);
            }
        }
        if records_main.is_none() {
            records_main = Some(run.records);
        }
        if times.len() >= 2 {
            let k = times.len();
            let (prev, last) = (times[k - 2], times[k - 1]);
            if prev.is_finite() && last.is_finite() && (prev - last).abs() / last <= 0.01 {
                break;
            }
        }
    }
    write_trajectory(&cfg.output_dir, records_main.as_ref().unwrap())?;

    let t_num = *times.last().unwrap();
    out.kv("T_num", fmt(t_num));
    out.kv(
        "T_num_by_dt",
        times.iter().map(|t| fmt(*t)).collect::<Vec<_>>().join(";"),
    );
    out.audit(
        "breakdown_is_blowup",
        t_num.is_finite() && *kinds.last().unwrap() == BreakdownKind::SlopeBlowup,
        format!("breakdown kind {:?}, T_num {t_num}", kinds.last().unwrap()),
    );
    let settled = times.len() >= 2 && {
        let k = times.len();
        (times[k - 2] - times[k - 1]).abs() / times[k - 1] <= 0.01
    };
    out.audit("breakdown_time_settled", settled, format!("times {times:?}"));

    let comparison = RiccatiComparison::new(cfg.eps, cfg.slope_right)
        .map_err(|e| crate::error::Error::InvalidParameter { name: "eps", reason: e.to_string() })?;
    let t_ric = riccati_blowup_time(&comparison);
    out.kv("T_riccati", t_ric.map(fmt).unwrap_or_else(|| "inf".into()));
    out.kv("riccati_threshold", fmt(comparison.threshold()));
    let consistency = check_blowup_consistency(
        t_num.is_finite().then_some(t_num),
        cfg.t_end,
        &comparison,
        0.10,
    );
    out.audit(
        "riccati_comparison",
        consistency.consistent,
        format!("T_num {t_num:?} vs comparison pole {t_ric:?} (+10%)"),
    );
    Ok(out)
}

fn run_oracle_compare(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let mut out = RunOutcome::new();
    let coords = make_grid(cfg.l, cfg.n, cfg.ratio)?;
    let v0 = sample_datum(cfg, &coords)?;
    let mut e = init_ensemble(&v0);
    let th = Thresholds { slope_blowup: cfg.slope_blowup_threshold, jacobian_min: cfg.jacobian_threshold };
    let (records, outcome) = evolve(&mut e, cfg.t_end, cfg.dt, &th, cfg.record_interval)?;
    write_trajectory(&cfg.output_dir, &records)?;
    out.audit("characteristics_completed", outcome.breakdown.is_none(), "solver broke down".into());
    let (profile, a) = reconstruct(&e);
    write_snapshot_file(&cfg.output_dir, "snapshot_final.csv", &profile, e.t)?;

    let datum = datum_from_config(cfg);
    let scale = if cfg.h1_target > 0.0 {
        let norm = datum.sample(&coords)?.h1_norm();
        if norm > 0.0 {
            cfg.h1_target / norm
        } else {
            1.0
        }
    } else {
        1.0
    };
    let st0 = DirectState::from_fn(cfg.oracle_l, cfg.oracle_dx, |x| {
        phi(x) + scale * datum.value_at(x)
    })?;
    let st = direct_evolve(st0, cfg.t_end, cfg.oracle_dt, cfg.oracle_nu)?;
    let mut csv = String::from("x,u\n");
    for (x, u) in st.coords.iter().zip(&st.u) {
        writeln!(csv, "{},{}", fmt(*x), fmt(*u)).unwrap();
    }
    write_file(&cfg.output_dir, "direct_final.csv", &csv)?;

    let diff = compare(&st, &profile, a, cfg.oracle_exclude_cells);
    out.kv("cross_solver_sup_diff", fmt(diff));
    out.audit(
        "cross_solver_agreement",
        diff <= cfg.oracle_tol,
        format!("sup difference {diff:.3e} over {:.1e}", cfg.oracle_tol),
    );
    Ok(out)
}

/// Canonical configs for each scenario, used by the CLI `--scenario` shortcut
/// and the acceptance suite.
pub fn scenario_config(scenario: Scenario) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { scenario, ..ExperimentConfig::default() };
    match scenario {
        Scenario::Identities => {}
        Scenario::Linear => {
            cfg.family = Family::PeakedExponential;
            cfg.amplitude = 0.0;
            cfg.beta = 1.0;
            cfg.slope_right = -0.01;
            cfg.slope_left = 0.0;
            cfg.t_end = 5.0;
            cfg.record_interval = 0.05;
        }
        Scenario::Nonlinear => {
            cfg.family = Family::Gaussian;
            cfg.amplitude = 1.0;
            cfg.sigma = 1.0;
            cfg.center = 0.4;
            cfg.h1_target = 0.05;
            cfg.t_end = 2.0;
            cfg.eps = 0.6;
        }
        Scenario::Instability => {
            cfg.family = Family::PeakedExponential;
            cfg.amplitude = 0.0;
            cfg.beta = 1.0;
            cfg.slope_right = -2e-3;
            cfg.slope_left = 0.0;
            cfg.t_end = 12.0;
            cfg.record_interval = 0.02;
        }
        Scenario::Blowup => {
            cfg.family = Family::PeakedExponential;
            cfg.amplitude = 0.0;
            cfg.beta = 0.05;
            cfg.slope_right = -2.0;
            cfg.slope_left = 0.0;
            cfg.t_end = 3.0;
            cfg.dt = 5e-4;
            cfg.record_interval = 0.01;
            // Fire the slope threshold well before the Jacobian check: the
            // slope diverges like 1/(T-t) while q_s collapses like (T-t)^4,
            // so the default pair would misclassify the breakdown.
            cfg.slope_blowup_threshold = 1e3;
            cfg.jacobian_threshold = 1e-14;
        }
        Scenario::OracleCompare => {
            cfg.family = Family::Gaussian;
            cfg.amplitude = 1e-2;
            cfg.sigma = 0.5;
            cfg.center = 1.0;
            cfg.t_end = 0.5;
            cfg.record_interval = 0.1;
        }
    }
    cfg
}
