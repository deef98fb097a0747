use std::f64::consts::PI;

use dephasing::entangle::entanglement_region_scan;
use dephasing::exact::{evolve, DensityMatrix};
use dephasing::linalg::CMatrix;
use dephasing::model::{ModelSpec, RingCouplingParams};
use dephasing::operational::{cpf_correlation, joint_probability, MeasurementScheme};
use dephasing::split::{EnvPopulations, ReducedDynamics};
use dephasing::verify::{run_criterion, VerifyConfig, CRITERIA};
use dephasing::witness::{negative_intervals, sample_rates, CanonicalRates};
use dephasing::{Env, Model, Scheme, SplitSpec, Table};
use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, linspace, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{matrix_json, Csv, OutDir, Provenance};
use crate::presets;

pub struct Context {
    pub config: RunConfig,
    pub prov: Provenance,
    pub out: OutDir,
}

#[derive(Serialize)]
struct Snapshots {
    times: Vec<f64>,
    states: Vec<Vec<Vec<[f64; 2]>>>,
}

fn snapshots(times: &[f64], states: Vec<DensityMatrix<f64>>) -> Snapshots {
    Snapshots { times: times.to_vec(), states: states.iter().map(|s| matrix_json(s.matrix())).collect() }
}

pub fn evolve_cmd(ctx: &mut Context) -> Result<()> {
    let model = ctx.config.model()?;
    let rho0 = config::full_state(&ctx.config, &model)?;
    let times = ctx.config.times()?;
    let states: Vec<DensityMatrix<f64>> =
        times.par_iter().map(|&t| evolve(&model, &rho0, t)).collect::<dephasing::Result<_>>()?;
    ctx.out.json("evolve.json", &ctx.prov, snapshots(&times, states))
}

struct SystemSetup {
    model: Model,
    split: SplitSpec,
    env: Env,
    rho_s: DensityMatrix<f64>,
    dynamics: ReducedDynamics<f64>,
}

fn system_setup(cfg: &RunConfig) -> Result<SystemSetup> {
    let model = cfg.model()?;
    let split = cfg.split(&model)?;
    let env = cfg.env(&model, &split)?;
    let dynamics = ReducedDynamics::new(&model, &split, env.clone())?;
    let rho_s = cfg.state(dynamics.system_dim())?;
    Ok(SystemSetup { model, split, env, rho_s, dynamics })
}

pub fn system_cmd(ctx: &mut Context) -> Result<()> {
    let s = system_setup(&ctx.config)?;
    let times = ctx.config.times()?;
    let d = s.dynamics.system_dim();
    let mut csv = Csv::new(&ctx.prov, &["t", "a", "b", "f_re", "f_im"]);
    for &t in &times {
        for a in 0..d {
            for b in a + 1..d {
                let f = s.dynamics.coherence(a, b, t)?;
                csv.row(vec![t.into(), a.into(), b.into(), f.re.into(), f.im.into()]);
            }
        }
    }
    let states: Vec<DensityMatrix<f64>> =
        times.par_iter().map(|&t| s.dynamics.system_state(&s.rho_s, t)).collect::<dephasing::Result<_>>()?;
    ctx.out.csv("system_coherence.csv", csv)?;
    ctx.out.json("system_state.json", &ctx.prov, snapshots(&times, states))
}

fn rate_csv(prov: &Provenance, dynamics: &ReducedDynamics<f64>, (a, b): (usize, usize), times: &[f64]) -> Result<Csv> {
    let samples = sample_rates(times, |t| {
        dynamics.log_derivative(a, b, t).map(|z| CanonicalRates { omega: z.im, gamma_rate: z.re / 2.0 })
    })?;
    for s in samples.iter().filter(|s| s.diverged) {
        log::warn!("rates diverge at t = {}", s.t);
    }
    for (t0, t1) in negative_intervals(&samples) {
        log::info!("negative rate on [{t0}, {t1}]");
    }
    let mut csv = Csv::new(prov, &["t", "omega", "gamma_rate", "diverged"]);
    for s in samples {
        csv.row(vec![s.t.into(), s.omega.into(), s.gamma_rate.into(), s.diverged.into()]);
    }
    Ok(csv)
}

pub fn rates_cmd(ctx: &mut Context) -> Result<()> {
    let s = system_setup(&ctx.config)?;
    let pair = ctx.config.coherence(s.dynamics.system_dim())?;
    let csv = rate_csv(&ctx.prov, &s.dynamics, pair, &ctx.config.times()?)?;
    ctx.out.csv("rates.csv", csv)
}

struct CpfInputs<'a> {
    model: &'a Model,
    split: &'a SplitSpec,
    env: &'a Env,
    rho_s: &'a DensityMatrix<f64>,
    scheme: &'a Scheme,
}

/// Tables and CPF values over `(t, τ)` points, in the order given.
fn cpf_points(inp: &CpfInputs, points: &[(f64, f64)]) -> Result<Vec<(Table, Vec<Option<f64>>)>> {
    points
        .par_iter()
        .map(|&(t, tau)| {
            let table = joint_probability(inp.model, inp.split, inp.env, inp.rho_s, inp.scheme, t, tau)?;
            let ny = table.shape().1;
            let cpf = (0..ny)
                .map(|y| match cpf_correlation(&table, y) {
                    Ok(c) => Ok(Some(c)),
                    Err(dephasing::Error::ConditionalUndefined(_)) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<dephasing::Result<Vec<_>>>()?;
            Ok((table, cpf))
        })
        .collect()
}

pub fn cpf_cmd(ctx: &mut Context) -> Result<()> {
    let s = system_setup(&ctx.config)?;
    let scheme = ctx.config.scheme(s.dynamics.system_dim())?;
    let times = ctx.config.times()?;
    let points: Vec<(f64, f64)> = match ctx.config.tau()? {
        None => times.iter().map(|&t| (t, t)).collect(),
        Some(taus) => times.iter().flat_map(|&t| taus.iter().map(move |&tau| (t, tau))).collect(),
    };
    let inp = CpfInputs { model: &s.model, split: &s.split, env: &s.env, rho_s: &s.rho_s, scheme: &scheme };
    let results = cpf_points(&inp, &points)?;
    let mut csv = Csv::new(&ctx.prov, &["t", "tau", "y", "cpf"]);
    for (&(t, tau), (_, cpf)) in points.iter().zip(&results) {
        for (y, c) in cpf.iter().enumerate() {
            csv.row(vec![t.into(), tau.into(), y.into(), (*c).into()]);
        }
    }
    ctx.out.csv("cpf.csv", csv)?;
    let tables: Vec<Table> = results.into_iter().map(|(t, _)| t).collect();
    ctx.out.json("cpf_tables.json", &ctx.prov, tables)
}

fn scan_csv(prov: &Provenance, scan: &config::ScanConfig) -> Result<Csv> {
    let grid = linspace(-1.0, 1.0, scan.chi_points);
    let rows = entanglement_region_scan(scan.n_min..=scan.n_max, &grid, scan.gamma)?;
    let mut csv = Csv::new(prov, &["n", "chi_star_over_gamma", "lower_bound", "upper_bound"]);
    for r in rows {
        csv.row(vec![r.n.into(), r.chi_star_over_gamma.into(), r.lower_bound.into(), r.upper_bound.into()]);
    }
    Ok(csv)
}

pub fn entangle_scan_cmd(ctx: &mut Context) -> Result<()> {
    let scan = ctx.config.scan()?;
    let csv = scan_csv(&ctx.prov, &scan)?;
    ctx.out.csv("entangle_scan.csv", csv)
}

fn plus_z() -> DensityMatrix<f64> {
    DensityMatrix::pure(&[Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]).expect("unit vector")
}

/// System qubit coupled to one bath qubit through `Γ12 = i χ_I` only. The
/// bath self-rate does not enter the system dynamics; the smallest value
/// keeping `Γ` positive is used.
fn bipartite_model(gamma: f64, chi_i: f64) -> Result<Model> {
    let beta = gamma.max(chi_i * chi_i / gamma);
    let g = CMatrix::from_row_slice(
        2,
        2,
        &[Complex::new(gamma, 0.0), Complex::new(0.0, chi_i), Complex::new(0.0, -chi_i), Complex::new(beta, 0.0)],
    );
    Ok(ModelSpec::new(vec![vec![1.0, -1.0]; 2], DMatrix::zeros(2, 2), g)?)
}

fn equal_time_cpf(prov: &Provenance, inp: &CpfInputs, times: &[f64]) -> Result<Csv> {
    let points: Vec<(f64, f64)> = times.iter().map(|&t| (t, t)).collect();
    let results = cpf_points(inp, &points)?;
    let mut csv = Csv::new(prov, &["t", "tau", "y", "cpf"]);
    for (&(t, tau), (_, cpf)) in points.iter().zip(&results) {
        for (y, c) in cpf.iter().enumerate() {
            csv.row(vec![t.into(), tau.into(), y.into(), (*c).into()]);
        }
    }
    Ok(csv)
}

pub fn fig1_cmd(ctx: &mut Context, text: &str) -> Result<()> {
    let p: presets::Fig1 = presets::parse(text, "fig1 preset")?;
    let c = &p.figure;
    let times = p.grid.times.grid("grid.times")?;
    let gamma = p.grid.gamma;
    let scheme = MeasurementScheme::qubit_xnx(c.phi_over_pi * PI);
    let split = SplitSpec::leading(1, 2)?;
    let env = EnvPopulations::Product(vec![vec![c.q_plus, c.q_minus]]);
    for &ratio in &c.chi_bar_over_gamma {
        let model = bipartite_model(gamma, ratio * gamma)?;
        let dynamics = ReducedDynamics::new(&model, &split, env.clone())?;
        let rates = rate_csv(&ctx.prov, &dynamics, (0, 1), &times)?;
        ctx.out.csv(&format!("fig1_rates_chibar{ratio:+.1}.csv"), rates)?;
        let rho = plus_z();
        let inp = CpfInputs { model: &model, split: &split, env: &env, rho_s: &rho, scheme: &scheme };
        let cpf = equal_time_cpf(&ctx.prov, &inp, &times)?;
        ctx.out.csv(&format!("fig1_cpf_chibar{ratio:+.1}.csv"), cpf)?;
    }
    Ok(())
}

pub fn fig2_cmd(ctx: &mut Context, text: &str) -> Result<()> {
    let p: presets::Fig2 = presets::parse(text, "fig2 preset")?;
    let cfg = RunConfig { scan: Some(p.grid), ..RunConfig::default() };
    let csv = scan_csv(&ctx.prov, &cfg.scan()?)?;
    ctx.out.csv("fig2_entangle_scan.csv", csv)
}

pub fn fig3_cmd(ctx: &mut Context, text: &str) -> Result<()> {
    let p: presets::Fig3 = presets::parse(text, "fig3 preset")?;
    let times = p.grid.times.grid("grid.times")?;
    let gamma = p.grid.gamma;
    let scheme = MeasurementScheme::qubit_xnx(p.figure.phi_over_pi * PI);
    let n6 = p.figure.n_for_varying_chi;
    let chi1 = p.figure.chi_over_gamma_for_varying_n;
    let panels = [
        (p.grid.chi_over_gamma.iter().map(|&x| (n6, x)).collect::<Vec<_>>(), format!("n{n6}")),
        (p.grid.n.iter().map(|&n| (n, chi1)).collect::<Vec<_>>(), format!("chi{chi1}")),
    ];
    for (cases, tag) in panels {
        let mut f_csv = Csv::new(&ctx.prov, &["n", "chi_over_gamma", "t", "f_re", "f_im"]);
        let mut c_csv = Csv::new(&ctx.prov, &["n", "chi_over_gamma", "t", "tau", "y", "cpf"]);
        for (n, ratio) in cases {
            let model = ModelSpec::ring(&RingCouplingParams::quarter(n, gamma, ratio * gamma))?;
            let split = SplitSpec::leading(1, n)?;
            let bath_dims = vec![2; n - 1];
            let env = EnvPopulations::uniform(&bath_dims);
            let dynamics = ReducedDynamics::new(&model, &split, env.clone())?;
            for &t in &times {
                let f = dynamics.coherence(0, 1, t)?;
                f_csv.row(vec![n.into(), ratio.into(), t.into(), f.re.into(), f.im.into()]);
            }
            let rho = plus_z();
            let inp = CpfInputs { model: &model, split: &split, env: &env, rho_s: &rho, scheme: &scheme };
            let points: Vec<(f64, f64)> = times.iter().map(|&t| (t, t)).collect();
            for (&(t, tau), (_, cpf)) in points.iter().zip(cpf_points(&inp, &points)?) {
                for (y, c) in cpf.into_iter().enumerate() {
                    c_csv.row(vec![n.into(), ratio.into(), t.into(), tau.into(), y.into(), c.into()]);
                }
            }
        }
        ctx.out.csv(&format!("fig3_coherence_{tag}.csv"), f_csv)?;
        ctx.out.csv(&format!("fig3_cpf_{tag}.csv"), c_csv)?;
    }
    Ok(())
}

pub fn verify_cmd(ctx: &mut Context, tolerance_scale: f64) -> Result<()> {
    if !(tolerance_scale > 0.0) || !tolerance_scale.is_finite() {
        return Err(CliError::config("--tolerance", "must be a positive number"));
    }
    let mut cfg = VerifyConfig { tolerance_scale, ..VerifyConfig::default() };
    if let Some(seed) = ctx.config.seed {
        cfg.seed = seed;
    }
    let mut reports = Vec::new();
    for id in 1..=CRITERIA.len() {
        let r = run_criterion(id, &cfg);
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("[{status}] {:>2}. {} ({:.2} s): {}", r.id, r.title, r.seconds, r.detail);
        reports.push(r);
    }
    ctx.out.json("verify_report.json", &ctx.prov, &reports)?;
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("criteria {} failed", failed.join(", "))))
    }
}
