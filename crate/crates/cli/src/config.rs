//! JSON run configuration and its conversion into library types. Every
//! validation failure names the offending JSON path.

use std::f64::consts::PI;

use dephasing::entangle::uniform_superposition;
use dephasing::exact::DensityMatrix;
use dephasing::linalg::CMatrix;
use dephasing::model::{ModelSpec, RingCouplingParams};
use dephasing::operational::{MeasurementScheme, MeasurementStage};
use dephasing::split::EnvPopulations;
use dephasing::{Model, Scheme, SplitSpec};
use nalgebra::DMatrix;
use num_complex::Complex;
use serde::Deserialize;

use crate::error::{CliError, Result};

/// A real number or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Real(f64),
    Pair([f64; 2]),
}

impl Num {
    fn value(self) -> Complex<f64> {
        match self {
            Num::Real(x) => Complex::new(x, 0.0),
            Num::Pair([re, im]) => Complex::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelConfig>,
    pub split: Option<SplitConfig>,
    pub env: Option<EnvConfig>,
    pub state: Option<StateConfig>,
    pub times: Option<GridConfig>,
    pub tau: Option<GridConfig>,
    pub scheme: Option<SchemeConfig>,
    pub coherence: Option<[usize; 2]>,
    pub scan: Option<ScanConfig>,
    /// Reserved; every pipeline is deterministic.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub subsystems: Option<Vec<Vec<f64>>>,
    pub h: Option<Vec<Vec<f64>>>,
    pub gamma: Option<Vec<Vec<Num>>>,
    pub ring: Option<RingConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    pub n: usize,
    pub gamma: f64,
    pub chi: f64,
}

/// One-based subsystem labels; `bath` defaults to the complement.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub system: Vec<usize>,
    pub bath: Option<Vec<usize>>,
}

/// Bath populations; uniform when neither field is given.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub product: Option<Vec<Vec<f64>>>,
    pub full: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub pure: Option<Vec<Num>>,
    pub matrix: Option<Vec<Vec<Num>>>,
    /// `"plus"` (equal superposition) or `"ground"` (first basis state).
    pub named: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub first: Option<StageConfig>,
    pub intermediate: Option<StageConfig>,
    pub last: Option<StageConfig>,
    /// Discrete-Fourier scheme with the given intermediate phase.
    pub fourier: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StageConfig {
    /// Qubit Pauli axis: `"x"`, `"y"` or `"z"`.
    Axis(String),
    /// Qubit direction `(cos φ, sin φ, 0)`.
    Plane {
        plane_angle: f64,
    },
    Explicit {
        operators: Vec<Vec<Vec<Num>>>,
        values: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub n_min: usize,
    pub n_max: usize,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "default_chi_points")]
    pub chi_points: usize,
}

fn one() -> f64 {
    1.0
}

fn default_chi_points() -> usize {
    201
}

pub fn parse(text: &str, source: &str) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|e| CliError::config(source, e.to_string()))
}

fn required<'a, T>(field: &'a Option<T>, path: &str) -> Result<&'a T> {
    field.as_ref().ok_or_else(|| CliError::config(path, "missing"))
}

fn matrix_c(rows: &[Vec<Num>], path: &str) -> Result<CMatrix<f64>> {
    let n = rows.len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(CliError::config(format!("{path}[{i}]"), format!("expected {n} entries, got {}", r.len())));
        }
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j].value()))
}

fn matrix_r(rows: &[Vec<f64>], n: usize, path: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n {
        return Err(CliError::config(path, format!("expected {n} rows, got {}", rows.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(CliError::config(format!("{path}[{i}]"), format!("expected {n} entries, got {}", r.len())));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn lib<T>(r: dephasing::Result<T>, path: &str) -> Result<T> {
    r.map_err(|e| CliError::config(path, e.to_string()))
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model> {
        if let Some(ring) = self.ring {
            if self.subsystems.is_some() || self.h.is_some() || self.gamma.is_some() {
                return Err(CliError::config("model", "give either `ring` or `subsystems`/`h`/`gamma`, not both"));
            }
            return lib(ModelSpec::ring(&RingCouplingParams::quarter(ring.n, ring.gamma, ring.chi)), "model.ring");
        }
        let subsystems = required(&self.subsystems, "model.subsystems")?.clone();
        let n = subsystems.len();
        let gamma = matrix_c(required(&self.gamma, "model.gamma")?, "model.gamma")?;
        if gamma.nrows() != n {
            return Err(CliError::config("model.gamma", format!("expected {n} rows, got {}", gamma.nrows())));
        }
        let h = match &self.h {
            Some(rows) => matrix_r(rows, n, "model.h")?,
            None => DMatrix::zeros(n, n),
        };
        lib(ModelSpec::new(subsystems, h, gamma), "model")
    }
}

impl RunConfig {
    pub fn model(&self) -> Result<Model> {
        required(&self.model, "model")?.build()
    }

    pub fn split(&self, model: &Model) -> Result<SplitSpec> {
        let n = model.n();
        match &self.split {
            None => lib(SplitSpec::leading(1, n), "split"),
            Some(s) => {
                let bath: Vec<usize> = match &s.bath {
                    Some(b) => b.clone(),
                    None => (1..=n).filter(|i| !s.system.contains(i)).collect(),
                };
                lib(SplitSpec::from_one_based(&s.system, &bath, n), "split")
            }
        }
    }

    pub fn env(&self, model: &Model, split: &SplitSpec) -> Result<EnvPopulations<f64>> {
        let dims: Vec<usize> = split.bath().iter().map(|&j| model.spectrum(j).len()).collect();
        let env = match &self.env {
            None => EnvPopulations::uniform(&dims),
            Some(EnvConfig { product: Some(_), full: Some(_) }) => {
                return Err(CliError::config("env", "give either `product` or `full`, not both"))
            }
            Some(EnvConfig { product: Some(p), .. }) => EnvPopulations::Product(p.clone()),
            Some(EnvConfig { full: Some(f), .. }) => EnvPopulations::Full(f.clone()),
            Some(_) => EnvPopulations::uniform(&dims),
        };
        lib(env.validate(&split.bath_basis(model)), "env")?;
        Ok(env)
    }

    /// Initial state of dimension `d`, defaulting to the equal superposition.
    pub fn state(&self, d: usize) -> Result<DensityMatrix<f64>> {
        let plus =
            || DensityMatrix::from_matrix_unchecked(CMatrix::from_element(d, d, Complex::new(1.0 / d as f64, 0.0)));
        let Some(s) = &self.state else { return Ok(plus()) };
        let given = [s.pure.is_some(), s.matrix.is_some(), s.named.is_some()].iter().filter(|&&b| b).count();
        if given != 1 {
            return Err(CliError::config("state", "give exactly one of `pure`, `matrix`, `named`"));
        }
        if let Some(v) = &s.pure {
            if v.len() != d {
                return Err(CliError::config("state.pure", format!("expected {d} amplitudes, got {}", v.len())));
            }
            let psi: Vec<Complex<f64>> = v.iter().map(|z| z.value()).collect();
            return lib(DensityMatrix::pure(&psi), "state.pure");
        }
        if let Some(rows) = &s.matrix {
            let m = matrix_c(rows, "state.matrix")?;
            if m.nrows() != d {
                return Err(CliError::config("state.matrix", format!("expected dimension {d}, got {}", m.nrows())));
            }
            return lib(DensityMatrix::new(m), "state.matrix");
        }
        match s.named.as_deref() {
            Some("plus") => Ok(plus()),
            Some("ground") => {
                let mut p = vec![0.0; d];
                p[0] = 1.0;
                lib(DensityMatrix::diagonal(&p), "state.named")
            }
            Some(other) => Err(CliError::config("state.named", format!("unknown state `{other}`"))),
            None => unreachable!("exactly one field is set"),
        }
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        required(&self.times, "times")?.grid("times")
    }

    /// The `τ` grid, or `None` for equal-time evaluation.
    pub fn tau(&self) -> Result<Option<Vec<f64>>> {
        self.tau.as_ref().map(|g| g.grid("tau")).transpose()
    }

    pub fn scheme(&self, d: usize) -> Result<Scheme> {
        required(&self.scheme, "scheme")?.build(d)
    }

    pub fn coherence(&self, d: usize) -> Result<(usize, usize)> {
        let [a, b] = self.coherence.unwrap_or([0, 1]);
        if a >= d || b >= d || a == b {
            return Err(CliError::config("coherence", format!("need two distinct indices below {d}")));
        }
        Ok((a, b))
    }

    pub fn scan(&self) -> Result<ScanConfig> {
        let s = *required(&self.scan, "scan")?;
        if s.n_min < 2 || s.n_max < s.n_min {
            return Err(CliError::config("scan", "need 2 <= n_min <= n_max"));
        }
        if s.chi_points < 2 {
            return Err(CliError::config("scan.chi_points", "need at least 2 points"));
        }
        if !(s.gamma > 0.0) {
            return Err(CliError::config("scan.gamma", "must be positive"));
        }
        Ok(s)
    }
}

impl GridConfig {
    pub fn grid(&self, path: &str) -> Result<Vec<f64>> {
        if self.steps < 2 {
            return Err(CliError::config(format!("{path}.steps"), "need at least 2 steps"));
        }
        if !(self.t_start >= 0.0) || !(self.t_end >= self.t_start) || !self.t_end.is_finite() {
            return Err(CliError::config(path, "need 0 <= t_start <= t_end"));
        }
        Ok(linspace(self.t_start, self.t_end, self.steps))
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

impl SchemeConfig {
    pub fn build(&self, d: usize) -> Result<Scheme> {
        if let Some(theta) = self.fourier {
            if self.first.is_some() || self.intermediate.is_some() || self.last.is_some() {
                return Err(CliError::config("scheme", "`fourier` excludes explicit stages"));
            }
            return lib(MeasurementScheme::fourier(d, theta), "scheme.fourier");
        }
        let first = required(&self.first, "scheme.first")?.build(d, "scheme.first")?;
        let intermediate = required(&self.intermediate, "scheme.intermediate")?.build(d, "scheme.intermediate")?;
        let last = required(&self.last, "scheme.last")?.build(d, "scheme.last")?;
        lib(MeasurementScheme::new(first, intermediate, last), "scheme")
    }
}

impl StageConfig {
    fn build(&self, d: usize, path: &str) -> Result<MeasurementStage<f64>> {
        let qubit_only = || {
            if d == 2 {
                Ok(())
            } else {
                Err(CliError::config(path, format!("qubit stage used on dimension {d}")))
            }
        };
        match self {
            StageConfig::Axis(axis) => {
                qubit_only()?;
                match axis.as_str() {
                    "x" => Ok(plane_stage(0.0)),
                    "y" => Ok(plane_stage(PI / 2.0)),
                    "z" => Ok(lib(
                        MeasurementStage::from_vectors(
                            &[
                                vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)],
                                vec![Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)],
                            ],
                            vec![1.0, -1.0],
                            vec!["+1".into(), "-1".into()],
                        ),
                        path,
                    )?),
                    other => Err(CliError::config(path, format!("unknown axis `{other}`"))),
                }
            }
            StageConfig::Plane { plane_angle } => {
                qubit_only()?;
                Ok(plane_stage(*plane_angle))
            }
            StageConfig::Explicit { operators, values } => {
                let mut ops = Vec::with_capacity(operators.len());
                for (k, rows) in operators.iter().enumerate() {
                    let p = format!("{path}.operators[{k}]");
                    let m = matrix_c(rows, &p)?;
                    if m.nrows() != d {
                        return Err(CliError::config(p, format!("expected dimension {d}, got {}", m.nrows())));
                    }
                    ops.push(m);
                }
                let values = values.clone().unwrap_or_else(|| (0..ops.len()).map(|k| k as f64).collect());
                let labels = (0..ops.len()).map(|k| k.to_string()).collect();
                lib(MeasurementStage::new(ops, values, labels), path)
            }
        }
    }
}

/// Projectors onto `(|0⟩ ± e^{iφ}|1⟩)/√2` with outcomes `±1`.
fn plane_stage(phi: f64) -> MeasurementStage<f64> {
    let h = 0.5_f64.sqrt();
    let (s, c) = phi.sin_cos();
    MeasurementStage::from_vectors(
        &[
            vec![Complex::new(h, 0.0), Complex::new(c * h, s * h)],
            vec![Complex::new(h, 0.0), Complex::new(-c * h, -s * h)],
        ],
        vec![1.0, -1.0],
        vec!["+1".into(), "-1".into()],
    )
    .expect("plane basis is complete")
}

/// Largest full-space dimension for dense density-matrix output.
pub const DENSE_DIM_CAP: usize = 4096;

/// Full-space initial state: either given directly, or the system state
/// times the diagonal bath populations.
pub fn full_state(cfg: &RunConfig, model: &Model) -> Result<DensityMatrix<f64>> {
    if model.dim() > DENSE_DIM_CAP {
        return Err(dephasing::Error::DimensionCap { dim: model.dim(), cap: DENSE_DIM_CAP }.into());
    }
    if cfg.state.is_none() {
        return Ok(uniform_superposition(model));
    }
    let split = cfg.split(model)?;
    let layout = lib(split.layout(model), "split")?;
    let dim_hint = match &cfg.state {
        Some(StateConfig { pure: Some(v), .. }) => v.len(),
        Some(StateConfig { matrix: Some(m), .. }) => m.len(),
        _ => model.dim(),
    };
    if dim_hint == model.dim() {
        return cfg.state(model.dim());
    }
    let rho_s = cfg.state(layout.system_dim)?;
    let env = cfg.env(model, &split)?;
    let bath = env.to_state(&split.bath_basis(model));
    Ok(DensityMatrix::from_matrix_unchecked(layout.product(rho_s.matrix(), bath.matrix())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_stages_reproduce_the_named_scheme() {
        let cfg =
            parse(r#"{"scheme": {"first": "x", "intermediate": {"plane_angle": 0.7}, "last": "x"}}"#, "t").unwrap();
        let built = cfg.scheme(2).unwrap();
        let named = MeasurementScheme::qubit_xnx(0.7);
        for (a, b) in built.intermediate().operators().iter().zip(named.intermediate().operators()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn errors_name_the_json_path() {
        let cfg = parse(r#"{"model": {"subsystems": [[1, -1], [1, -1]], "gamma": [[1, 0], [0]]}}"#, "t").unwrap();
        match cfg.model() {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "model.gamma[1]"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = parse(r#"{"times": {"t_start": 0, "t_end": 1, "steps": 1}}"#, "t").unwrap();
        assert!(matches!(cfg.times(), Err(CliError::Config { path, .. }) if path == "times.steps"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(parse(r#"{"modle": {}}"#, "t").is_err());
    }

    #[test]
    fn bath_defaults_to_the_complement() {
        let cfg =
            parse(r#"{"model": {"ring": {"n": 4, "gamma": 1, "chi": 0.5}}, "split": {"system": [2]}}"#, "t").unwrap();
        let model = cfg.model().unwrap();
        let split = cfg.split(&model).unwrap();
        assert_eq!(split.system(), &[1]);
        assert_eq!(split.bath(), &[0, 2, 3]);
    }
}
