//! Brute-force reference solvers: Runge-Kutta integration of the master
//! equation from its operator form, literal sequential-measurement
//! simulation, and explicit averaging over a Markovian mixture.
//!
//! Nothing here evaluates the closed-form rates; the model coefficients are
//! the only shared input.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::exact::DensityMatrix;
use crate::linalg::{hermiticity_defect, trace, CMatrix};
use crate::model::{GeneralizedModelSpec, ModelSpec};
use crate::operational::{DroppedBranch, MarkovMixture, MeasurementScheme, OutcomeTable, BRANCH_TOL};
use crate::scalar::{cabs, cexp, cplx, creal, czero, lit, to_f64, Real};
use crate::split::SplitSpec;

/// Default dimension cap of the reference integrator.
pub const ORACLE_DIM_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T> {
    /// Initial step; `None` derives one from a bound on the generator norm.
    pub dt: Option<T>,
    /// Successive step-halved solutions must agree to this (max entry).
    pub tol: T,
    pub max_halvings: u32,
    pub dim_cap: usize,
    /// Allowed trace and Hermiticity drift of the final state.
    pub drift_tol: T,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        IntegratorConfig { dt: None, tol: lit(1e-10), max_halvings: 16, dim_cap: ORACLE_DIM_CAP, drift_tol: lit(1e-10) }
    }
}

/// Diagonal operators of the master equation in the product eigenbasis.
/// Since every `S^{(i)}` is diagonal, `-i[H,ρ] + Σ Γij (S_i ρ S_j - ½{S_j S_i, ρ})`
/// acts entrywise and is stored as one complex multiplier per entry.
struct DiagonalLindbladian<T: Real> {
    d: usize,
    gen: Vec<Complex<T>>,
}

impl<T: Real> DiagonalLindbladian<T> {
    /// `ops[k]` is the diagonal of operator `k`; `h` couples operators into
    /// `H = ½ Σ h_kl O_k O_l`, `gamma` into the dissipator.
    fn build(d: usize, ops: &[Vec<T>], hamiltonian: &[T], coupling: &[(usize, usize, Complex<T>)]) -> Self {
        let mut t_ops: Vec<Vec<(usize, Complex<T>)>> = vec![Vec::new(); ops.len()];
        let mut anti = vec![czero::<T>(); d];
        for &(i, j, g) in coupling {
            t_ops[i].push((j, g));
            for a in 0..d {
                anti[a] += g * (ops[j][a] * ops[i][a]);
            }
        }
        let half = lit::<T>(0.5);
        let mut gen = Vec::with_capacity(d * d);
        // column-major to match nalgebra storage
        for b in 0..d {
            for a in 0..d {
                let mut sandwich = czero::<T>();
                for (i, partners) in t_ops.iter().enumerate() {
                    for &(j, g) in partners {
                        sandwich += g * (ops[i][a] * ops[j][b]);
                    }
                }
                let commutator = cplx(T::zero(), -(hamiltonian[a] - hamiltonian[b]));
                gen.push(commutator + sandwich - (anti[a] + anti[b]) * half);
            }
        }
        DiagonalLindbladian { d, gen }
    }

    fn from_model(model: &ModelSpec<T>) -> Self {
        let d = model.dim();
        let n = model.n();
        let basis = model.basis();
        let mut pos = vec![0; n];
        let mut ops = vec![vec![T::zero(); d]; n];
        for k in 0..d {
            basis.positions_into(k, &mut pos);
            for i in 0..n {
                ops[i][k] = model.spectrum(i)[pos[i]];
            }
        }
        let half = lit::<T>(0.5);
        let hamiltonian: Vec<T> = (0..d)
            .map(|k| {
                let mut e = T::zero();
                for i in 0..n {
                    for j in 0..n {
                        e += model.h()[(i, j)] * ops[i][k] * ops[j][k];
                    }
                }
                e * half
            })
            .collect();
        let coupling: Vec<(usize, usize, Complex<T>)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| model.gamma()[(i, j)] != czero())
            .map(|(i, j)| (i, j, model.gamma()[(i, j)]))
            .collect();
        Self::build(d, &ops, &hamiltonian, &coupling)
    }

    fn from_generalized(g: &GeneralizedModelSpec<T>) -> Self {
        let d = g.dim();
        let n = g.n();
        let basis = g.basis();
        let mut pos = vec![0; n];
        let local: Vec<Vec<T>> = (0..d)
            .map(|k| {
                basis.positions_into(k, &mut pos);
                (0..n).map(|i| g.subsystems()[i][pos[i]]).collect()
            })
            .collect();
        let mut labels: Vec<&crate::model::CouplingIndex> = g.h_mu().keys().collect();
        for (mu, nu) in g.gamma_munu().keys() {
            labels.push(mu);
            labels.push(nu);
        }
        labels.sort();
        labels.dedup();
        // S_μ = Π_{i ∈ μ} S^{(i)}
        let ops: Vec<Vec<T>> = labels
            .iter()
            .map(|mu| {
                local
                    .iter()
                    .map(|vals| mu.0.iter().zip(vals).fold(T::one(), |acc, (on, v)| if *on { acc * *v } else { acc }))
                    .collect()
            })
            .collect();
        let index = |mu: &crate::model::CouplingIndex| labels.binary_search(&mu).expect("label collected");
        let half = lit::<T>(0.5);
        let mut hamiltonian = vec![T::zero(); d];
        for (mu, h) in g.h_mu() {
            let k = index(mu);
            for a in 0..d {
                hamiltonian[a] += *h * ops[k][a] * half;
            }
        }
        let coupling: Vec<(usize, usize, Complex<T>)> =
            g.gamma_munu().iter().map(|((mu, nu), r)| (index(mu), index(nu), *r)).collect();
        Self::build(d, &ops, &hamiltonian, &coupling)
    }

    fn bound(&self) -> T {
        self.gen.iter().fold(T::zero(), |a, z| if cabs(*z) > a { cabs(*z) } else { a })
    }

    fn apply(&self, rho: &[Complex<T>], out: &mut [Complex<T>]) {
        for ((o, g), r) in out.iter_mut().zip(&self.gen).zip(rho) {
            *o = *g * *r;
        }
    }

    fn rk4(&self, rho0: &[Complex<T>], t: T, steps: usize) -> Vec<Complex<T>> {
        let n = rho0.len();
        let h = t / lit::<T>(steps as f64);
        let half = lit::<T>(0.5);
        let sixth = T::one() / lit::<T>(6.0);
        let mut y = rho0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![czero(); n], vec![czero(); n], vec![czero(); n], vec![czero(); n]);
        let mut tmp = vec![czero::<T>(); n];
        for _ in 0..steps {
            self.apply(&y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + k1[i] * (h * half);
            }
            self.apply(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + k2[i] * (h * half);
            }
            self.apply(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + k3[i] * h;
            }
            self.apply(&tmp, &mut k4);
            for i in 0..n {
                y[i] += (k1[i] + k2[i] * lit::<T>(2.0) + k3[i] * lit::<T>(2.0) + k4[i]) * (h * sixth);
            }
        }
        y
    }

    fn integrate(&self, rho0: &DensityMatrix<T>, t: T, cfg: &IntegratorConfig<T>) -> Result<DensityMatrix<T>> {
        if t < T::zero() || !t.is_finite() {
            return Err(Error::NegativeTime(to_f64(t)));
        }
        if self.d > cfg.dim_cap {
            return Err(Error::DimensionCap { dim: self.d, cap: cfg.dim_cap });
        }
        if rho0.dim() != self.d {
            return Err(Error::DimensionMismatch(format!("state has dimension {}, model {}", rho0.dim(), self.d)));
        }
        let y0: Vec<Complex<T>> = rho0.matrix().iter().copied().collect();
        if t == T::zero() {
            return Ok(rho0.clone());
        }
        let dt0 = cfg.dt.unwrap_or_else(|| {
            let l = self.bound();
            if l > T::zero() {
                lit::<T>(0.1) / l
            } else {
                t
            }
        });
        let mut steps = (t / dt0).ceil().to_usize().unwrap_or(1).max(1);
        let mut prev = self.rk4(&y0, t, steps);
        for _ in 0..cfg.max_halvings {
            steps *= 2;
            let next = self.rk4(&y0, t, steps);
            let diff =
                prev.iter().zip(&next).fold(T::zero(), |a, (p, q)| if cabs(*p - *q) > a { cabs(*p - *q) } else { a });
            prev = next;
            if diff < cfg.tol {
                let m = CMatrix::from_vec(self.d, self.d, prev);
                let drift = cabs(trace(&m) - trace(rho0.matrix()));
                let herm = hermiticity_defect(&m).0;
                if drift > cfg.drift_tol || herm > cfg.drift_tol {
                    return Err(Error::NoConvergence(format!(
                        "trace drift {:e}, Hermiticity defect {:e}",
                        to_f64(drift),
                        to_f64(herm)
                    )));
                }
                return Ok(DensityMatrix::from_matrix_unchecked(m));
            }
        }
        Err(Error::NoConvergence(format!("no agreement to {:e} after {} halvings", to_f64(cfg.tol), cfg.max_halvings)))
    }
}

/// Fourth-order Runge-Kutta solution of the pairwise master equation.
pub fn integrate_lindblad<T: Real>(
    model: &ModelSpec<T>,
    rho0: &DensityMatrix<T>,
    t: T,
    cfg: &IntegratorConfig<T>,
) -> Result<DensityMatrix<T>> {
    if model.dim() > cfg.dim_cap {
        return Err(Error::DimensionCap { dim: model.dim(), cap: cfg.dim_cap });
    }
    DiagonalLindbladian::from_model(model).integrate(rho0, t, cfg)
}

/// Same integrator for a multi-body generator.
pub fn integrate_generalized_lindblad<T: Real>(
    g: &GeneralizedModelSpec<T>,
    rho0: &DensityMatrix<T>,
    t: T,
    cfg: &IntegratorConfig<T>,
) -> Result<DensityMatrix<T>> {
    if g.dim() > cfg.dim_cap {
        return Err(Error::DimensionCap { dim: g.dim(), cap: cfg.dim_cap });
    }
    DiagonalLindbladian::from_generalized(g).integrate(rho0, t, cfg)
}

/// Bath state after the intermediate outcome, one per `(x, y)` branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalBathState<T: Real> {
    pub x: usize,
    pub y: usize,
    pub p_y_given_x: T,
    pub state: DensityMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceStatistics<T: Real> {
    pub table: OutcomeTable<T>,
    pub bath_states: Vec<ConditionalBathState<T>>,
}

fn sandwich<T: Real>(op: &CMatrix<T>, rho: &CMatrix<T>) -> CMatrix<T> {
    op * rho * op.adjoint()
}

/// Measure, evolve, measure, evolve, measure on the full system-bath state.
pub fn measurement_statistics_bruteforce<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    rho0_se: &DensityMatrix<T>,
    scheme: &MeasurementScheme<T>,
    t: T,
    tau: T,
    cfg: &IntegratorConfig<T>,
) -> Result<BruteForceStatistics<T>> {
    let layout = split.layout(model)?;
    if scheme.dim() != layout.system_dim {
        return Err(Error::DimensionMismatch(format!(
            "scheme acts on dimension {}, system has {}",
            scheme.dim(),
            layout.system_dim
        )));
    }
    let lind = DiagonalLindbladian::from_model(model);
    let embed = |op: &CMatrix<T>| layout.embed_system_operator(op);
    let first: Vec<CMatrix<T>> = scheme.first().operators().iter().map(embed).collect();
    let second: Vec<CMatrix<T>> = scheme.intermediate().operators().iter().map(embed).collect();
    let last: Vec<CMatrix<T>> = (0..scheme.last().len()).map(|z| embed(&scheme.last().effect(z))).collect();
    let tol = lit::<T>(BRANCH_TOL);
    let mut probs = vec![vec![vec![T::zero(); first.len()]; second.len()]; last.len()];
    let mut dropped = Vec::new();
    let mut bath_states = Vec::new();
    for (x, pi_x) in first.iter().enumerate() {
        let after_x = sandwich(pi_x, rho0_se.matrix());
        let px = trace(&after_x).re;
        if px < tol {
            dropped.push(DroppedBranch { x, y: None });
            continue;
        }
        let rho_x = DensityMatrix::from_matrix_unchecked(after_x / creal(px));
        let rho_xt = lind.integrate(&rho_x, t, cfg)?;
        for (y, pi_y) in second.iter().enumerate() {
            let after_y = sandwich(pi_y, rho_xt.matrix());
            let pyx = trace(&after_y).re;
            if pyx < tol {
                dropped.push(DroppedBranch { x, y: Some(y) });
                continue;
            }
            let rho_yx = DensityMatrix::from_matrix_unchecked(after_y / creal(pyx));
            bath_states.push(ConditionalBathState {
                x,
                y,
                p_y_given_x: pyx,
                state: DensityMatrix::from_matrix_unchecked(layout.trace_system(rho_yx.matrix())),
            });
            let rho_final = lind.integrate(&rho_yx, tau, cfg)?;
            for (z, e_z) in last.iter().enumerate() {
                let pz = crate::linalg::trace_product(e_z, rho_final.matrix()).re;
                probs[z][y][x] = pz * pyx * px;
            }
        }
    }
    let mut table = OutcomeTable::from_fn(
        t,
        tau,
        scheme.first().values().to_vec(),
        scheme.intermediate().values().to_vec(),
        scheme.last().values().to_vec(),
        |z, y, x| probs[z][y][x],
    );
    table.dropped = dropped;
    Ok(BruteForceStatistics { table, bath_states })
}

fn dephase<T: Real>(rates: &CMatrix<T>, rho: &CMatrix<T>, t: T) -> CMatrix<T> {
    CMatrix::from_fn(rho.nrows(), rho.ncols(), |a, b| {
        if a == b {
            rho[(a, b)]
        } else {
            rho[(a, b)] * cexp(-rates[(a, b)] * t)
        }
    })
}

/// Runs every mixture component as a bare Markovian system and averages the
/// reduced state at `t` and the outcome tables with the component weights.
pub fn simulate_mixture<T: Real>(
    mixture: &MarkovMixture<T>,
    rho0_s: &DensityMatrix<T>,
    scheme: &MeasurementScheme<T>,
    t: T,
    tau: T,
) -> Result<(DensityMatrix<T>, OutcomeTable<T>)> {
    mixture.validate()?;
    let d = mixture.system_dim();
    if rho0_s.dim() != d || scheme.dim() != d {
        return Err(Error::DimensionMismatch("mixture, state and scheme dimensions differ".into()));
    }
    if t < T::zero() || tau < T::zero() {
        return Err(Error::NegativeTime(to_f64(if t < T::zero() { t } else { tau })));
    }
    let (nx, ny, nz) = (scheme.first().len(), scheme.intermediate().len(), scheme.last().len());
    let mut state = CMatrix::<T>::zeros(d, d);
    let mut probs = vec![T::zero(); nx * ny * nz];
    let effects: Vec<CMatrix<T>> = (0..nz).map(|z| scheme.last().effect(z)).collect();
    for c in mixture.components() {
        state += dephase(&c.rates, rho0_s.matrix(), t) * creal(c.weight);
        for (x, pi_x) in scheme.first().operators().iter().enumerate() {
            let rho_x = sandwich(pi_x, rho0_s.matrix());
            let rho_xt = dephase(&c.rates, &rho_x, t);
            for (y, pi_y) in scheme.intermediate().operators().iter().enumerate() {
                let rho_yt = dephase(&c.rates, &sandwich(pi_y, &rho_xt), tau);
                for (z, e) in effects.iter().enumerate() {
                    probs[(z * ny + y) * nx + x] += crate::linalg::trace_product(e, &rho_yt).re * c.weight;
                }
            }
        }
    }
    let table = OutcomeTable::from_fn(
        t,
        tau,
        scheme.first().values().to_vec(),
        scheme.intermediate().values().to_vec(),
        scheme.last().values().to_vec(),
        |z, y, x| probs[(z * ny + y) * nx + x],
    );
    Ok((DensityMatrix::from_matrix_unchecked(state), table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn free_evolution_is_identity() {
        let m = ModelSpec::new(vec![vec![1.0, -1.0], vec![0.0, 1.0, 2.0]], DMatrix::zeros(2, 2), CMatrix::zeros(2, 2))
            .unwrap();
        let rho = DensityMatrix::maximally_mixed(6);
        let out = integrate_lindblad(&m, &rho, 3.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn single_qubit_dephasing_rate() {
        // dρ₊₋/dt = -2γ ρ₊₋ for one qubit with Γ = γ
        let g = 0.7;
        let m = ModelSpec::new(vec![vec![1.0, -1.0]], DMatrix::zeros(1, 1), CMatrix::from_element(1, 1, c(g, 0.0)))
            .unwrap();
        let h = 0.5_f64.sqrt();
        let rho = DensityMatrix::pure(&[c(h, 0.0), c(h, 0.0)]).unwrap();
        let out = integrate_lindblad(&m, &rho, 1.3, &IntegratorConfig::default()).unwrap();
        assert!((out.matrix()[(0, 1)].re - 0.5 * (-2.0 * g * 1.3).exp()).abs() < 1e-10);
    }

    #[test]
    fn cap_and_time_checks() {
        let m = ModelSpec::new(vec![vec![1.0, -1.0]; 3], DMatrix::zeros(3, 3), CMatrix::zeros(3, 3)).unwrap();
        let rho = DensityMatrix::maximally_mixed(8);
        let cfg = IntegratorConfig { dim_cap: 4, ..IntegratorConfig::default() };
        assert!(matches!(integrate_lindblad(&m, &rho, 1.0, &cfg), Err(Error::DimensionCap { .. })));
        assert!(matches!(
            integrate_lindblad(&m, &rho, -1.0, &IntegratorConfig::default()),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn halving_limit_reports_no_convergence() {
        let m = ModelSpec::new(vec![vec![1.0, -1.0]], DMatrix::zeros(1, 1), CMatrix::from_element(1, 1, c(1.0, 0.0)))
            .unwrap();
        let h = 0.5_f64.sqrt();
        let rho = DensityMatrix::pure(&[c(h, 0.0), c(h, 0.0)]).unwrap();
        let cfg = IntegratorConfig { dt: Some(1.0), tol: 1e-15, max_halvings: 1, ..IntegratorConfig::default() };
        assert!(matches!(integrate_lindblad(&m, &rho, 5.0, &cfg), Err(Error::NoConvergence(_))));
    }
}
