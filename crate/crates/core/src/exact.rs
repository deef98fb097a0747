//! Dephasing-rate tensor and the closed-form evolution
//! `⟨s̃|ρ_t|s⟩ = ⟨s̃|ρ_0|s⟩ exp(-Φ_{s̃,s} t)`.

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;

use crate::basis::MultiIndex;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_min_eigenvalue, hermiticity_defect, kron, trace, CMatrix};
use crate::model::{GeneralizedModelSpec, ModelSpec};
use crate::scalar::{cabs, cexp, cplx, creal, czero, lit, to_f64, tolerance, Real};

/// Largest dimension for which [`PhiTensor`] stores the dense `d²` table.
pub const PHI_CACHE_DIM: usize = 256;

/// `Ω_s = ½ Σ hij s_i s_j` on raw eigenvalues.
pub(crate) fn omega_values<T: Real>(h: &DMatrix<T>, s: &[T]) -> T {
    let mut acc = T::zero();
    for i in 0..s.len() {
        for j in 0..s.len() {
            acc += h[(i, j)] * s[i] * s[j];
        }
    }
    acc * lit(0.5)
}

/// `Υ = Σ (s̃i - si)(Γij/2)(s̃j - sj) + Σ (Γij/2)(s̃j si - s̃i sj)`.
pub(crate) fn upsilon_values<T: Real>(gamma: &CMatrix<T>, st: &[T], s: &[T]) -> Complex<T> {
    let half = lit::<T>(0.5);
    let mut quad = czero::<T>();
    let mut anti = czero::<T>();
    for i in 0..s.len() {
        for j in 0..s.len() {
            let g = gamma[(i, j)] * half;
            quad += g * ((st[i] - s[i]) * (st[j] - s[j]));
            anti += g * (st[j] * s[i] - st[i] * s[j]);
        }
    }
    quad + anti
}

pub(crate) fn phi_values<T: Real>(model: &ModelSpec<T>, st: &[T], s: &[T]) -> Complex<T> {
    let dw = omega_values(model.h(), st) - omega_values(model.h(), s);
    cplx(T::zero(), dw) + upsilon_values(model.gamma(), st, s)
}

/// Hamiltonian frequency `Ω_s`.
pub fn omega<T: Real>(model: &ModelSpec<T>, s: &MultiIndex) -> Result<T> {
    Ok(omega_values(model.h(), &model.eigenvalues(s)?))
}

/// Dissipative part `Υ_{s̃,s}` of the dephasing rate.
pub fn upsilon<T: Real>(model: &ModelSpec<T>, s_tilde: &MultiIndex, s: &MultiIndex) -> Result<Complex<T>> {
    Ok(upsilon_values(model.gamma(), &model.eigenvalues(s_tilde)?, &model.eigenvalues(s)?))
}

/// `Φ_{s̃,s} = i(Ω_s̃ - Ω_s) + Υ_{s̃,s}`.
pub fn phi<T: Real>(model: &ModelSpec<T>, s_tilde: &MultiIndex, s: &MultiIndex) -> Result<Complex<T>> {
    Ok(phi_values(model, &model.eigenvalues(s_tilde)?, &model.eigenvalues(s)?))
}

/// All rates `Φ_{a,b}` over flat basis indices. Dense up to
/// [`PHI_CACHE_DIM`], computed per element beyond that.
#[derive(Debug, Clone)]
pub struct PhiTensor<'a, T: Real> {
    model: &'a ModelSpec<T>,
    values: Vec<Vec<T>>,
    omegas: Vec<T>,
    cache: Option<Vec<Complex<T>>>,
}

impl<'a, T: Real> PhiTensor<'a, T> {
    pub fn new(model: &'a ModelSpec<T>) -> Self {
        let d = model.dim();
        let values: Vec<Vec<T>> = (0..d)
            .map(|k| {
                let mut v = vec![T::zero(); model.n()];
                model.eigenvalues_flat(k, &mut v);
                v
            })
            .collect();
        let omegas = values.iter().map(|v| omega_values(model.h(), v)).collect();
        let mut t = PhiTensor { model, values, omegas, cache: None };
        if d <= PHI_CACHE_DIM {
            let cache = (0..d * d).into_par_iter().map(|k| t.compute(k / d, k % d)).collect();
            t.cache = Some(cache);
        }
        t
    }

    fn compute(&self, a: usize, b: usize) -> Complex<T> {
        if a == b {
            return czero();
        }
        cplx(T::zero(), self.omegas[a] - self.omegas[b])
            + upsilon_values(self.model.gamma(), &self.values[a], &self.values[b])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn model(&self) -> &ModelSpec<T> {
        self.model
    }

    pub fn get(&self, a: usize, b: usize) -> Complex<T> {
        match &self.cache {
            Some(c) => c[a * self.dim() + b],
            None => self.compute(a, b),
        }
    }

    /// Propagates `rho0` elementwise by `exp(-Φ t)`.
    pub fn propagate(&self, rho0: &CMatrix<T>, t: T) -> CMatrix<T> {
        let d = self.dim();
        let data: Vec<Complex<T>> = (0..d * d)
            .into_par_iter()
            .map(|k| {
                // column-major storage
                let (a, b) = (k % d, k / d);
                if a == b {
                    rho0[(a, b)]
                } else {
                    rho0[(a, b)] * cexp(-self.get(a, b) * t)
                }
            })
            .collect();
        CMatrix::from_vec(d, d, data)
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix in the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    m: CMatrix<T>,
}

pub const STATE_HERMITIAN_TOL: f64 = 1e-12;
pub const STATE_TRACE_TOL: f64 = 1e-12;
pub const STATE_PSD_TOL: f64 = 1e-9;

impl<T: Real> DensityMatrix<T> {
    pub fn new(m: CMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidState(format!("matrix is {}x{}", m.nrows(), m.ncols())));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidState("empty matrix".into()));
        }
        let (dev, i, j) = hermiticity_defect(&m);
        if !(dev <= tolerance::<T>(STATE_HERMITIAN_TOL)) {
            return Err(Error::InvalidState(format!("not Hermitian at ({i}, {j}): {:e}", to_f64(dev))));
        }
        let tr = trace(&m);
        if !(cabs(tr - creal(T::one())) <= tolerance::<T>(STATE_TRACE_TOL)) {
            return Err(Error::InvalidState(format!("trace is {} + {}i", to_f64(tr.re), to_f64(tr.im))));
        }
        let min = hermitian_min_eigenvalue(&m);
        if min < -tolerance::<T>(STATE_PSD_TOL) {
            return Err(Error::InvalidState(format!("minimum eigenvalue {:e}", to_f64(min))));
        }
        Ok(DensityMatrix { m })
    }

    /// Wraps a matrix known to be a state (e.g. the image of a valid state
    /// under a CPTP map) without re-checking it.
    pub fn from_matrix_unchecked(m: CMatrix<T>) -> Self {
        DensityMatrix { m }
    }

    /// `|ψ⟩⟨ψ|` with `ψ` normalized.
    pub fn pure(psi: &[Complex<T>]) -> Result<Self> {
        let norm = psi.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
        if !(norm > T::zero()) {
            return Err(Error::InvalidState("zero vector".into()));
        }
        let d = psi.len();
        let m = CMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / creal(norm * norm));
        Ok(DensityMatrix { m })
    }

    /// Diagonal state with the given populations.
    pub fn diagonal(pops: &[T]) -> Result<Self> {
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(pops.len(), pops.iter().map(|p| creal(*p))));
        Self::new(m)
    }

    /// Maximally mixed state of dimension `d`.
    pub fn maximally_mixed(d: usize) -> Self {
        let p = T::one() / lit::<T>(d as f64);
        DensityMatrix { m: CMatrix::identity(d, d) * creal(p) }
    }

    /// Tensor product in basis order (`self` is the slower index).
    pub fn kron(&self, other: &DensityMatrix<T>) -> Self {
        DensityMatrix { m: kron(&self.m, &other.m) }
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn trace(&self) -> Complex<T> {
        trace(&self.m)
    }

    pub fn min_eigenvalue(&self) -> T {
        hermitian_min_eigenvalue(&self.m)
    }

    pub fn populations(&self) -> Vec<T> {
        (0..self.dim()).map(|k| self.m[(k, k)].re).collect()
    }
}

pub(crate) fn check_time<T: Real>(t: T) -> Result<()> {
    if t < T::zero() || !t.is_finite() {
        return Err(Error::NegativeTime(to_f64(t)));
    }
    Ok(())
}

pub(crate) fn check_state_dim<T: Real>(rho: &DensityMatrix<T>, d: usize, what: &str) -> Result<()> {
    if rho.dim() != d {
        return Err(Error::DimensionMismatch(format!("{what} has dimension {}, expected {d}", rho.dim())));
    }
    Ok(())
}

/// Exact state at time `t`. Populations are copied, never recomputed.
pub fn evolve<T: Real>(model: &ModelSpec<T>, rho0: &DensityMatrix<T>, t: T) -> Result<DensityMatrix<T>> {
    check_time(t)?;
    check_state_dim(rho0, model.dim(), "initial state")?;
    Ok(DensityMatrix::from_matrix_unchecked(PhiTensor::new(model).propagate(rho0.matrix(), t)))
}

/// Multi-body frequency `ω_s = ½ Σ_μ λ_s^μ h_μ`.
pub(crate) fn generalized_omega_values<T: Real>(g: &GeneralizedModelSpec<T>, s: &[T]) -> T {
    g.h_mu().iter().fold(T::zero(), |acc, (mu, h)| acc + mu.eigenvalue(s) * *h) * lit(0.5)
}

/// Multi-body dissipative rate
/// `Υ = Σ Γμν (½ λ_s̃^μ λ_s̃^ν + ½ λ_s^μ λ_s^ν - λ_s̃^μ λ_s^ν)`.
///
/// This is the sign that reduces to the pairwise `Υ` for `μ = e_i`, `ν = e_j`
/// and keeps `Re Υ ≥ 0` for positive `Γμν`.
pub(crate) fn generalized_upsilon_values<T: Real>(g: &GeneralizedModelSpec<T>, st: &[T], s: &[T]) -> Complex<T> {
    let half = lit::<T>(0.5);
    g.gamma_munu().iter().fold(czero(), |acc, ((mu, nu), rate)| {
        let (lt_mu, lt_nu) = (mu.eigenvalue(st), nu.eigenvalue(st));
        let (l_mu, l_nu) = (mu.eigenvalue(s), nu.eigenvalue(s));
        acc + *rate * (half * lt_mu * lt_nu + half * l_mu * l_nu - lt_mu * l_nu)
    })
}

pub fn generalized_phi<T: Real>(
    g: &GeneralizedModelSpec<T>,
    s_tilde: &MultiIndex,
    s: &MultiIndex,
) -> Result<Complex<T>> {
    let st = g.eigenvalues(s_tilde)?;
    let sv = g.eigenvalues(s)?;
    let dw = generalized_omega_values(g, &st) - generalized_omega_values(g, &sv);
    Ok(cplx(T::zero(), dw) + generalized_upsilon_values(g, &st, &sv))
}

/// Closed-form evolution under a multi-body generator.
pub fn evolve_generalized<T: Real>(
    g: &GeneralizedModelSpec<T>,
    rho0: &DensityMatrix<T>,
    t: T,
) -> Result<DensityMatrix<T>> {
    check_time(t)?;
    check_state_dim(rho0, g.dim(), "initial state")?;
    let d = g.dim();
    let basis = g.basis();
    let values: Vec<Vec<T>> = (0..d).map(|k| g.eigenvalues(&basis.multi_index(k)).expect("in range")).collect();
    let omegas: Vec<T> = values.iter().map(|v| generalized_omega_values(g, v)).collect();
    let m = CMatrix::from_fn(d, d, |a, b| {
        if a == b {
            return rho0.matrix()[(a, b)];
        }
        let phi = cplx(T::zero(), omegas[a] - omegas[b]) + generalized_upsilon_values(g, &values[a], &values[b]);
        rho0.matrix()[(a, b)] * cexp(-phi * t)
    });
    Ok(DensityMatrix::from_matrix_unchecked(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{embed_pairwise, CouplingIndex};
    use std::collections::BTreeMap;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn bipartite(gamma: f64, beta: f64, chi: Complex<f64>, omega: f64) -> ModelSpec<f64> {
        let g = CMatrix::from_row_slice(2, 2, &[c(gamma, 0.0), chi, chi.conj(), c(beta, 0.0)]);
        let h = DMatrix::from_row_slice(2, 2, &[0.0, omega, omega, 0.0]);
        ModelSpec::new(vec![vec![1.0, -1.0]; 2], h, g).unwrap()
    }

    #[test]
    fn omega_zero_without_hamiltonian() {
        let m = bipartite(1.0, 1.0, c(0.2, 0.3), 0.0);
        for s in m.basis().iter() {
            assert_eq!(omega(&m, &s).unwrap(), 0.0);
        }
    }

    #[test]
    fn omega_of_product_coupling() {
        let m = bipartite(1.0, 1.0, c(0.0, 0.0), 0.7);
        assert!((omega(&m, &MultiIndex(vec![0, 0])).unwrap() - 0.7).abs() < 1e-15);
        assert!((omega(&m, &MultiIndex(vec![0, 1])).unwrap() + 0.7).abs() < 1e-15);
    }

    #[test]
    fn upsilon_bipartite_fully_flipped() {
        // s̃ = (+,+), s = (-,-): 2γ + 2β + 4χ_R
        let (gamma, beta, chi) = (0.9, 1.3, c(0.25, -0.4));
        let m = bipartite(gamma, beta, chi, 0.0);
        let u = upsilon(&m, &MultiIndex(vec![0, 0]), &MultiIndex(vec![1, 1])).unwrap();
        assert!((u - c(2.0 * gamma + 2.0 * beta + 4.0 * chi.re, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn upsilon_real_for_real_gamma() {
        let m = bipartite(1.0, 0.8, c(0.3, 0.0), 0.0);
        for a in m.basis().iter() {
            for b in m.basis().iter() {
                assert_eq!(upsilon(&m, &a, &b).unwrap().im, 0.0);
            }
        }
    }

    #[test]
    fn bipartite_phi_matches_closed_display() {
        // Φ = iΩ(s̃b̃ - sb) - iχ_I(s̃b - sb̃) + γ/2 (s̃-s)² + β/2 (b̃-b)² + χ_R (s̃-s)(b̃-b)
        let (gamma, beta, chi, om) = (0.9, 1.3, c(0.25, -0.4), 0.35);
        let m = bipartite(gamma, beta, chi, om);
        for a in m.basis().iter() {
            for b in m.basis().iter() {
                let v = |idx: &MultiIndex| m.eigenvalues(idx).unwrap();
                let (st, bt) = (v(&a)[0], v(&a)[1]);
                let (s, bb) = (v(&b)[0], v(&b)[1]);
                let expect = c(0.0, om * (st * bt - s * bb)) - c(0.0, chi.im * (st * bb - s * bt))
                    + c(
                        gamma / 2.0 * (st - s).powi(2) + beta / 2.0 * (bt - bb).powi(2) + chi.re * (st - s) * (bt - bb),
                        0.0,
                    );
                assert!((phi(&m, &a, &b).unwrap() - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn evolve_rejects_negative_time_and_wrong_dimension() {
        let m = bipartite(1.0, 1.0, c(0.0, 0.0), 0.0);
        let rho = DensityMatrix::<f64>::maximally_mixed(4);
        assert!(matches!(evolve(&m, &rho, -1.0), Err(Error::NegativeTime(_))));
        let rho = DensityMatrix::<f64>::maximally_mixed(2);
        assert!(matches!(evolve(&m, &rho, 1.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn evolve_at_zero_is_identity_and_diagonal_states_are_frozen() {
        let m = bipartite(1.0, 1.0, c(0.2, 0.4), 0.3);
        let plus = [c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)];
        let rho = DensityMatrix::pure(&plus).unwrap();
        assert_eq!(evolve(&m, &rho, 0.0).unwrap(), rho);
        let diag = DensityMatrix::diagonal(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(evolve(&m, &diag, 3.7).unwrap(), diag);
    }

    #[test]
    fn density_matrix_validation() {
        let bad = CMatrix::<f64>::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(DensityMatrix::new(bad).is_err());
        let neg = CMatrix::<f64>::from_row_slice(2, 2, &[c(1.2, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.2, 0.0)]);
        assert!(DensityMatrix::new(neg).is_err());
    }

    #[test]
    fn generalized_all_zero_index_contributes_nothing() {
        let n = 2;
        let mut g = BTreeMap::new();
        g.insert((CouplingIndex::zero(n), CouplingIndex::zero(n)), c(0.8, 0.0));
        let gm = GeneralizedModelSpec::new(vec![vec![1.0, -1.0]; n], BTreeMap::new(), g).unwrap();
        for a in gm.basis().iter() {
            for b in gm.basis().iter() {
                assert_eq!(generalized_phi(&gm, &a, &b).unwrap(), c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn generalized_three_body_rate() {
        let n = 3;
        let mu = CouplingIndex(vec![true; 3]);
        let rate = 0.6;
        let mut g = BTreeMap::new();
        g.insert((mu.clone(), mu.clone()), c(rate, 0.0));
        let gm = GeneralizedModelSpec::new(vec![vec![1.0, -1.0]; n], BTreeMap::new(), g).unwrap();
        // λ_s̃ = +1, λ_s = -1: Γ(½ + ½ + 1) = 2Γ
        let v = generalized_phi(&gm, &MultiIndex(vec![0, 0, 0]), &MultiIndex(vec![0, 0, 1])).unwrap();
        assert!((v - c(2.0 * rate, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn embedded_pairwise_rates_match_on_two_qubits() {
        let m = bipartite(0.9, 1.3, c(0.25, -0.4), 0.35);
        let g = embed_pairwise(&m).unwrap();
        for a in m.basis().iter() {
            for b in m.basis().iter() {
                let d = generalized_phi(&g, &a, &b).unwrap() - phi(&m, &a, &b).unwrap();
                assert!(d.norm() < 1e-14);
            }
        }
    }
}
