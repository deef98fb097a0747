//! Generator definitions: subsystem spectra, Hamiltonian coefficients `h`,
//! dissipative rate matrix `Γ`, the multi-body generalization and the ring
//! coupling family.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::basis::{MultiIndex, ProductBasis};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_min_eigenvalue, hermiticity_defect, CMatrix};
use crate::scalar::{cabs, cconj, cplx, creal, czero, lit, to_f64, tolerance, Real};

/// Hermiticity tolerance on `Γ`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Minimum admissible eigenvalue of `Γ`. Exactly singular matrices (ring
/// endpoints) must pass.
pub const PSD_TOL: f64 = 1e-10;

/// Pairwise generator `-i[H, ρ] + Σ Γij (S_i ρ S_j - ½{S_j S_i, ρ})` with
/// `H = ½ Σ hij S_i S_j`.
///
/// Operators enter only through their eigenvalues; `subsystems[i]` lists the
/// spectrum of `S_i` in basis order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<T: Real> {
    subsystems: Vec<Vec<T>>,
    h: DMatrix<T>,
    gamma: CMatrix<T>,
    basis: ProductBasis,
}

fn check_spectra<T: Real>(subsystems: &[Vec<T>]) -> Result<()> {
    if subsystems.is_empty() {
        return Err(Error::InvalidSize("model needs at least one subsystem".into()));
    }
    for (i, spec) in subsystems.iter().enumerate() {
        if spec.is_empty() {
            return Err(Error::EmptySpectrum { subsystem: i });
        }
        if let Some(k) = spec.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEigenvalue { subsystem: i, index: k });
        }
    }
    if subsystems.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.len())).is_none() {
        return Err(Error::InvalidSize("total dimension overflows the index type".into()));
    }
    Ok(())
}

impl<T: Real> ModelSpec<T> {
    /// Validates and builds a model. `h` is replaced by `(h + hᵀ)/2`.
    pub fn new(subsystems: Vec<Vec<T>>, h: DMatrix<T>, gamma: CMatrix<T>) -> Result<Self> {
        let model = Self::new_indefinite(subsystems, h, gamma)?;
        let min = hermitian_min_eigenvalue(&model.gamma);
        if min < -tolerance::<T>(PSD_TOL) {
            return Err(Error::NotPositiveSemidefinite { what: "gamma".into(), min_eigenvalue: to_f64(min) });
        }
        Ok(model)
    }

    /// Same checks as [`ModelSpec::new`] except positivity of `Γ`.
    ///
    /// Used for transposed generators, which need not be completely positive.
    pub fn new_indefinite(subsystems: Vec<Vec<T>>, h: DMatrix<T>, gamma: CMatrix<T>) -> Result<Self> {
        check_spectra(&subsystems)?;
        let n = subsystems.len();
        if h.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("h is {}x{}, expected {n}x{n}", h.nrows(), h.ncols())));
        }
        if gamma.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "gamma is {}x{}, expected {n}x{n}",
                gamma.nrows(),
                gamma.ncols()
            )));
        }
        if let Some((i, j)) = h.iter().position(|v| !v.is_finite()).map(|k| (k % n, k / n)) {
            return Err(Error::InvalidParameter(format!("h[{i}][{j}] is not finite")));
        }
        let (dev, i, j) = hermiticity_defect(&gamma);
        if !(dev <= tolerance::<T>(HERMITIAN_TOL)) {
            return Err(Error::NonHermitianGamma { i, j, deviation: to_f64(dev) });
        }
        let half = lit::<T>(0.5);
        let h = (&h + h.transpose()) * half;
        let dims: Vec<usize> = subsystems.iter().map(Vec::len).collect();
        Ok(ModelSpec { basis: ProductBasis::new(&dims), subsystems, h, gamma })
    }

    /// Ring family on qubits with spectra `{+1, -1}` and `h = 0`.
    pub fn ring(params: &RingCouplingParams<T>) -> Result<Self> {
        let gamma = ring_gamma(params)?;
        let n = params.n;
        Self::new(vec![vec![T::one(), -T::one()]; n], DMatrix::zeros(n, n), gamma)
    }

    /// Number of subsystems.
    pub fn n(&self) -> usize {
        self.subsystems.len()
    }

    pub fn subsystems(&self) -> &[Vec<T>] {
        &self.subsystems
    }

    pub fn spectrum(&self, i: usize) -> &[T] {
        &self.subsystems[i]
    }

    /// Symmetrized Hamiltonian coefficients.
    pub fn h(&self) -> &DMatrix<T> {
        &self.h
    }

    pub fn gamma(&self) -> &CMatrix<T> {
        &self.gamma
    }

    pub fn basis(&self) -> &ProductBasis {
        &self.basis
    }

    /// Full Hilbert space dimension.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Eigenvalues `(s_1, …, s_n)` labelled by `idx`.
    pub fn eigenvalues(&self, idx: &MultiIndex) -> Result<Vec<T>> {
        self.basis.check(idx)?;
        Ok(idx.0.iter().zip(&self.subsystems).map(|(&p, s)| s[p]).collect())
    }

    /// Eigenvalues of the basis vector with flat index `flat`.
    pub fn eigenvalues_flat(&self, flat: usize, out: &mut [T]) {
        let mut pos = vec![0; self.n()];
        self.basis.positions_into(flat, &mut pos);
        for (k, p) in pos.iter().enumerate() {
            out[k] = self.subsystems[k][*p];
        }
    }
}

/// Validates a raw generator; see [`ModelSpec::new`].
pub fn validate_model<T: Real>(subsystems: Vec<Vec<T>>, h: DMatrix<T>, gamma: CMatrix<T>) -> Result<ModelSpec<T>> {
    ModelSpec::new(subsystems, h, gamma)
}

/// Parameters of the ring coupling matrix
/// `Γjk = (γ - χ) δjk + χ exp(2πi (j - k) λ / n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingCouplingParams<T> {
    pub n: usize,
    pub gamma: T,
    pub chi: T,
    pub lambda: T,
}

impl<T: Real> RingCouplingParams<T> {
    /// The `λ = n/4` member of the family, where couplings alternate between
    /// imaginary and real values.
    pub fn quarter(n: usize, gamma: T, chi: T) -> Self {
        RingCouplingParams { n, gamma, chi, lambda: lit::<T>(n as f64 / 4.0) }
    }
}

/// `exp(2πi r)`, exact when `4r` is an integer.
fn unit_phase<T: Real>(r: T) -> Complex<T> {
    let q = r * lit::<T>(4.0);
    let qr = q.round();
    if (q - qr).abs() < lit::<T>(1e-12) {
        let k = qr.to_i64().unwrap_or(0).rem_euclid(4);
        let (re, im) = match k {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
        return cplx(lit(re), lit(im));
    }
    let a = T::two_pi() * r;
    cplx(a.cos(), a.sin())
}

/// Ring coupling matrix. Positivity is not checked here (see [`ModelSpec::ring`]).
pub fn ring_gamma<T: Real>(params: &RingCouplingParams<T>) -> Result<CMatrix<T>> {
    let n = params.n;
    if n < 2 {
        return Err(Error::InvalidSize(format!("ring needs n >= 2, got {n}")));
    }
    if !(params.gamma.is_finite() && params.chi.is_finite() && params.lambda.is_finite()) {
        return Err(Error::InvalidParameter("ring parameters must be finite".into()));
    }
    let nf = lit::<T>(n as f64);
    Ok(CMatrix::from_fn(n, n, |j, k| {
        if j == k {
            return creal(params.gamma);
        }
        let r = lit::<T>(j as f64 - k as f64) * params.lambda / nf;
        unit_phase(r) * params.chi
    }))
}

/// Admissible range `(-γ/(n-1), γ)` of `χ` for the `λ = n/4` ring.
pub fn chi_bounds<T: Real>(n: usize, gamma: T) -> Result<(T, T)> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("ring needs n >= 2, got {n}")));
    }
    if !(gamma > T::zero()) {
        return Err(Error::InvalidParameter("gamma must be positive".into()));
    }
    Ok((-gamma / lit::<T>((n - 1) as f64), gamma))
}

/// Binary coupling index `μ ∈ {0,1}ⁿ`; `S_μ = ⊗_i (μ_i ? S_i : I)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CouplingIndex(pub Vec<bool>);

impl CouplingIndex {
    pub fn zero(n: usize) -> Self {
        CouplingIndex(vec![false; n])
    }

    /// Weight-one index `e_i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = vec![false; n];
        v[i] = true;
        CouplingIndex(v)
    }

    pub fn pair(n: usize, i: usize, j: usize) -> Self {
        let mut v = vec![false; n];
        v[i] = true;
        v[j] = true;
        CouplingIndex(v)
    }

    pub fn weight(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    /// Eigenvalue `Π_i [μ_i s_i + (1 - μ_i)]` of `S_μ` on a basis vector.
    pub fn eigenvalue<T: Real>(&self, values: &[T]) -> T {
        self.0.iter().zip(values).fold(T::one(), |acc, (&m, &s)| if m { acc * s } else { acc })
    }
}

/// Multi-body generator `-i[H, ρ] + Σ Γμν (S_μ ρ S_ν - ½{S_ν S_μ, ρ})` with
/// `H = ½ Σ hμ S_μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedModelSpec<T: Real> {
    subsystems: Vec<Vec<T>>,
    h_mu: BTreeMap<CouplingIndex, T>,
    gamma_munu: BTreeMap<(CouplingIndex, CouplingIndex), Complex<T>>,
    basis: ProductBasis,
}

impl<T: Real> GeneralizedModelSpec<T> {
    pub fn new(
        subsystems: Vec<Vec<T>>,
        h_mu: BTreeMap<CouplingIndex, T>,
        gamma_munu: BTreeMap<(CouplingIndex, CouplingIndex), Complex<T>>,
    ) -> Result<Self> {
        check_spectra(&subsystems)?;
        let n = subsystems.len();
        let bad_len = |mu: &CouplingIndex| mu.0.len() != n;
        if h_mu.keys().any(bad_len) || gamma_munu.keys().any(|(m, v)| bad_len(m) || bad_len(v)) {
            return Err(Error::DimensionMismatch(format!("coupling indices must have {n} entries")));
        }
        let tol = tolerance::<T>(HERMITIAN_TOL);
        for ((mu, nu), g) in &gamma_munu {
            let partner = gamma_munu.get(&(nu.clone(), mu.clone())).copied().unwrap_or_else(czero);
            let dev = cabs(*g - cconj(partner));
            if dev > tol {
                return Err(Error::InvalidParameter(format!(
                    "gamma_munu not Hermitian at ({:?}, {:?}): deviation {:e}",
                    mu.0,
                    nu.0,
                    to_f64(dev)
                )));
            }
        }
        let support: Vec<CouplingIndex> =
            gamma_munu.keys().flat_map(|(m, v)| [m.clone(), v.clone()]).collect::<BTreeSet<_>>().into_iter().collect();
        let k = support.len();
        let mat = CMatrix::from_fn(k, k, |a, b| {
            gamma_munu.get(&(support[a].clone(), support[b].clone())).copied().unwrap_or_else(czero)
        });
        let min = hermitian_min_eigenvalue(&mat);
        if min < -tolerance::<T>(PSD_TOL) {
            return Err(Error::NotPositiveSemidefinite { what: "gamma_munu".into(), min_eigenvalue: to_f64(min) });
        }
        let dims: Vec<usize> = subsystems.iter().map(Vec::len).collect();
        Ok(GeneralizedModelSpec { basis: ProductBasis::new(&dims), subsystems, h_mu, gamma_munu })
    }

    pub fn n(&self) -> usize {
        self.subsystems.len()
    }

    pub fn subsystems(&self) -> &[Vec<T>] {
        &self.subsystems
    }

    pub fn h_mu(&self) -> &BTreeMap<CouplingIndex, T> {
        &self.h_mu
    }

    pub fn gamma_munu(&self) -> &BTreeMap<(CouplingIndex, CouplingIndex), Complex<T>> {
        &self.gamma_munu
    }

    pub fn basis(&self) -> &ProductBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn eigenvalues(&self, idx: &MultiIndex) -> Result<Vec<T>> {
        self.basis.check(idx)?;
        Ok(idx.0.iter().zip(&self.subsystems).map(|(&p, s)| s[p]).collect())
    }
}

/// Rewrites a pairwise model in the multi-body form.
///
/// `Γμν = Γij` for `μ = e_i`, `ν = e_j` (all `n²` pairs are stored). Cross
/// Hamiltonian terms go to the weight-two index `e_i + e_j` with coefficient
/// `hij + hji`. A diagonal term `hii S_i²` is representable only when `S_i`
/// has at most two distinct eigenvalues `{a, b}`, where `s² = (a + b) s - ab`.
pub fn embed_pairwise<T: Real>(model: &ModelSpec<T>) -> Result<GeneralizedModelSpec<T>> {
    let n = model.n();
    let h = model.h();
    let mut h_mu: BTreeMap<CouplingIndex, T> = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            h_mu.insert(CouplingIndex::pair(n, i, j), h[(i, j)] + h[(j, i)]);
        }
    }
    for i in 0..n {
        let hii = h[(i, i)];
        if hii == T::zero() {
            continue;
        }
        let mut distinct: Vec<T> = Vec::new();
        for &v in model.spectrum(i) {
            if !distinct.contains(&v) {
                distinct.push(v);
            }
        }
        match distinct.as_slice() {
            [a] => {
                *h_mu.entry(CouplingIndex::zero(n)).or_insert_with(T::zero) += hii * *a * *a;
            }
            [a, b] => {
                *h_mu.entry(CouplingIndex::unit(n, i)).or_insert_with(T::zero) += hii * (*a + *b);
                *h_mu.entry(CouplingIndex::zero(n)).or_insert_with(T::zero) -= hii * *a * *b;
            }
            _ => return Err(Error::UnrepresentableDiagonal { subsystem: i, distinct: distinct.len() }),
        }
    }
    let mut gamma_munu = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            gamma_munu.insert((CouplingIndex::unit(n, i), CouplingIndex::unit(n, j)), model.gamma()[(i, j)]);
        }
    }
    GeneralizedModelSpec::new(model.subsystems().to_vec(), h_mu, gamma_munu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigenvalues;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn qubits(n: usize) -> Vec<Vec<f64>> {
        vec![vec![1.0, -1.0]; n]
    }

    #[test]
    fn accepts_bipartite_psd_gamma() {
        let g = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(1.0, 0.0)]);
        assert!(ModelSpec::new(qubits(2), DMatrix::zeros(2, 2), g).is_ok());
    }

    #[test]
    fn accepts_identity_gamma_with_arbitrary_spectra() {
        let spectra = vec![vec![0.3, -2.0, 7.5], vec![1.0]];
        let m = ModelSpec::new(spectra, DMatrix::zeros(2, 2), CMatrix::identity(2, 2)).unwrap();
        assert_eq!(m.dim(), 3);
    }

    #[test]
    fn rejects_indefinite_gamma() {
        let g = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.5, 0.0), c(1.5, 0.0), c(1.0, 0.0)]);
        match ModelSpec::new(qubits(2), DMatrix::zeros(2, 2), g) {
            Err(Error::NotPositiveSemidefinite { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 0.5).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_hermitian_gamma_naming_entry() {
        let g = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.2, 0.1), c(0.2, 0.1), c(1.0, 0.0)]);
        match ModelSpec::new(qubits(2), DMatrix::zeros(2, 2), g) {
            Err(Error::NonHermitianGamma { i: 0, j: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_shape_mismatch_and_empty_spectrum() {
        let r = ModelSpec::new(qubits(2), DMatrix::zeros(3, 3), CMatrix::<f64>::identity(2, 2));
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
        let r = ModelSpec::new(vec![vec![1.0], vec![]], DMatrix::zeros(2, 2), CMatrix::<f64>::identity(2, 2));
        assert!(matches!(r, Err(Error::EmptySpectrum { subsystem: 1 })));
    }

    #[test]
    fn h_is_symmetrized() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        let m = ModelSpec::new(qubits(2), h, CMatrix::<f64>::identity(2, 2)).unwrap();
        assert_eq!(m.h()[(0, 1)], 1.0);
        assert_eq!(m.h()[(1, 0)], 1.0);
    }

    #[test]
    fn ring_two_qubits_quarter() {
        let g = ring_gamma(&RingCouplingParams { n: 2, gamma: 1.0, chi: 0.3, lambda: 0.5 }).unwrap();
        assert_eq!(g[(0, 0)], c(1.0, 0.0));
        assert_eq!(g[(0, 1)], c(0.0, -0.3));
        assert_eq!(g[(1, 0)], c(0.0, 0.3));
        assert_eq!(g[(1, 1)], c(1.0, 0.0));
    }

    #[test]
    fn ring_without_chi_is_diagonal() {
        for (n, lambda) in [(3, 0.37), (5, 1.25), (8, 2.0)] {
            let g = ring_gamma(&RingCouplingParams { n, gamma: 0.7, chi: 0.0, lambda }).unwrap();
            assert!((g - CMatrix::identity(n, n) * c(0.7, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn ring_four_lambda_one_entry() {
        let g = ring_gamma(&RingCouplingParams { n: 4, gamma: 1.0, chi: 0.5, lambda: 1.0 }).unwrap();
        assert_eq!(g[(0, 2)], c(-0.5, 0.0));
    }

    #[test]
    fn ring_quarter_matches_alternating_pattern() {
        // Γjk = (γ-χ)δjk + χ i^(j-1) (-i)^(k-1)
        let (gamma, chi) = (1.0, 0.4);
        for n in 2..9 {
            let g = ring_gamma(&RingCouplingParams::quarter(n, gamma, chi)).unwrap();
            let i = c(0.0, 1.0);
            for j in 0..n {
                for k in 0..n {
                    let expect = if j == k { c(gamma, 0.0) } else { i.powu(j as u32) * (-i).powu(k as u32) * chi };
                    assert!((g[(j, k)] - expect).norm() < 1e-15, "n={n} ({j},{k})");
                }
            }
        }
    }

    #[test]
    fn chi_bounds_values() {
        assert_eq!(chi_bounds(2, 1.0).unwrap(), (-1.0, 1.0));
        let (lo, hi) = chi_bounds(11, 1.0).unwrap();
        assert!((lo + 0.1_f64).abs() < 1e-15 && hi == 1.0);
        assert!(matches!(chi_bounds(1, 1.0), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn chi_bounds_are_psd_boundary() {
        for n in 2..=12 {
            let (lo, hi) = chi_bounds(n, 1.0).unwrap();
            for chi in [lo, hi] {
                let g = ring_gamma(&RingCouplingParams::quarter(n, 1.0, chi)).unwrap();
                let min = hermitian_eigenvalues(&g)[0];
                assert!((-1e-10..=1e-8).contains(&min), "n={n} chi={chi} min={min}");
            }
            let g = ring_gamma(&RingCouplingParams::quarter(n, 1.0, lo - 1e-6)).unwrap();
            assert!(hermitian_eigenvalues(&g)[0] < -1e-10, "n={n}");
            assert!(ModelSpec::ring(&RingCouplingParams::quarter(n, 1.0, lo - 1e-6)).is_err());
        }
    }

    #[test]
    fn embedding_keeps_all_weight_one_pairs() {
        let m = ModelSpec::new(qubits(2), DMatrix::zeros(2, 2), CMatrix::<f64>::identity(2, 2)).unwrap();
        let g = embed_pairwise(&m).unwrap();
        assert_eq!(g.gamma_munu().len(), 4);
        assert!(g.gamma_munu().keys().all(|(a, b)| a.weight() == 1 && b.weight() == 1));
        assert_eq!(g.gamma_munu().values().filter(|z| z.norm() > 0.0).count(), 2);
        assert!(g.h_mu().values().all(|v| *v == 0.0));
    }

    #[test]
    fn embedding_rejects_three_level_diagonal_hamiltonian() {
        let h = DMatrix::from_row_slice(1, 1, &[0.5]);
        let m = ModelSpec::new(vec![vec![-1.0, 0.0, 1.0]], h, CMatrix::<f64>::identity(1, 1)).unwrap();
        assert!(matches!(embed_pairwise(&m), Err(Error::UnrepresentableDiagonal { subsystem: 0, distinct: 3 })));
    }

    #[test]
    fn generalized_rejects_non_hermitian_and_indefinite() {
        let mu = CouplingIndex(vec![true, true]);
        let nu = CouplingIndex(vec![true, false]);
        let mut g = BTreeMap::new();
        g.insert((mu.clone(), nu.clone()), c(0.0, 0.5));
        g.insert((nu.clone(), mu.clone()), c(0.0, 0.5));
        assert!(GeneralizedModelSpec::new(qubits(2), BTreeMap::new(), g).is_err());
        let mut g = BTreeMap::new();
        g.insert((mu.clone(), mu.clone()), c(-1.0, 0.0));
        assert!(matches!(
            GeneralizedModelSpec::new(qubits(2), BTreeMap::new(), g),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let g = ring_gamma(&RingCouplingParams::quarter(4, 1.0f32, 0.5)).unwrap();
        let m = ModelSpec::<f32>::new(
            qubits(4).into_iter().map(|v| v.into_iter().map(|x| x as f32).collect()).collect(),
            DMatrix::zeros(4, 4),
            g,
        );
        assert!(m.is_ok());
    }
}
