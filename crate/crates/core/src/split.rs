//! System/environment partition of the subsystems: decomposed dephasing rates,
//! reduced states, and the necessary condition for memory effects.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::basis::{MultiIndex, ProductBasis};
use crate::error::{Error, Result};
use crate::exact::{check_state_dim, check_time, omega_values, phi_values, upsilon_values, DensityMatrix};
use crate::linalg::CMatrix;
use crate::model::ModelSpec;
use crate::scalar::{cabs, cexp, cplx, czero, lit, to_f64, tolerance, Real};

/// Threshold separating structural zeros from round-off in the memory predicate.
/// Largest full-space dimension for which a flat index layout is built.
pub const LAYOUT_CAP: usize = 1 << 22;
pub const WITNESS_THRESHOLD: f64 = 1e-14;
/// Normalization tolerance on environment populations.
pub const POPULATION_TOL: f64 = 1e-12;
/// Below this modulus a coherence factor is treated as vanished.
pub const COHERENCE_ZERO: f64 = 1e-12;

/// Ordered, disjoint system and bath subsystem indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    system: Vec<usize>,
    bath: Vec<usize>,
}

impl SplitSpec {
    pub fn new(system: Vec<usize>, bath: Vec<usize>, n: usize) -> Result<Self> {
        if system.is_empty() || bath.is_empty() {
            return Err(Error::InvalidSplit("system and bath must both be non-empty".into()));
        }
        let mut seen = vec![false; n];
        for &k in system.iter().chain(&bath) {
            if k >= n {
                return Err(Error::InvalidSplit(format!("subsystem {} does not exist (n = {n})", k + 1)));
            }
            if seen[k] {
                return Err(Error::InvalidSplit(format!("subsystem {} listed twice", k + 1)));
            }
            seen[k] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidSplit(format!("subsystem {} is in neither set", k + 1)));
        }
        Ok(SplitSpec { system, bath })
    }

    /// Builds a split from 1-based labels, as used in config files.
    pub fn from_one_based(system: &[usize], bath: &[usize], n: usize) -> Result<Self> {
        let shift = |v: &[usize]| -> Result<Vec<usize>> {
            v.iter()
                .map(|&k| k.checked_sub(1).ok_or_else(|| Error::InvalidSplit("labels are 1-based".into())))
                .collect()
        };
        Self::new(shift(system)?, shift(bath)?, n)
    }

    /// First `n_system` subsystems form the system.
    pub fn leading(n_system: usize, n: usize) -> Result<Self> {
        Self::new((0..n_system).collect(), (n_system..n).collect(), n)
    }

    pub fn system(&self) -> &[usize] {
        &self.system
    }

    pub fn bath(&self) -> &[usize] {
        &self.bath
    }

    pub fn n(&self) -> usize {
        self.system.len() + self.bath.len()
    }

    fn check_model<T: Real>(&self, model: &ModelSpec<T>) -> Result<()> {
        if self.n() != model.n() {
            return Err(Error::DimensionMismatch(format!(
                "split covers {} subsystems, model has {}",
                self.n(),
                model.n()
            )));
        }
        Ok(())
    }

    pub fn system_basis<T: Real>(&self, model: &ModelSpec<T>) -> ProductBasis {
        ProductBasis::new(&self.system.iter().map(|&k| model.spectrum(k).len()).collect::<Vec<_>>())
    }

    pub fn bath_basis<T: Real>(&self, model: &ModelSpec<T>) -> ProductBasis {
        ProductBasis::new(&self.bath.iter().map(|&k| model.spectrum(k).len()).collect::<Vec<_>>())
    }

    /// Full multi-index of `|s b⟩`.
    pub fn merge(&self, s: &MultiIndex, b: &MultiIndex) -> MultiIndex {
        let mut full = vec![0; self.n()];
        for (k, &i) in self.system.iter().enumerate() {
            full[i] = s.0[k];
        }
        for (k, &j) in self.bath.iter().enumerate() {
            full[j] = b.0[k];
        }
        MultiIndex(full)
    }

    /// Flat-index bookkeeping between the full space and `system ⊗ bath`.
    pub fn layout<T: Real>(&self, model: &ModelSpec<T>) -> Result<SplitLayout> {
        self.check_model(model)?;
        if model.dim() > LAYOUT_CAP {
            return Err(Error::DimensionCap { dim: model.dim(), cap: LAYOUT_CAP });
        }
        let sb = self.system_basis(model);
        let bb = self.bath_basis(model);
        let mut full = Vec::with_capacity(sb.len() * bb.len());
        for s in sb.iter() {
            for b in bb.iter() {
                full.push(model.basis().index_of(&self.merge(&s, &b)));
            }
        }
        Ok(SplitLayout { system_dim: sb.len(), bath_dim: bb.len(), full })
    }

    fn system_values<T: Real>(&self, model: &ModelSpec<T>, s: &MultiIndex) -> Vec<T> {
        self.system.iter().zip(&s.0).map(|(&i, &p)| model.spectrum(i)[p]).collect()
    }

    fn bath_values<T: Real>(&self, model: &ModelSpec<T>, b: &MultiIndex) -> Vec<T> {
        self.bath.iter().zip(&b.0).map(|(&j, &p)| model.spectrum(j)[p]).collect()
    }

    fn check_indices<T: Real>(&self, model: &ModelSpec<T>, s: &[&MultiIndex], b: &[&MultiIndex]) -> Result<()> {
        self.check_model(model)?;
        let sb = self.system_basis(model);
        let bb = self.bath_basis(model);
        for idx in s {
            sb.check(idx)?;
        }
        for idx in b {
            bb.check(idx)?;
        }
        Ok(())
    }
}

/// Maps `(system flat, bath flat)` to the full flat index.
#[derive(Debug, Clone)]
pub struct SplitLayout {
    pub system_dim: usize,
    pub bath_dim: usize,
    full: Vec<usize>,
}

impl SplitLayout {
    #[inline]
    pub fn full(&self, s: usize, b: usize) -> usize {
        self.full[s * self.bath_dim + b]
    }

    /// `ρ_s ⊗ ρ_e` placed in the full basis ordering.
    pub fn product<T: Real>(&self, rho_s: &CMatrix<T>, rho_e: &CMatrix<T>) -> CMatrix<T> {
        let d = self.system_dim * self.bath_dim;
        let mut out = CMatrix::zeros(d, d);
        for st in 0..self.system_dim {
            for s in 0..self.system_dim {
                for bt in 0..self.bath_dim {
                    for b in 0..self.bath_dim {
                        out[(self.full(st, bt), self.full(s, b))] = rho_s[(st, s)] * rho_e[(bt, b)];
                    }
                }
            }
        }
        out
    }

    /// `A ⊗ I_B` in the full basis ordering.
    pub fn embed_system_operator<T: Real>(&self, op: &CMatrix<T>) -> CMatrix<T> {
        let d = self.system_dim * self.bath_dim;
        let mut out = CMatrix::zeros(d, d);
        for st in 0..self.system_dim {
            for s in 0..self.system_dim {
                for b in 0..self.bath_dim {
                    out[(self.full(st, b), self.full(s, b))] = op[(st, s)];
                }
            }
        }
        out
    }

    /// Partial trace over the bath.
    pub fn trace_bath<T: Real>(&self, full: &CMatrix<T>) -> CMatrix<T> {
        CMatrix::from_fn(self.system_dim, self.system_dim, |st, s| {
            (0..self.bath_dim).fold(czero::<T>(), |acc, b| acc + full[(self.full(st, b), self.full(s, b))])
        })
    }

    /// Partial trace over the system.
    pub fn trace_system<T: Real>(&self, full: &CMatrix<T>) -> CMatrix<T> {
        CMatrix::from_fn(self.bath_dim, self.bath_dim, |bt, b| {
            (0..self.system_dim).fold(czero::<T>(), |acc, s| acc + full[(self.full(s, bt), self.full(s, b))])
        })
    }
}

/// Three-way decomposition of `Φ_{s̃b̃,sb}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPhi<T: Real> {
    /// `i(Ω_s̃ - Ω_s) + Υ_{s̃,s}` restricted to system subsystems.
    pub system_part: Complex<T>,
    /// `i(Ω_b̃ - Ω_b) + Υ_{b̃,b}` restricted to bath subsystems.
    pub bath_part: Complex<T>,
    /// System-bath coupling: `χ_{s̃b̃,sb}` plus the cross Hamiltonian frequency.
    pub cross_part: Complex<T>,
}

impl<T: Real> SplitPhi<T> {
    pub fn total(&self) -> Complex<T> {
        self.system_part + self.bath_part + self.cross_part
    }
}

fn sub_real<T: Real>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

fn sub_complex<T: Real>(m: &CMatrix<T>, idx: &[usize]) -> CMatrix<T> {
    CMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

fn restricted_phi<T: Real>(h: &DMatrix<T>, g: &CMatrix<T>, xt: &[T], x: &[T]) -> Complex<T> {
    cplx(T::zero(), omega_values(h, xt) - omega_values(h, x)) + upsilon_values(g, xt, x)
}

/// Decomposes `Φ_{s̃b̃,sb}` into system, bath and coupling parts.
pub fn split_phi<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    s_tilde: &MultiIndex,
    b_tilde: &MultiIndex,
    s: &MultiIndex,
    b: &MultiIndex,
) -> Result<SplitPhi<T>> {
    split.check_indices(model, &[s_tilde, s], &[b_tilde, b])?;
    let (sv_t, sv) = (split.system_values(model, s_tilde), split.system_values(model, s));
    let (bv_t, bv) = (split.bath_values(model, b_tilde), split.bath_values(model, b));
    let (si, bi) = (split.system(), split.bath());
    let system_part = restricted_phi(&sub_real(model.h(), si), &sub_complex(model.gamma(), si), &sv_t, &sv);
    let bath_part = restricted_phi(&sub_real(model.h(), bi), &sub_complex(model.gamma(), bi), &bv_t, &bv);
    let half = lit::<T>(0.5);
    let (h, g) = (model.h(), model.gamma());
    let mut freq = T::zero();
    let mut chi = czero::<T>();
    for (a, &i) in si.iter().enumerate() {
        for (k, &j) in bi.iter().enumerate() {
            let hs = (h[(i, j)] + h[(j, i)]) * half;
            freq += hs * (sv_t[a] * bv_t[k] - sv[a] * bv[k]);
            let sym = (g[(i, j)] + g[(j, i)]) * half;
            let anti = (g[(i, j)] - g[(j, i)]) * half;
            chi += sym * ((sv_t[a] - sv[a]) * (bv_t[k] - bv[k]));
            chi += anti * (bv_t[k] * sv[a] - sv_t[a] * bv[k]);
        }
    }
    Ok(SplitPhi { system_part, bath_part, cross_part: chi + cplx(T::zero(), freq) })
}

/// `Φ_{s̃b,sb} = Φ_{s̃,s} + Σ i((hij+hji)/2)(s̃i - si) bj - Σ ((Γij-Γji)/2)(s̃i - si) bj`.
pub fn partial_diagonal_phi<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    s_tilde: &MultiIndex,
    s: &MultiIndex,
    b: &MultiIndex,
) -> Result<Complex<T>> {
    split.check_indices(model, &[s_tilde, s], &[b])?;
    let rates = PartialDiagonalRates::new(model, split)?;
    let sb = split.system_basis(model);
    let pair = rates.pair(sb.index_of(s_tilde), sb.index_of(s));
    Ok(rates.rate(pair, &split.bath_values(model, b)))
}

/// Per-system-pair data for `Φ_{s̃b,sb} = base(s̃,s) + Σ_j c_j(s̃,s) b_j`.
///
/// Everything bath-diagonal in the reduced dynamics (coherence factors,
/// outcome statistics, the mixture representation) runs through this table.
#[derive(Debug, Clone)]
pub struct PartialDiagonalRates<T: Real> {
    system_dim: usize,
    base: Vec<Complex<T>>,
    coeff: Vec<Complex<T>>,
    bath_spectra: Vec<Vec<T>>,
    bath_basis: ProductBasis,
}

impl<T: Real> PartialDiagonalRates<T> {
    pub fn new(model: &ModelSpec<T>, split: &SplitSpec) -> Result<Self> {
        split.check_model(model)?;
        let sb = split.system_basis(model);
        let (si, bi) = (split.system(), split.bath());
        let hs = sub_real(model.h(), si);
        let gs = sub_complex(model.gamma(), si);
        let half = lit::<T>(0.5);
        // coupling[a][k] = i (h_ij + h_ji)/2 - (Γij - Γji)/2, i = si[a], j = bi[k]
        let coupling: Vec<Vec<Complex<T>>> = si
            .iter()
            .map(|&i| {
                bi.iter()
                    .map(|&j| {
                        let hsym = (model.h()[(i, j)] + model.h()[(j, i)]) * half;
                        cplx(T::zero(), hsym) - (model.gamma()[(i, j)] - model.gamma()[(j, i)]) * half
                    })
                    .collect()
            })
            .collect();
        let ds = sb.len();
        let nb = bi.len();
        let values: Vec<Vec<T>> = sb.iter().map(|s| split.system_values(model, &s)).collect();
        let mut base = Vec::with_capacity(ds * ds);
        let mut coeff = Vec::with_capacity(ds * ds * nb);
        for st in &values {
            for s in &values {
                base.push(if st == s { czero::<T>() } else { restricted_phi(&hs, &gs, st, s) });
                for k in 0..nb {
                    let c = (0..si.len()).fold(czero::<T>(), |acc, a| acc + coupling[a][k] * (st[a] - s[a]));
                    coeff.push(c);
                }
            }
        }
        Ok(PartialDiagonalRates {
            system_dim: ds,
            base,
            coeff,
            bath_spectra: bi.iter().map(|&j| model.spectrum(j).to_vec()).collect(),
            bath_basis: split.bath_basis(model),
        })
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn bath_basis(&self) -> &ProductBasis {
        &self.bath_basis
    }

    pub fn bath_spectra(&self) -> &[Vec<T>] {
        &self.bath_spectra
    }

    #[inline]
    pub fn pair(&self, s_tilde: usize, s: usize) -> usize {
        s_tilde * self.system_dim + s
    }

    /// `Φ_{s̃,s}` restricted to the system.
    pub fn base(&self, pair: usize) -> Complex<T> {
        self.base[pair]
    }

    /// Coefficients `c_j` multiplying bath eigenvalues.
    pub fn coefficients(&self, pair: usize) -> &[Complex<T>] {
        let nb = self.bath_spectra.len();
        &self.coeff[pair * nb..(pair + 1) * nb]
    }

    /// `Φ_{s̃b,sb}` for explicit bath eigenvalues.
    pub fn rate(&self, pair: usize, bath_values: &[T]) -> Complex<T> {
        self.coefficients(pair).iter().zip(bath_values).fold(self.base[pair], |acc, (c, b)| acc + *c * *b)
    }

    /// `Φ_{s̃b,sb}` for the bath basis state with flat index `b`.
    pub fn rate_flat(&self, pair: usize, b: usize) -> Complex<T> {
        let pos = self.bath_basis.multi_index(b);
        let vals: Vec<T> = pos.0.iter().zip(&self.bath_spectra).map(|(&p, s)| s[p]).collect();
        self.rate(pair, &vals)
    }

    /// `Σ_b q_b exp(-Σ_k t_k Φ_{s̃_k b, s_k b})` over the bath populations.
    ///
    /// Product-form populations are summed per bath subsystem, which is exact
    /// because the exponent is linear in each `b_j`.
    pub fn bath_average(&self, env: &EnvPopulations<T>, terms: &[(usize, T)]) -> Complex<T> {
        let nb = self.bath_spectra.len();
        let mut base = czero::<T>();
        let mut kappa = vec![czero::<T>(); nb];
        for &(pair, t) in terms {
            base += self.base[pair] * t;
            for (k, c) in self.coefficients(pair).iter().enumerate() {
                kappa[k] += *c * t;
            }
        }
        let prefactor = cexp(-base);
        match env {
            EnvPopulations::Product(per) => {
                let mut acc = prefactor;
                for (k, (q, spec)) in per.iter().zip(&self.bath_spectra).enumerate() {
                    let factor = q.iter().zip(spec).fold(czero::<T>(), |a, (&qm, &bm)| {
                        if qm == T::zero() {
                            a
                        } else {
                            a + cexp(-kappa[k] * bm) * qm
                        }
                    });
                    acc *= factor;
                }
                acc
            }
            EnvPopulations::Full(q) => {
                let mut pos = vec![0; nb];
                let mut sum = czero::<T>();
                for (flat, &qb) in q.iter().enumerate() {
                    if qb == T::zero() {
                        continue;
                    }
                    self.bath_basis.positions_into(flat, &mut pos);
                    let e = (0..nb).fold(czero::<T>(), |a, k| a + kappa[k] * self.bath_spectra[k][pos[k]]);
                    sum += cexp(-e) * qb;
                }
                prefactor * sum
            }
        }
    }

    /// Exact `-(d/dt) ln f_{s̃s}(t)` from the bath sum and its derivative.
    pub fn log_derivative(&self, env: &EnvPopulations<T>, pair: usize, t: T) -> Result<Complex<T>> {
        let nb = self.bath_spectra.len();
        let c = self.coefficients(pair);
        let base = self.base[pair];
        let f = self.bath_average(env, &[(pair, t)]);
        if cabs(f) < lit(COHERENCE_ZERO) {
            return Err(Error::CoherenceZero { t: to_f64(t), modulus: to_f64(cabs(f)) });
        }
        match env {
            EnvPopulations::Product(per) => {
                let mut rate = base;
                for k in 0..nb {
                    let (mut g, mut dg) = (czero::<T>(), czero::<T>());
                    for (&q, &b) in per[k].iter().zip(&self.bath_spectra[k]) {
                        let e = cexp(-c[k] * b * t) * q;
                        g += e;
                        dg += e * c[k] * b;
                    }
                    rate += dg / g;
                }
                Ok(rate)
            }
            EnvPopulations::Full(q) => {
                let mut pos = vec![0; nb];
                let (mut num, mut den) = (czero::<T>(), czero::<T>());
                for (flat, &qb) in q.iter().enumerate() {
                    if qb == T::zero() {
                        continue;
                    }
                    self.bath_basis.positions_into(flat, &mut pos);
                    let vals: Vec<T> = (0..nb).map(|k| self.bath_spectra[k][pos[k]]).collect();
                    let r = self.rate(pair, &vals);
                    let e = cexp(-r * t) * qb;
                    num += r * e;
                    den += e;
                }
                Ok(num / den)
            }
        }
    }
}

/// Initial bath populations `⟨b|ρ_0^e|b⟩`.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvPopulations<T> {
    /// One probability per bath basis state (flat bath ordering).
    Full(Vec<T>),
    /// Independent populations per bath subsystem.
    Product(Vec<Vec<T>>),
}

fn check_distribution<T: Real>(p: &[T], what: &str) -> Result<()> {
    if p.iter().any(|q| !(*q >= T::zero()) || !q.is_finite()) {
        return Err(Error::InvalidPopulations(format!("{what} has a negative or non-finite entry")));
    }
    let sum = p.iter().fold(T::zero(), |a, q| a + *q);
    if (sum - T::one()).abs() > tolerance::<T>(POPULATION_TOL) {
        return Err(Error::InvalidPopulations(format!("{what} sums to {}", to_f64(sum))));
    }
    Ok(())
}

impl<T: Real> EnvPopulations<T> {
    /// Equal populations on every bath subsystem.
    pub fn uniform(bath_dims: &[usize]) -> Self {
        EnvPopulations::Product(bath_dims.iter().map(|&d| vec![T::one() / lit::<T>(d as f64); d]).collect())
    }

    pub fn validate(&self, bath_basis: &ProductBasis) -> Result<()> {
        match self {
            EnvPopulations::Full(q) => {
                if q.len() != bath_basis.len() {
                    return Err(Error::InvalidPopulations(format!(
                        "{} populations for a bath of dimension {}",
                        q.len(),
                        bath_basis.len()
                    )));
                }
                check_distribution(q, "bath populations")
            }
            EnvPopulations::Product(per) => {
                if per.len() != bath_basis.dims().len() {
                    return Err(Error::InvalidPopulations(format!(
                        "{} population vectors for {} bath subsystems",
                        per.len(),
                        bath_basis.dims().len()
                    )));
                }
                for (k, (q, &d)) in per.iter().zip(bath_basis.dims()).enumerate() {
                    if q.len() != d {
                        return Err(Error::InvalidPopulations(format!(
                            "bath subsystem {k} has {} populations, dimension {d}",
                            q.len()
                        )));
                    }
                    check_distribution(q, &format!("bath subsystem {k}"))?;
                }
                Ok(())
            }
        }
    }

    /// Joint populations in flat bath ordering.
    pub fn to_full(&self, bath_basis: &ProductBasis) -> Vec<T> {
        match self {
            EnvPopulations::Full(q) => q.clone(),
            EnvPopulations::Product(per) => {
                let mut pos = vec![0; per.len()];
                (0..bath_basis.len())
                    .map(|flat| {
                        bath_basis.positions_into(flat, &mut pos);
                        per.iter().zip(&pos).fold(T::one(), |a, (q, &p)| a * q[p])
                    })
                    .collect()
            }
        }
    }

    /// Diagonal bath state with these populations.
    pub fn to_state(&self, bath_basis: &ProductBasis) -> DensityMatrix<T> {
        let q = self.to_full(bath_basis);
        DensityMatrix::from_matrix_unchecked(CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            q.len(),
            q.iter().map(|p| cplx(*p, T::zero())),
        )))
    }
}

/// Reduced dynamics for one model, split and set of bath populations.
#[derive(Debug, Clone)]
pub struct ReducedDynamics<T: Real> {
    rates: PartialDiagonalRates<T>,
    env: EnvPopulations<T>,
}

impl<T: Real> ReducedDynamics<T> {
    pub fn new(model: &ModelSpec<T>, split: &SplitSpec, env: EnvPopulations<T>) -> Result<Self> {
        let rates = PartialDiagonalRates::new(model, split)?;
        env.validate(rates.bath_basis())?;
        Ok(ReducedDynamics { rates, env })
    }

    pub fn rates(&self) -> &PartialDiagonalRates<T> {
        &self.rates
    }

    pub fn env(&self) -> &EnvPopulations<T> {
        &self.env
    }

    pub fn system_dim(&self) -> usize {
        self.rates.system_dim()
    }

    /// `f_{s̃s}(t)` for flat system indices.
    pub fn coherence(&self, s_tilde: usize, s: usize, t: T) -> Result<Complex<T>> {
        check_time(t)?;
        if s_tilde == s {
            return Ok(cplx(T::one(), T::zero()));
        }
        Ok(self.rates.bath_average(&self.env, &[(self.rates.pair(s_tilde, s), t)]))
    }

    /// Exact `-(d/dt) ln f_{s̃s}(t)`.
    pub fn log_derivative(&self, s_tilde: usize, s: usize, t: T) -> Result<Complex<T>> {
        check_time(t)?;
        self.rates.log_derivative(&self.env, self.rates.pair(s_tilde, s), t)
    }

    pub fn system_state(&self, rho0_s: &DensityMatrix<T>, t: T) -> Result<DensityMatrix<T>> {
        check_time(t)?;
        let ds = self.system_dim();
        check_state_dim(rho0_s, ds, "system state")?;
        let mut m = rho0_s.matrix().clone();
        for st in 0..ds {
            for s in 0..ds {
                if st != s {
                    m[(st, s)] *= self.coherence(st, s, t)?;
                }
            }
        }
        Ok(DensityMatrix::from_matrix_unchecked(m))
    }
}

/// System coherence factor `f_{s̃s}(t) = Σ_b q_b exp(-t Φ_{s̃b,sb})`.
pub fn coherence_factor<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    env: &EnvPopulations<T>,
    s_tilde: &MultiIndex,
    s: &MultiIndex,
    t: T,
) -> Result<Complex<T>> {
    split.check_indices(model, &[s_tilde, s], &[])?;
    let sb = split.system_basis(model);
    ReducedDynamics::new(model, split, env.clone())?.coherence(sb.index_of(s_tilde), sb.index_of(s), t)
}

/// Reduced system state for the separable initial condition `ρ_s ⊗ diag(q)`.
pub fn system_state<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    rho0_s: &DensityMatrix<T>,
    env: &EnvPopulations<T>,
    t: T,
) -> Result<DensityMatrix<T>> {
    ReducedDynamics::new(model, split, env.clone())?.system_state(rho0_s, t)
}

/// Reduced bath state: `⟨b̃|ρ_t^e|b⟩ = F_{b̃b}(t) ⟨b̃|ρ_0^e|b⟩` with
/// `F_{b̃b}(t) = Σ_s p_s exp(-t Φ_{sb̃,sb})`.
pub fn environment_state<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    sys_pops: &[T],
    rho0_e: &DensityMatrix<T>,
    t: T,
) -> Result<DensityMatrix<T>> {
    check_time(t)?;
    split.check_model(model)?;
    let sb = split.system_basis(model);
    let bb = split.bath_basis(model);
    if sys_pops.len() != sb.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} system populations for system dimension {}",
            sys_pops.len(),
            sb.len()
        )));
    }
    check_distribution(sys_pops, "system populations")?;
    check_state_dim(rho0_e, bb.len(), "bath state")?;
    let layout = split.layout(model)?;
    let d = model.dim();
    let values: Vec<Vec<T>> = (0..d)
        .map(|k| {
            let mut v = vec![T::zero(); model.n()];
            model.eigenvalues_flat(k, &mut v);
            v
        })
        .collect();
    let mut m = rho0_e.matrix().clone();
    for bt in 0..bb.len() {
        for b in 0..bb.len() {
            if bt == b {
                continue;
            }
            let f = (0..sb.len()).fold(czero::<T>(), |acc, s| {
                if sys_pops[s] == T::zero() {
                    return acc;
                }
                let phi = phi_values(model, &values[layout.full(s, bt)], &values[layout.full(s, b)]);
                acc + cexp(-phi * t) * sys_pops[s]
            });
            m[(bt, b)] *= f;
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(m))
}

/// A system-bath pair whose coupling breaks the Markov condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CouplingWitness {
    /// 0-based system subsystem.
    pub system: usize,
    /// 0-based bath subsystem.
    pub bath: usize,
}

impl fmt::Display for CouplingWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.system + 1, self.bath + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryCondition {
    pub necessary: bool,
    pub witnesses: Vec<CouplingWitness>,
}

/// True iff some cross Hamiltonian entry `(hij + hji)/2` or some cross
/// antisymmetric rate `(Γij - Γji)/2` is nonzero (`i ∈ S`, `j ∈ B`).
pub fn memory_necessary_condition<T: Real>(model: &ModelSpec<T>, split: &SplitSpec) -> Result<MemoryCondition> {
    split.check_model(model)?;
    let thr = lit::<T>(WITNESS_THRESHOLD);
    let half = lit::<T>(0.5);
    let mut witnesses = Vec::new();
    for &i in split.system() {
        for &j in split.bath() {
            let hs = (model.h()[(i, j)] + model.h()[(j, i)]) * half;
            let anti = cabs((model.gamma()[(i, j)] - model.gamma()[(j, i)]) * half);
            if hs.abs() > thr || anti > thr {
                witnesses.push(CouplingWitness { system: i, bath: j });
            }
        }
    }
    Ok(MemoryCondition { necessary: !witnesses.is_empty(), witnesses })
}
