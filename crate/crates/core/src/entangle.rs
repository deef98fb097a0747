//! System-bath entanglement: partial transpose of exact states, the generator
//! of the bath-transposed dynamics, and threshold scans for the ring family.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{check_time, phi_values, DensityMatrix, PhiTensor};
use crate::linalg::{hermitian_eigenvalues, hermitian_min_eigenvalue, CMatrix};
use crate::model::{chi_bounds, ModelSpec, RingCouplingParams};
use crate::scalar::{cabs, cplx, creal, lit, to_f64, tolerance, Real};
use crate::split::{SplitLayout, SplitSpec};

/// Largest full dimension accepted by [`negativity_scan`] by default.
pub const DEFAULT_PT_CAP: usize = 4096;
/// A partially transposed state with an eigenvalue below this is flagged.
pub const NEGATIVITY_FLAG: f64 = -1e-9;
/// `Γ̃` with an eigenvalue below this counts as entangling.
pub const GENERATOR_CUTOFF: f64 = -1e-10;
/// Bisection stops once the bracket on `χ*/γ` is narrower than this.
pub const BISECTION_TOL: f64 = 1e-4;
/// Full dimension up to which the transposed generator is checked against
/// every index-swapped rate.
const EXHAUSTIVE_CHECK_DIM: usize = 256;

fn pt_with_layout<T: Real>(layout: &SplitLayout, rho: &CMatrix<T>) -> CMatrix<T> {
    let (ds, db) = (layout.system_dim, layout.bath_dim);
    let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
    for st in 0..ds {
        for s in 0..ds {
            for bt in 0..db {
                for b in 0..db {
                    out[(layout.full(st, bt), layout.full(s, b))] = rho[(layout.full(st, b), layout.full(s, bt))];
                }
            }
        }
    }
    out
}

/// Transposes the bath factor: `out[(s̃b̃),(sb)] = rho[(s̃b),(sb̃)]`.
pub fn partial_transpose<T: Real>(model: &ModelSpec<T>, split: &SplitSpec, rho: &CMatrix<T>) -> Result<CMatrix<T>> {
    let d = model.dim();
    if rho.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, model dimension is {d}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    Ok(pt_with_layout(&split.layout(model)?, rho))
}

/// Minimum eigenvalue of `ρ_t^{T_B}` over a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PTScanResult<T> {
    pub times: Vec<T>,
    pub min_eigenvalues: Vec<T>,
    /// First grid time with a minimum eigenvalue below [`NEGATIVITY_FLAG`].
    pub first_negative_time: Option<T>,
}

pub fn negativity_scan<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    rho0: &DensityMatrix<T>,
    t_grid: &[T],
    cap: usize,
) -> Result<PTScanResult<T>> {
    let d = model.dim();
    if d > cap {
        return Err(Error::DimensionCap { dim: d, cap });
    }
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch(format!("state has dimension {}, model {d}", rho0.dim())));
    }
    for &t in t_grid {
        check_time(t)?;
    }
    let layout = split.layout(model)?;
    let phi = PhiTensor::new(model);
    let min_eigenvalues: Vec<T> = t_grid
        .par_iter()
        .map(|&t| hermitian_min_eigenvalue(&pt_with_layout(&layout, &phi.propagate(rho0.matrix(), t))))
        .collect();
    let flag = lit::<T>(NEGATIVITY_FLAG);
    let first_negative_time = t_grid.iter().zip(&min_eigenvalues).find(|(_, m)| **m < flag).map(|(t, _)| *t);
    Ok(PTScanResult { times: t_grid.to_vec(), min_eigenvalues, first_negative_time })
}

/// Product of equal superpositions `Σ_k |k⟩ / √d` on every subsystem.
pub fn uniform_superposition<T: Real>(model: &ModelSpec<T>) -> DensityMatrix<T> {
    let d = model.dim();
    let amp = creal(T::one() / lit::<T>(d as f64));
    DensityMatrix::from_matrix_unchecked(CMatrix::from_element(d, d, amp))
}

/// Coefficients `(h̃, Γ̃)` of the dynamics followed by `ρ_t^{T_B}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TildeGenerator<T: Real> {
    pub h: DMatrix<T>,
    pub gamma: CMatrix<T>,
}

impl<T: Real> TildeGenerator<T> {
    pub fn min_gamma_eigenvalue(&self) -> T {
        hermitian_min_eigenvalue(&self.gamma)
    }

    pub fn gamma_eigenvalues(&self) -> Vec<T> {
        hermitian_eigenvalues(&self.gamma)
    }

    /// Model with the original spectra and the transposed coefficients.
    pub fn model(&self, original: &ModelSpec<T>) -> Result<ModelSpec<T>> {
        ModelSpec::new_indefinite(original.subsystems().to_vec(), self.h.clone(), self.gamma.clone())
    }
}

/// Generator of the bath-transposed dynamics, `Φ̃_{s̃b̃,sb} = Φ_{s̃b,sb̃}`.
///
/// Swapping `b̃ ↔ b` in the parametric rate flips the sign of every bath
/// frequency and of the bath-bath imaginary rates, exchanges the cross
/// Hamiltonian with the cross imaginary rates, and negates the cross real
/// rates. The result is verified against the swapped rates directly.
pub fn tilde_generator<T: Real>(model: &ModelSpec<T>, split: &SplitSpec) -> Result<TildeGenerator<T>> {
    let layout = split.layout(model)?;
    let gen = tilde_coefficients(model, split);
    verify_tilde(model, &gen.model(model)?, &layout)?;
    Ok(gen)
}

fn tilde_coefficients<T: Real>(model: &ModelSpec<T>, split: &SplitSpec) -> TildeGenerator<T> {
    let n = model.n();
    let mut in_bath = vec![false; n];
    for &j in split.bath() {
        in_bath[j] = true;
    }
    let (h, g) = (model.h(), model.gamma());
    let mut h_t = DMatrix::zeros(n, n);
    let mut g_t = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (re, im) = (g[(i, j)].re, g[(i, j)].im);
            match (in_bath[i], in_bath[j]) {
                (false, false) => {
                    h_t[(i, j)] = h[(i, j)];
                    g_t[(i, j)] = g[(i, j)];
                }
                (true, true) => {
                    h_t[(i, j)] = -h[(i, j)];
                    g_t[(i, j)] = cplx(re, -im);
                }
                (false, true) => {
                    h_t[(i, j)] = -im;
                    g_t[(i, j)] = cplx(-re, -h[(i, j)]);
                }
                (true, false) => {
                    h_t[(i, j)] = im;
                    g_t[(i, j)] = cplx(-re, h[(i, j)]);
                }
            }
        }
    }
    TildeGenerator { h: h_t, gamma: g_t }
}

fn verify_tilde<T: Real>(model: &ModelSpec<T>, tilde: &ModelSpec<T>, layout: &SplitLayout) -> Result<()> {
    let (ds, db) = (layout.system_dim, layout.bath_dim);
    let d = ds * db;
    let values: Vec<Vec<T>> = (0..d)
        .map(|k| {
            let mut v = vec![T::zero(); model.n()];
            model.eigenvalues_flat(k, &mut v);
            v
        })
        .collect();
    let scale = values.iter().flatten().fold(T::one(), |a, v| if v.abs() > a { v.abs() } else { a });
    let coef = model
        .gamma()
        .iter()
        .map(|z| cabs(*z))
        .chain(model.h().iter().map(|x| x.abs()))
        .fold(T::one(), |a, v| if v > a { v } else { a });
    let tol = tolerance::<T>(1e-12) * coef * scale * scale * lit::<T>(model.n() as f64 * model.n() as f64);
    // deterministic subset beyond the exhaustive range
    let stride = if d <= EXHAUSTIVE_CHECK_DIM { 1 } else { d / EXHAUSTIVE_CHECK_DIM + 1 };
    for st in 0..ds {
        for bt in (0..db).step_by(stride.min(db.max(1))) {
            for s in 0..ds {
                for b in (0..db).step_by(stride.min(db.max(1))) {
                    let lhs = phi_values(tilde, &values[layout.full(st, bt)], &values[layout.full(s, b)]);
                    let rhs = phi_values(model, &values[layout.full(st, b)], &values[layout.full(s, bt)]);
                    let dev = cabs(lhs - rhs);
                    if !(dev <= tol) {
                        return Err(Error::IdentificationFailure(format!(
                            "transposed rate mismatch {:e} at system ({st}, {s}), bath ({bt}, {b})",
                            to_f64(dev)
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Smallest `χ/γ` for which the ring's transposed generator has a negative
/// eigenvalue, with the admissible range of `χ/γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntanglementThreshold<T> {
    pub n: usize,
    pub chi_star_over_gamma: Option<T>,
    pub lower_bound: T,
    pub upper_bound: T,
}

fn ring_model<T: Real>(n: usize, gamma: T, chi: T) -> Result<(ModelSpec<T>, SplitSpec)> {
    let g = crate::model::ring_gamma(&RingCouplingParams::quarter(n, gamma, chi))?;
    let model = ModelSpec::new_indefinite(vec![vec![T::one(), -T::one()]; n], DMatrix::zeros(n, n), g)?;
    Ok((model, SplitSpec::leading(1, n)?))
}

/// `λ_min(Γ̃)` for the `λ = n/4` ring with the first qubit as system.
pub fn ring_tilde_min_eigenvalue<T: Real>(n: usize, gamma: T, chi: T) -> Result<T> {
    let (model, split) = ring_model(n, gamma, chi)?;
    Ok(tilde_generator(&model, &split)?.min_gamma_eigenvalue())
}

/// Per-`n` threshold scan: the grid of `χ/γ` values (restricted to the
/// admissible range) brackets the first entangling point, then bisection
/// narrows it to [`BISECTION_TOL`].
pub fn entanglement_region_scan<T: Real>(
    n_range: impl IntoIterator<Item = usize>,
    chi_grid: &[T],
    gamma: T,
) -> Result<Vec<EntanglementThreshold<T>>> {
    let cutoff = lit::<T>(GENERATOR_CUTOFF);
    let ns: Vec<usize> = n_range.into_iter().collect();
    ns.par_iter()
        .map(|&n| {
            let (lo, hi) = chi_bounds(n, gamma)?;
            let (lo, hi) = (lo / gamma, hi / gamma);
            // the index-swap identification is checked once per n; the
            // scan itself only needs the coefficient map
            let (model, split) = ring_model(n, gamma, hi * gamma)?;
            tilde_generator(&model, &split)?;
            let entangles = |x: T| -> Result<bool> {
                let (model, split) = ring_model(n, gamma, x * gamma)?;
                Ok(tilde_coefficients(&model, &split).min_gamma_eigenvalue() < cutoff)
            };
            let mut grid: Vec<T> = chi_grid.iter().copied().filter(|x| *x >= lo && *x <= hi).collect();
            grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let mut prev: Option<T> = None;
            let mut found = None;
            for &x in &grid {
                if entangles(x)? {
                    found = Some(x);
                    break;
                }
                prev = Some(x);
            }
            let chi_star = match (found, prev) {
                (Some(x), None) => Some(x),
                (Some(x), Some(p)) => {
                    let (mut a, mut b) = (p, x);
                    while b - a > lit::<T>(BISECTION_TOL) {
                        let mid = (a + b) * lit::<T>(0.5);
                        if entangles(mid)? {
                            b = mid;
                        } else {
                            a = mid;
                        }
                    }
                    Some(b)
                }
                (None, _) => None,
            };
            Ok(EntanglementThreshold { n, chi_star_over_gamma: chi_star, lower_bound: lo, upper_bound: hi })
        })
        .collect()
}
