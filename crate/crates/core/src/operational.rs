//! Statistics of three successive system measurements: joint outcome
//! probabilities, Markov residuals, conditional past-future correlations,
//! the random-selection protocol and the statistical-mixture reading of the
//! reduced dynamics.

use log::debug;
use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{check_state_dim, check_time, phi_values, DensityMatrix};
use crate::linalg::{max_abs_diff, trace, CMatrix};
use crate::model::ModelSpec;
use crate::scalar::{cabs, cexp, cplx, creal, czero, lit, to_f64, tolerance, Real};
use crate::split::{EnvPopulations, ReducedDynamics, SplitSpec};

/// Branches with probability below this are excluded from conditioning.
pub const BRANCH_TOL: f64 = 1e-14;
/// Tolerance on `Σ Π†Π = I` and on projector identities.
pub const COMPLETENESS_TOL: f64 = 1e-12;

/// One measurement: Kraus operators `Π_m`, the numeric value attached to each
/// outcome, and a printable label.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementStage<T: Real> {
    operators: Vec<CMatrix<T>>,
    values: Vec<T>,
    labels: Vec<String>,
}

impl<T: Real> MeasurementStage<T> {
    pub fn new(operators: Vec<CMatrix<T>>, values: Vec<T>, labels: Vec<String>) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::InvalidScheme("a measurement needs at least one operator".into()));
        }
        if values.len() != operators.len() || labels.len() != operators.len() {
            return Err(Error::InvalidScheme(format!(
                "{} operators, {} values, {} labels",
                operators.len(),
                values.len(),
                labels.len()
            )));
        }
        let d = operators[0].nrows();
        if operators.iter().any(|op| op.nrows() != d || op.ncols() != d) {
            return Err(Error::InvalidScheme("operators must be square and of equal dimension".into()));
        }
        let sum = operators.iter().fold(CMatrix::zeros(d, d), |acc, op| acc + op.adjoint() * op);
        let dev = max_abs_diff(&sum, &CMatrix::identity(d, d));
        if dev > tolerance::<T>(COMPLETENESS_TOL) {
            return Err(Error::InvalidScheme(format!("Σ Π†Π deviates from identity by {:e}", to_f64(dev))));
        }
        Ok(MeasurementStage { operators, values, labels })
    }

    /// Rank-one projective measurement onto the (normalized) given vectors.
    pub fn from_vectors(vectors: &[Vec<Complex<T>>], values: Vec<T>, labels: Vec<String>) -> Result<Self> {
        let ops = vectors
            .iter()
            .map(|v| {
                let norm = v.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
                if !(norm > T::zero()) {
                    return Err(Error::InvalidScheme("zero measurement vector".into()));
                }
                let d = v.len();
                Ok(CMatrix::from_fn(d, d, |i, j| v[i] * v[j].conj() / creal(norm * norm)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ops, values, labels)
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.operators[0].nrows()
    }

    pub fn operators(&self) -> &[CMatrix<T>] {
        &self.operators
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// `E_m = Π_m† Π_m`.
    pub fn effect(&self, m: usize) -> CMatrix<T> {
        self.operators[m].adjoint() * &self.operators[m]
    }

    fn check_projective(&self) -> Result<()> {
        let tol = tolerance::<T>(COMPLETENESS_TOL);
        for (a, p) in self.operators.iter().enumerate() {
            if max_abs_diff(p, &p.adjoint()) > tol || max_abs_diff(&(p * p), p) > tol {
                return Err(Error::InvalidScheme(format!("intermediate operator {a} is not an orthogonal projector")));
            }
            for (b, q) in self.operators.iter().enumerate().skip(a + 1) {
                if max_abs_diff(&(p * q), &CMatrix::zeros(p.nrows(), p.ncols())) > tol {
                    return Err(Error::InvalidScheme(format!("intermediate projectors {a} and {b} overlap")));
                }
            }
        }
        Ok(())
    }
}

/// First, intermediate (projective) and last measurement on the system.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementScheme<T: Real> {
    first: MeasurementStage<T>,
    intermediate: MeasurementStage<T>,
    last: MeasurementStage<T>,
    reset: Vec<CMatrix<T>>,
}

impl<T: Real> MeasurementScheme<T> {
    pub fn new(
        first: MeasurementStage<T>,
        intermediate: MeasurementStage<T>,
        last: MeasurementStage<T>,
    ) -> Result<Self> {
        let d = first.dim();
        if intermediate.dim() != d || last.dim() != d {
            return Err(Error::InvalidScheme("stages act on different dimensions".into()));
        }
        intermediate.check_projective()?;
        let reset = intermediate
            .operators()
            .iter()
            .map(|p| {
                let tr = trace(p).re;
                p.map(|z| z / creal(tr))
            })
            .collect();
        Ok(MeasurementScheme { first, intermediate, last, reset })
    }

    /// `x̂ - n̂ - x̂` on a qubit with `n̂ = (cos φ, sin φ, 0)`; outcomes `±1`.
    /// Basis position 0 is the `σ_z = +1` state.
    pub fn qubit_xnx(phi: T) -> Self {
        let h = T::one() / lit::<T>(2.0).sqrt();
        let x_stage = || {
            MeasurementStage::from_vectors(
                &[vec![creal(h), creal(h)], vec![creal(h), creal(-h)]],
                vec![T::one(), -T::one()],
                vec!["+1".into(), "-1".into()],
            )
            .expect("x basis is complete")
        };
        let (s, c) = phi.sin_cos();
        let n_stage = MeasurementStage::from_vectors(
            &[vec![creal(h), cplx(c * h, s * h)], vec![creal(h), cplx(-c * h, -s * h)]],
            vec![T::one(), -T::one()],
            vec!["+1".into(), "-1".into()],
        )
        .expect("n basis is complete");
        Self::new(x_stage(), n_stage, x_stage()).expect("qubit scheme is valid")
    }

    /// Discrete-Fourier basis for the first and last measurement and the
    /// same basis dressed by the phases `e^{i θ j²}` for the intermediate one.
    /// Outcome `k` carries the value `1 - 2k/(d-1)`; for `d = 2` this is
    /// [`MeasurementScheme::qubit_xnx`] with `φ = θ`.
    pub fn fourier(d: usize, theta: T) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidScheme(format!("Fourier scheme needs d >= 2, got {d}")));
        }
        let df = lit::<T>(d as f64);
        let amp = T::one() / df.sqrt();
        let basis = |dressed: bool| -> Vec<Vec<Complex<T>>> {
            (0..d)
                .map(|k| {
                    (0..d)
                        .map(|j| {
                            let mut arg = T::two_pi() * lit::<T>((j * k % d) as f64) / df;
                            if dressed {
                                arg += theta * lit::<T>((j * j) as f64);
                            }
                            cplx(arg.cos() * amp, arg.sin() * amp)
                        })
                        .collect()
                })
                .collect()
        };
        let values: Vec<T> = (0..d).map(|k| T::one() - lit::<T>(2.0 * k as f64 / (d - 1) as f64)).collect();
        let labels: Vec<String> = (0..d).map(|k| k.to_string()).collect();
        let outer = || MeasurementStage::from_vectors(&basis(false), values.clone(), labels.clone());
        Self::new(outer()?, MeasurementStage::from_vectors(&basis(true), values.clone(), labels.clone())?, outer()?)
    }

    /// Replaces the default reset states `Π_y / Tr Π_y` used by the
    /// random-selection protocol.
    pub fn with_reset_states(mut self, states: Vec<DensityMatrix<T>>) -> Result<Self> {
        if states.len() != self.intermediate.len() {
            return Err(Error::InvalidScheme(format!(
                "{} reset states for {} intermediate outcomes",
                states.len(),
                self.intermediate.len()
            )));
        }
        for s in &states {
            check_state_dim(s, self.dim(), "reset state")?;
        }
        self.reset = states.into_iter().map(DensityMatrix::into_matrix).collect();
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.first.dim()
    }

    pub fn first(&self) -> &MeasurementStage<T> {
        &self.first
    }

    pub fn intermediate(&self) -> &MeasurementStage<T> {
        &self.intermediate
    }

    pub fn last(&self) -> &MeasurementStage<T> {
        &self.last
    }

    pub fn reset_state(&self, y: usize) -> &CMatrix<T> {
        &self.reset[y]
    }
}

/// A branch excluded from conditioning: `P(x)` (when `y` is `None`) or
/// `P(y|x)` fell below [`BRANCH_TOL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DroppedBranch {
    pub x: usize,
    pub y: Option<usize>,
}

/// Joint probabilities `P(z, y, x)` of the three outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeTable<T> {
    pub t: T,
    pub tau: T,
    /// Outcome values of the first, intermediate and last measurement.
    pub x_values: Vec<T>,
    pub y_values: Vec<T>,
    pub z_values: Vec<T>,
    probabilities: Vec<T>,
    pub dropped: Vec<DroppedBranch>,
}

impl<T: Real> OutcomeTable<T> {
    /// Table with `p(z, y, x)` for every outcome triple.
    pub fn from_fn(
        t: T,
        tau: T,
        x_values: Vec<T>,
        y_values: Vec<T>,
        z_values: Vec<T>,
        mut p: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let (nx, ny, nz) = (x_values.len(), y_values.len(), z_values.len());
        let mut probabilities = Vec::with_capacity(nx * ny * nz);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    probabilities.push(p(z, y, x));
                }
            }
        }
        OutcomeTable { t, tau, x_values, y_values, z_values, probabilities, dropped: Vec::new() }
    }

    fn for_scheme(scheme: &MeasurementScheme<T>, t: T, tau: T) -> Self {
        Self::from_fn(
            t,
            tau,
            scheme.first().values().to_vec(),
            scheme.intermediate().values().to_vec(),
            scheme.last().values().to_vec(),
            |_, _, _| T::zero(),
        )
    }

    /// `(nz, ny, nx)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.z_values.len(), self.y_values.len(), self.x_values.len())
    }

    #[inline]
    fn idx(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.y_values.len() + y) * self.x_values.len() + x
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> T {
        self.probabilities[self.idx(z, y, x)]
    }

    fn set(&mut self, z: usize, y: usize, x: usize, p: T) {
        let i = self.idx(z, y, x);
        self.probabilities[i] = p;
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    pub fn total(&self) -> T {
        self.probabilities.iter().fold(T::zero(), |a, p| a + *p)
    }

    pub fn min_entry(&self) -> T {
        self.probabilities.iter().fold(T::max_value().unwrap_or_else(T::one), |a, p| if *p < a { *p } else { a })
    }

    pub fn p_x(&self, x: usize) -> T {
        let (nz, ny, _) = self.shape();
        (0..nz).flat_map(|z| (0..ny).map(move |y| (z, y))).fold(T::zero(), |a, (z, y)| a + self.get(z, y, x))
    }

    pub fn p_y(&self, y: usize) -> T {
        let (nz, _, nx) = self.shape();
        (0..nz).flat_map(|z| (0..nx).map(move |x| (z, x))).fold(T::zero(), |a, (z, x)| a + self.get(z, y, x))
    }

    pub fn p_yx(&self, y: usize, x: usize) -> T {
        (0..self.z_values.len()).fold(T::zero(), |a, z| a + self.get(z, y, x))
    }

    pub fn p_zy(&self, z: usize, y: usize) -> T {
        (0..self.x_values.len()).fold(T::zero(), |a, x| a + self.get(z, y, x))
    }

    /// Largest entrywise difference to another table of the same shape.
    pub fn max_deviation(&self, other: &OutcomeTable<T>) -> T {
        assert_eq!(self.shape(), other.shape(), "tables of different shape");
        self.probabilities.iter().zip(&other.probabilities).fold(T::zero(), |a, (p, q)| {
            let d = (*p - *q).abs();
            if d > a {
                d
            } else {
                a
            }
        })
    }
}

/// Conditional distribution `℘(y̆|x)` used to re-prepare the system after the
/// intermediate measurement. Rows are indexed by `y̆`, columns by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reselection<T> {
    probs: Vec<Vec<T>>,
}

impl<T: Real> Reselection<T> {
    pub fn new(probs: Vec<Vec<T>>) -> Result<Self> {
        let nx = probs.first().map_or(0, Vec::len);
        if probs.is_empty() || nx == 0 || probs.iter().any(|r| r.len() != nx) {
            return Err(Error::InvalidScheme("reselection table must be a non-empty rectangle".into()));
        }
        for x in 0..nx {
            let mut sum = T::zero();
            for row in &probs {
                if !(row[x] >= T::zero()) {
                    return Err(Error::InvalidScheme(format!("negative reselection probability for x = {x}")));
                }
                sum += row[x];
            }
            if (sum - T::one()).abs() > tolerance::<T>(1e-12) {
                return Err(Error::InvalidScheme(format!("℘(·|x = {x}) sums to {}", to_f64(sum))));
            }
        }
        Ok(Reselection { probs })
    }

    /// Always re-prepares outcome `y0`.
    pub fn deterministic(y0: usize, ny: usize, nx: usize) -> Result<Self> {
        Self::new((0..ny).map(|y| vec![if y == y0 { T::one() } else { T::zero() }; nx]).collect())
    }

    pub fn uniform(ny: usize, nx: usize) -> Result<Self> {
        Self::new(vec![vec![T::one() / lit::<T>(ny as f64); nx]; ny])
    }

    pub fn get(&self, y: usize, x: usize) -> T {
        self.probs[y][x]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.probs.len(), self.probs[0].len())
    }
}

/// `K[(a,b),(a',b')] = Σ_b q_b exp(-τ Φ_{ab}(b) - t Φ_{a'b'}(b))`, the bath
/// average coupling the two free-evolution intervals.
struct TwoTimeKernel<T> {
    d: usize,
    k: Vec<Complex<T>>,
}

impl<T: Real> TwoTimeKernel<T> {
    fn new(dynamics: &ReducedDynamics<T>, t: T, tau: T) -> Self {
        let d = dynamics.system_dim();
        let rates = dynamics.rates();
        let mut k = Vec::with_capacity(d * d * d * d);
        for a in 0..d {
            for b in 0..d {
                for a2 in 0..d {
                    for b2 in 0..d {
                        k.push(rates.bath_average(dynamics.env(), &[(rates.pair(a, b), tau), (rates.pair(a2, b2), t)]));
                    }
                }
            }
        }
        TwoTimeKernel { d, k }
    }

    #[inline]
    fn get(&self, a: usize, b: usize, a2: usize, b2: usize) -> Complex<T> {
        self.k[((a * self.d + b) * self.d + a2) * self.d + b2]
    }
}

enum SecondStage<'a, T: Real> {
    Projective,
    Reselect(&'a Reselection<T>),
}

fn check_scheme_dims<T: Real>(scheme: &MeasurementScheme<T>, rho0_s: &DensityMatrix<T>, d: usize) -> Result<()> {
    if scheme.dim() != d {
        return Err(Error::DimensionMismatch(format!("scheme acts on dimension {}, system has {d}", scheme.dim())));
    }
    check_state_dim(rho0_s, d, "system state")
}

fn table_from_kernel<T: Real>(
    kernel: &TwoTimeKernel<T>,
    rho0_s: &DensityMatrix<T>,
    scheme: &MeasurementScheme<T>,
    second: SecondStage<'_, T>,
    t: T,
    tau: T,
) -> OutcomeTable<T> {
    let d = kernel.d;
    let tol = lit::<T>(BRANCH_TOL);
    let mut table = OutcomeTable::for_scheme(scheme, t, tau);
    let effects_z: Vec<CMatrix<T>> = (0..scheme.last().len()).map(|z| scheme.last().effect(z)).collect();
    for (x, pi_x) in scheme.first().operators().iter().enumerate() {
        let unnorm = pi_x * rho0_s.matrix() * pi_x.adjoint();
        let px = trace(&unnorm).re;
        if px < tol {
            debug!("dropping first-measurement branch x = {x}: P(x) = {:e}", to_f64(px));
            table.dropped.push(DroppedBranch { x, y: None });
            continue;
        }
        let rho_x = unnorm / creal(px);
        for y in 0..scheme.intermediate().len() {
            let mut w = CMatrix::<T>::zeros(d, d);
            match &second {
                SecondStage::Projective => {
                    let p = &scheme.intermediate().operators()[y];
                    for a in 0..d {
                        for b in 0..d {
                            let mut acc = czero::<T>();
                            for a2 in 0..d {
                                if p[(a, a2)] == czero() {
                                    continue;
                                }
                                for b2 in 0..d {
                                    acc += p[(a, a2)] * rho_x[(a2, b2)] * p[(b, b2)].conj() * kernel.get(a, b, a2, b2);
                                }
                            }
                            w[(a, b)] = acc;
                        }
                    }
                }
                SecondStage::Reselect(r) => {
                    let weight = r.get(y, x);
                    let reset = scheme.reset_state(y);
                    for a in 0..d {
                        for b in 0..d {
                            let f =
                                (0..d).fold(czero::<T>(), |acc, a2| acc + rho_x[(a2, a2)] * kernel.get(a, b, a2, a2));
                            w[(a, b)] = reset[(a, b)] * f * weight;
                        }
                    }
                }
            }
            let mut pyx = T::zero();
            for (z, e) in effects_z.iter().enumerate() {
                let mut acc = czero::<T>();
                for a in 0..d {
                    for b in 0..d {
                        acc += e[(b, a)] * w[(a, b)];
                    }
                }
                let p = acc.re * px;
                pyx += acc.re;
                table.set(z, y, x, p);
            }
            if pyx < tol {
                debug!("dropping intermediate branch (x, y) = ({x}, {y}): P(y|x) = {:e}", to_f64(pyx));
                table.dropped.push(DroppedBranch { x, y: Some(y) });
                for z in 0..effects_z.len() {
                    table.set(z, y, x, T::zero());
                }
            }
        }
    }
    table
}

/// `P(z, y, x)` for a separable initial state `ρ_s ⊗ diag(q)`.
///
/// Each term of the bath sum is the exact three-measurement probability of
/// the Markovian dephasing channel at fixed `b`; for rank-one intermediate
/// projectors it reduces to the product of the two bracketed sums
/// `[Σ E_z ρ_y e^{-τΦ}] [Σ E_y ρ_x e^{-tΦ}]`.
pub fn joint_probability<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    env: &EnvPopulations<T>,
    rho0_s: &DensityMatrix<T>,
    scheme: &MeasurementScheme<T>,
    t: T,
    tau: T,
) -> Result<OutcomeTable<T>> {
    check_time(t)?;
    check_time(tau)?;
    let dynamics = ReducedDynamics::new(model, split, env.clone())?;
    check_scheme_dims(scheme, rho0_s, dynamics.system_dim())?;
    let kernel = TwoTimeKernel::new(&dynamics, t, tau);
    Ok(table_from_kernel(&kernel, rho0_s, scheme, SecondStage::Projective, t, tau))
}

/// Same protocol with the intermediate post-measurement state replaced by a
/// reset state `ρ_y̆` drawn from `℘(y̆|x)` and the intermediate effect
/// replaced by the identity.
#[allow(clippy::too_many_arguments)]
pub fn random_selection_protocol<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    env: &EnvPopulations<T>,
    rho0_s: &DensityMatrix<T>,
    scheme: &MeasurementScheme<T>,
    reselect: &Reselection<T>,
    t: T,
    tau: T,
) -> Result<OutcomeTable<T>> {
    check_time(t)?;
    check_time(tau)?;
    if reselect.shape() != (scheme.intermediate().len(), scheme.first().len()) {
        return Err(Error::InvalidScheme(format!(
            "reselection table is {:?}, scheme needs ({}, {})",
            reselect.shape(),
            scheme.intermediate().len(),
            scheme.first().len()
        )));
    }
    let dynamics = ReducedDynamics::new(model, split, env.clone())?;
    check_scheme_dims(scheme, rho0_s, dynamics.system_dim())?;
    let kernel = TwoTimeKernel::new(&dynamics, t, tau);
    Ok(table_from_kernel(&kernel, rho0_s, scheme, SecondStage::Reselect(reselect), t, tau))
}

/// `max |P(z,y,x) - P(z|y) P(y|x) P(x)|` with conditionals from marginals.
/// Zero-probability conditionals count as exact factorization.
pub fn markov_residual<T: Real>(table: &OutcomeTable<T>) -> T {
    let (nz, ny, nx) = table.shape();
    let tol = lit::<T>(BRANCH_TOL);
    let mut worst = T::zero();
    for x in 0..nx {
        let px = table.p_x(x);
        if px < tol {
            continue;
        }
        for y in 0..ny {
            let py = table.p_y(y);
            if py < tol {
                continue;
            }
            let p_y_given_x = table.p_yx(y, x) / px;
            for z in 0..nz {
                let p_z_given_y = table.p_zy(z, y) / py;
                let r = (table.get(z, y, x) - p_z_given_y * p_y_given_x * px).abs();
                if r > worst {
                    worst = r;
                }
            }
        }
    }
    worst
}

/// `C = Σ_{z,x} z x [P(z,x|y) - P(z|y) P(x|y)]`.
pub fn cpf_correlation<T: Real>(table: &OutcomeTable<T>, y: usize) -> Result<T> {
    let (nz, ny, nx) = table.shape();
    if y >= ny {
        return Err(Error::InvalidScheme(format!("no intermediate outcome {y}")));
    }
    let py = table.p_y(y);
    if py < lit(BRANCH_TOL) {
        return Err(Error::ConditionalUndefined(to_f64(py)));
    }
    let p_z: Vec<T> = (0..nz).map(|z| table.p_zy(z, y) / py).collect();
    let p_x: Vec<T> = (0..nx).map(|x| table.p_yx(y, x) / py).collect();
    let mut c = T::zero();
    for z in 0..nz {
        for x in 0..nx {
            let zx = table.z_values[z] * table.x_values[x];
            c += zx * (table.get(z, y, x) / py - p_z[z] * p_x[x]);
        }
    }
    Ok(c)
}

/// `-4 q₊ q₋ sin²φ e^{-2γ(t+τ)} sin(2tχ̲) sin(2τχ̲)`; assumes `P(x) = ½`.
pub fn closed_form_cpf_bipartite<T: Real>(q_plus: T, q_minus: T, gamma: T, chi_bar: T, phi: T, t: T, tau: T) -> T {
    let two = lit::<T>(2.0);
    let s = phi.sin();
    -lit::<T>(4.0)
        * q_plus
        * q_minus
        * s
        * s
        * (-two * gamma * (t + tau)).exp()
        * (two * t * chi_bar).sin()
        * (two * tau * chi_bar).sin()
}

/// Ring CPF `f_φ(t,τ) - f(t) f(τ) cos²φ` for a uniform bath at `λ = n/4`;
/// assumes `P(x) = ½`.
pub fn closed_form_cpf_ring<T: Real>(n: usize, gamma: T, chi: T, phi: T, t: T, tau: T) -> Result<T> {
    let f_t = crate::witness::ring_coherence(n, gamma, chi, t)?;
    let f_tau = crate::witness::ring_coherence(n, gamma, chi, tau)?;
    let two = lit::<T>(2.0);
    let nbar = crate::witness::ring_effective_bath(n) as i32;
    let joint = lit::<T>(0.5)
        * (-two * gamma * (t + tau)).exp()
        * ((two * chi * (t + tau)).cos().powi(nbar) + (two * phi).cos() * (two * chi * (t - tau)).cos().powi(nbar));
    let c = phi.cos();
    Ok(joint - f_t * f_tau * c * c)
}

/// `P(z,y,x) = ¼ [1 + yx f⁺(t) + zy f⁻(τ) + zx f(t,τ)] P(x)` for the
/// bipartite qubit under `x̂ - n̂ - x̂` with `P(x) = ½`. Outcome order `[+1, -1]`.
pub fn closed_form_table_bipartite<T: Real>(
    q_plus: T,
    q_minus: T,
    gamma: T,
    chi_bar: T,
    phi: T,
    t: T,
    tau: T,
) -> OutcomeTable<T> {
    let two = lit::<T>(2.0);
    let f_sign = |t: T, sign: T| {
        (-two * t * gamma).exp()
            * (q_plus * (two * t * chi_bar + sign * phi).cos() + q_minus * (two * t * chi_bar - sign * phi).cos())
    };
    let f_plus = f_sign(t, T::one());
    let f_minus = f_sign(tau, -T::one());
    let f_joint = (-two * gamma * (t + tau)).exp()
        * (q_plus * (two * t * chi_bar + phi).cos() * (two * tau * chi_bar - phi).cos()
            + q_minus * (two * t * chi_bar - phi).cos() * (two * tau * chi_bar + phi).cos());
    let v = vec![T::one(), -T::one()];
    let quarter = lit::<T>(0.25);
    let half = lit::<T>(0.5);
    OutcomeTable::from_fn(t, tau, v.clone(), v.clone(), v.clone(), |z, y, x| {
        let (z, y, x) = (v[z], v[y], v[x]);
        quarter * (T::one() + y * x * f_plus + z * y * f_minus + z * x * f_joint) * half
    })
}

/// Bath marginal after the intermediate outcome `y`:
/// `ρ^e_{b̃b} ∝ ⟨b̃|ρ_0^e|b⟩ Σ ⟨s|E_y|s̃⟩⟨s̃|ρ_x|s⟩ e^{-tΦ_{s̃b̃,sb}}`.
/// Returns `P(y|x)` together with the normalized state.
pub fn conditional_environment_state<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    rho_x: &DensityMatrix<T>,
    rho0_e: &DensityMatrix<T>,
    effect_y: &CMatrix<T>,
    t: T,
) -> Result<(T, DensityMatrix<T>)> {
    check_time(t)?;
    let layout = split.layout(model)?;
    let (ds, db) = (layout.system_dim, layout.bath_dim);
    check_state_dim(rho_x, ds, "system state")?;
    check_state_dim(rho0_e, db, "bath state")?;
    if effect_y.shape() != (ds, ds) {
        return Err(Error::DimensionMismatch("effect does not act on the system".into()));
    }
    let values: Vec<Vec<T>> = (0..model.dim())
        .map(|k| {
            let mut v = vec![T::zero(); model.n()];
            model.eigenvalues_flat(k, &mut v);
            v
        })
        .collect();
    let mut m = CMatrix::<T>::zeros(db, db);
    for bt in 0..db {
        for b in 0..db {
            let e0 = rho0_e.matrix()[(bt, b)];
            if cabs(e0) == T::zero() {
                continue;
            }
            let mut acc = czero::<T>();
            for st in 0..ds {
                for s in 0..ds {
                    let w = effect_y[(s, st)] * rho_x.matrix()[(st, s)];
                    if cabs(w) == T::zero() {
                        continue;
                    }
                    let phi = phi_values(model, &values[layout.full(st, bt)], &values[layout.full(s, b)]);
                    acc += w * cexp(-phi * t);
                }
            }
            m[(bt, b)] = e0 * acc;
        }
    }
    let p = trace(&m).re;
    if p < lit(BRANCH_TOL) {
        return Err(Error::ConditionalUndefined(to_f64(p)));
    }
    Ok((p, DensityMatrix::from_matrix_unchecked(m / creal(p))))
}

/// One Markovian dephasing channel of the mixture, selected by bath state `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent<T: Real> {
    pub weight: T,
    /// Flat bath index.
    pub bath: usize,
    /// `Φ(s̃, s; b)` on the system.
    pub rates: CMatrix<T>,
}

/// The reduced dynamics as a weighted average of Markovian dephasing
/// channels, one per bath basis state.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMixture<T: Real> {
    components: Vec<MixtureComponent<T>>,
    system_dim: usize,
}

impl<T: Real> MarkovMixture<T> {
    pub fn components(&self) -> &[MixtureComponent<T>] {
        &self.components
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    /// Weights sum to one, every component has zero diagonal and
    /// nonnegative real rates.
    pub fn validate(&self) -> Result<()> {
        let sum = self.components.iter().fold(T::zero(), |a, c| a + c.weight);
        if (sum - T::one()).abs() > tolerance::<T>(1e-12) {
            return Err(Error::InvalidPopulations(format!("mixture weights sum to {}", to_f64(sum))));
        }
        for c in &self.components {
            for a in 0..self.system_dim {
                if c.rates[(a, a)] != czero() {
                    return Err(Error::InvalidParameter(format!("component {} has a nonzero diagonal rate", c.bath)));
                }
                for b in 0..self.system_dim {
                    if c.rates[(a, b)].re < -tolerance::<T>(1e-10) {
                        return Err(Error::InvalidParameter(format!(
                            "component {} has a negative rate {:e}",
                            c.bath,
                            to_f64(c.rates[(a, b)].re)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `Σ_b q_b exp(-t Φ(s̃,s;b))`.
    pub fn coherence(&self, s_tilde: usize, s: usize, t: T) -> Complex<T> {
        self.components.iter().fold(czero(), |acc, c| acc + cexp(-c.rates[(s_tilde, s)] * t) * c.weight)
    }

    /// Mixture-averaged reduced state.
    pub fn system_state(&self, rho0_s: &DensityMatrix<T>, t: T) -> Result<DensityMatrix<T>> {
        check_time(t)?;
        check_state_dim(rho0_s, self.system_dim, "system state")?;
        let d = self.system_dim;
        let m = CMatrix::from_fn(d, d, |a, b| rho0_s.matrix()[(a, b)] * self.coherence(a, b, t));
        Ok(DensityMatrix::from_matrix_unchecked(m))
    }
}

pub fn as_markov_mixture<T: Real>(
    model: &ModelSpec<T>,
    split: &SplitSpec,
    env: &EnvPopulations<T>,
) -> Result<MarkovMixture<T>> {
    let dynamics = ReducedDynamics::new(model, split, env.clone())?;
    let rates = dynamics.rates();
    let q = env.to_full(rates.bath_basis());
    let d = dynamics.system_dim();
    let components = q
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > T::zero())
        .map(|(b, &weight)| MixtureComponent {
            weight,
            bath: b,
            rates: CMatrix::from_fn(
                d,
                d,
                |st, s| {
                    if st == s {
                        czero()
                    } else {
                        rates.rate_flat(rates.pair(st, s), b)
                    }
                },
            ),
        })
        .collect();
    Ok(MarkovMixture { components, system_dim: d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn bipartite(gamma: f64, chi: Complex<f64>, omega: f64) -> ModelSpec<f64> {
        let beta = (chi.norm_sqr() / gamma).max(1.0) + 0.5;
        let g = CMatrix::from_row_slice(2, 2, &[c(gamma, 0.0), chi, chi.conj(), c(beta, 0.0)]);
        let h = DMatrix::from_row_slice(2, 2, &[0.0, omega, omega, 0.0]);
        ModelSpec::new(vec![vec![1.0, -1.0]; 2], h, g).unwrap()
    }

    fn plus_z() -> DensityMatrix<f64> {
        DensityMatrix::pure(&[c(1.0, 0.0), c(0.0, 0.0)]).unwrap()
    }

    fn env(qp: f64) -> EnvPopulations<f64> {
        EnvPopulations::Product(vec![vec![qp, 1.0 - qp]])
    }

    #[test]
    fn scheme_validation() {
        let s = MeasurementScheme::<f64>::qubit_xnx(0.3);
        assert_eq!(s.dim(), 2);
        let half = MeasurementStage::new(
            vec![CMatrix::identity(2, 2) * c(0.5_f64.sqrt(), 0.0), CMatrix::identity(2, 2) * c(0.5_f64.sqrt(), 0.0)],
            vec![1.0, -1.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        // unsharp operators are fine at the ends but not in the middle
        assert!(MeasurementScheme::new(half.clone(), s.intermediate().clone(), half.clone()).is_ok());
        assert!(matches!(
            MeasurementScheme::new(s.first().clone(), half, s.last().clone()),
            Err(Error::InvalidScheme(_))
        ));
        let incomplete =
            MeasurementStage::new(vec![CMatrix::identity(2, 2) * c(0.9, 0.0)], vec![1.0], vec!["a".into()]);
        assert!(incomplete.is_err());
    }

    #[test]
    fn fourier_scheme_generalizes_qubit_scheme() {
        let f = MeasurementScheme::<f64>::fourier(2, 0.8).unwrap();
        let q = MeasurementScheme::<f64>::qubit_xnx(0.8);
        for (a, b) in f.intermediate().operators().iter().zip(q.intermediate().operators()) {
            assert!(max_abs_diff(a, b) < 1e-15);
        }
        assert_eq!(f.first().values(), q.first().values());
        assert!(MeasurementScheme::<f64>::fourier(3, 0.3).is_ok());
        assert!(MeasurementScheme::<f64>::fourier(1, 0.3).is_err());
    }

    #[test]
    fn bipartite_table_matches_closed_form() {
        let (gamma, qp, phi) = (0.8, 0.4, 0.9);
        for chi_bar in [-1.0, -0.2, 0.0, 0.6] {
            let m = bipartite(gamma, c(0.0, chi_bar), 0.0);
            let sp = SplitSpec::leading(1, 2).unwrap();
            let scheme = MeasurementScheme::qubit_xnx(phi);
            for (t, tau) in [(0.0, 0.0), (0.3, 0.55), (1.2, 0.4)] {
                let table = joint_probability(&m, &sp, &env(qp), &plus_z(), &scheme, t, tau).unwrap();
                let closed = closed_form_table_bipartite(qp, 1.0 - qp, gamma, chi_bar, phi, t, tau);
                assert!(table.max_deviation(&closed) < 1e-14, "χ̲={chi_bar} t={t} τ={tau}");
                assert!((table.total() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hamiltonian_coupling_enters_as_shifted_chi() {
        // χ̲ = χ_I - Ω
        let (gamma, qp, phi) = (0.5, 0.3, 1.1);
        let m = bipartite(gamma, c(0.0, 0.2), 0.5);
        let sp = SplitSpec::leading(1, 2).unwrap();
        let table =
            joint_probability(&m, &sp, &env(qp), &plus_z(), &MeasurementScheme::qubit_xnx(phi), 0.4, 0.9).unwrap();
        let closed = closed_form_table_bipartite(qp, 1.0 - qp, gamma, -0.3, phi, 0.4, 0.9);
        assert!(table.max_deviation(&closed) < 1e-14);
    }

    #[test]
    fn cpf_matches_bipartite_closed_form() {
        let (gamma, qp) = (1.0, 0.4);
        for chi_bar in [-0.2, -1.0] {
            let m = bipartite(gamma, c(0.0, chi_bar), 0.0);
            let sp = SplitSpec::leading(1, 2).unwrap();
            for phi in [PI / 2.0, 0.7] {
                let scheme = MeasurementScheme::qubit_xnx(phi);
                for t in [0.1, 0.5, 1.3] {
                    let table = joint_probability(&m, &sp, &env(qp), &plus_z(), &scheme, t, t).unwrap();
                    let expect = closed_form_cpf_bipartite(qp, 1.0 - qp, gamma, chi_bar, phi, t, t);
                    for y in 0..2 {
                        assert!((cpf_correlation(&table, y).unwrap() - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn markov_residual_cases() {
        let sp = SplitSpec::leading(1, 2).unwrap();
        let scheme = MeasurementScheme::qubit_xnx(PI / 2.0);
        let markov = bipartite(1.0, c(0.7, 0.0), 0.0);
        let t = joint_probability(&markov, &sp, &env(0.4), &plus_z(), &scheme, 0.5, 0.5).unwrap();
        assert!(markov_residual(&t) < 1e-12);
        assert!(cpf_correlation(&t, 0).unwrap().abs() < 1e-12);
        let memory = bipartite(1.0, c(0.0, -1.0), 0.0);
        let t = joint_probability(&memory, &sp, &env(0.4), &plus_z(), &scheme, 0.5, 0.5).unwrap();
        assert!(markov_residual(&t) > 1e-3);
    }

    #[test]
    fn reselection_restores_markov_property() {
        let m = bipartite(1.0, c(0.0, -1.0), 0.0);
        let sp = SplitSpec::leading(1, 2).unwrap();
        let scheme = MeasurementScheme::qubit_xnx(PI / 2.0);
        let plain = joint_probability(&m, &sp, &env(0.4), &plus_z(), &scheme, 0.5, 0.5).unwrap();
        assert!(markov_residual(&plain) > 1e-3);
        let r = Reselection::new(vec![vec![0.3, 0.8], vec![0.7, 0.2]]).unwrap();
        let table = random_selection_protocol(&m, &sp, &env(0.4), &plus_z(), &scheme, &r, 0.5, 0.5).unwrap();
        assert!(markov_residual(&table) < 1e-12);
        assert!((table.total() - 1.0).abs() < 1e-12);
        let det = Reselection::deterministic(1, 2, 2).unwrap();
        let table = random_selection_protocol(&m, &sp, &env(0.4), &plus_z(), &scheme, &det, 0.5, 0.5).unwrap();
        assert!((table.p_y(1) - 1.0).abs() < 1e-14 && table.p_y(0) == 0.0);
    }

    #[test]
    fn reselection_shape_checked() {
        assert!(Reselection::new(vec![vec![0.5, 0.5]]).is_err());
        let m = bipartite(1.0, c(0.0, -1.0), 0.0);
        let sp = SplitSpec::leading(1, 2).unwrap();
        let r = Reselection::uniform(3, 2).unwrap();
        let scheme = MeasurementScheme::qubit_xnx(0.1);
        assert!(random_selection_protocol(&m, &sp, &env(0.5), &plus_z(), &scheme, &r, 0.1, 0.1).is_err());
    }

    #[test]
    fn zero_probability_first_outcome_is_dropped() {
        let m = bipartite(1.0, c(0.0, -1.0), 0.0);
        let sp = SplitSpec::leading(1, 2).unwrap();
        let h = 0.5_f64.sqrt();
        let plus_x = DensityMatrix::pure(&[c(h, 0.0), c(h, 0.0)]).unwrap();
        let table =
            joint_probability(&m, &sp, &env(0.5), &plus_x, &MeasurementScheme::qubit_xnx(0.4), 0.2, 0.3).unwrap();
        assert_eq!(table.dropped, vec![DroppedBranch { x: 1, y: None }]);
        assert!((table.p_x(0) - 1.0).abs() < 1e-14);
        assert!(markov_residual(&table).is_finite());
    }

    #[test]
    fn cpf_undefined_for_impossible_outcome() {
        let t = OutcomeTable::from_fn(
            0.0,
            0.0,
            vec![1.0],
            vec![1.0, -1.0],
            vec![1.0],
            |_, y, _| if y == 0 { 1.0 } else { 0.0 },
        );
        assert!(matches!(cpf_correlation(&t, 1), Err(Error::ConditionalUndefined(_))));
    }

    #[test]
    fn closed_forms_vanish_trivially() {
        assert_eq!(closed_form_cpf_bipartite(0.4, 0.6, 1.0, -1.0, 0.0, 0.3, 0.4), 0.0);
        assert_eq!(closed_form_cpf_bipartite(0.4, 0.6, 1.0, 0.0, 1.0, 0.3, 0.4), 0.0);
        assert!(closed_form_cpf_ring::<f64>(4, 1.0, 0.0, 1.0, 0.3, 0.4).unwrap().abs() < 1e-16);
    }

    #[test]
    fn mixture_reproduces_coherences() {
        let m = bipartite(0.9, c(0.2, -0.4), 0.3);
        let sp = SplitSpec::leading(1, 2).unwrap();
        let mix = as_markov_mixture(&m, &sp, &env(0.35)).unwrap();
        mix.validate().unwrap();
        assert_eq!(mix.components().len(), 2);
        let rho = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let a = mix.system_state(&rho, 0.7).unwrap();
        let b = crate::split::system_state(&m, &sp, &rho, &env(0.35), 0.7).unwrap();
        assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-15);
        let single = as_markov_mixture(&m, &sp, &env(1.0)).unwrap();
        assert_eq!(single.components().len(), 1);
    }

    #[test]
    fn conditional_environment_state_normalizes() {
        let m = bipartite(1.0, c(0.1, -0.6), 0.2);
        let sp = SplitSpec::leading(1, 2).unwrap();
        let h = 0.5_f64.sqrt();
        let rho_x = DensityMatrix::pure(&[c(h, 0.0), c(h, 0.0)]).unwrap();
        let rho_e = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let scheme = MeasurementScheme::qubit_xnx(0.5);
        let mut total = 0.0;
        for y in 0..2 {
            let (p, st) =
                conditional_environment_state(&m, &sp, &rho_x, &rho_e, &scheme.intermediate().effect(y), 0.4).unwrap();
            assert!((st.trace().re - 1.0).abs() < 1e-14);
            total += p;
        }
        assert!((total - 1.0).abs() < 1e-14);
    }
}
