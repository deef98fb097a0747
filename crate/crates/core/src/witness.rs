//! Non-operational memory diagnostics: dephasing rates read off the reduced
//! propagator, canonical rate pairs for the qubit and ring models, and the
//! Gaussian large-bath limit.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cabs, cexp, cln, cplx, lit, to_f64, Real};
use crate::split::COHERENCE_ZERO;

/// Below this the qubit denominator `D(t)` is treated as vanished.
pub const DENOMINATOR_TOL: f64 = 1e-12;
/// `|cos(2χt)|` below this marks a tangent pole of the ring rate.
pub const POLE_TOL: f64 = 1e-12;

/// `-(d/dt) ln f(t)` by 4th-order finite differences on `ln f`.
///
/// Logs are taken of ratios `f(t + k dt) / f(t)` so the result is insensitive
/// to branch cuts as long as the phase changes by less than `π` per step.
/// Points closer than `2 dt` to the origin use a one-sided stencil.
pub fn log_derivative_rate<T: Real, F>(f: F, t: T, dt: T) -> Result<Complex<T>>
where
    F: Fn(T) -> Result<Complex<T>>,
{
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {}", to_f64(dt))));
    }
    if t < T::zero() || !t.is_finite() {
        return Err(Error::NegativeTime(to_f64(t)));
    }
    let zero_tol = lit::<T>(COHERENCE_ZERO);
    let f0 = f(t)?;
    if cabs(f0) < zero_tol {
        return Err(Error::CoherenceZero { t: to_f64(t), modulus: to_f64(cabs(f0)) });
    }
    let log_ratio = |k: i32| -> Result<Complex<T>> {
        let tk = t + dt * lit::<T>(k as f64);
        let fk = f(tk)?;
        if cabs(fk) < zero_tol {
            return Err(Error::CoherenceZero { t: to_f64(tk), modulus: to_f64(cabs(fk)) });
        }
        Ok(cln(fk / f0))
    };
    let twelve_dt = dt * lit::<T>(12.0);
    let derivative = if t >= dt * lit::<T>(2.0) {
        (log_ratio(-2)? - log_ratio(-1)? * lit::<T>(8.0) + log_ratio(1)? * lit::<T>(8.0) - log_ratio(2)?) / twelve_dt
    } else {
        (log_ratio(1)? * lit::<T>(48.0) - log_ratio(2)? * lit::<T>(36.0) + log_ratio(3)? * lit::<T>(16.0)
            - log_ratio(4)? * lit::<T>(3.0))
            / twelve_dt
    };
    Ok(-derivative)
}

/// Canonical frequency and rate of a qubit master equation
/// `dρ/dt = -i ω(t)/2 [σ_z, ρ] + γ(t)(σ_z ρ σ_z - ρ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalRates<T> {
    pub omega: T,
    pub gamma_rate: T,
}

/// System qubit coupled to a bath qubit through an imaginary rate or a
/// Hamiltonian term; `chi_bar` is the combined coupling `χ_I - Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitDephasing<T> {
    pub q_plus: T,
    pub q_minus: T,
    pub gamma: T,
    pub chi_bar: T,
}

impl<T: Real> QubitDephasing<T> {
    pub fn new(q_plus: T, q_minus: T, gamma: T, chi_bar: T) -> Result<Self> {
        let tol = lit::<T>(1e-12);
        if q_plus < T::zero() || q_minus < T::zero() || (q_plus + q_minus - T::one()).abs() > tol {
            return Err(Error::InvalidPopulations(format!(
                "q+ = {}, q- = {} is not a distribution",
                to_f64(q_plus),
                to_f64(q_minus)
            )));
        }
        Ok(QubitDephasing { q_plus, q_minus, gamma, chi_bar })
    }

    /// `D(t) = q₊² + q₋² + 2 q₊ q₋ cos(4 χ̲ t)`.
    pub fn denominator(&self, t: T) -> T {
        let (p, m) = (self.q_plus, self.q_minus);
        p * p + m * m + lit::<T>(2.0) * p * m * (lit::<T>(4.0) * self.chi_bar * t).cos()
    }

    pub fn rates(&self, t: T) -> Result<CanonicalRates<T>> {
        let d = self.denominator(t);
        if d <= lit(DENOMINATOR_TOL) {
            return Err(Error::DenominatorVanishes { t: to_f64(t) });
        }
        let two = lit::<T>(2.0);
        let c = self.chi_bar;
        Ok(CanonicalRates {
            omega: -two * c * (self.q_plus - self.q_minus) / d,
            gamma_rate: self.gamma + two * c * self.q_plus * self.q_minus * (lit::<T>(4.0) * c * t).sin() / d,
        })
    }

    /// `f(t) = e^{-2γt} (q₊ e^{2iχ̲t} + q₋ e^{-2iχ̲t})` for the `(+, -)` coherence.
    pub fn coherence(&self, t: T) -> Complex<T> {
        let two = lit::<T>(2.0);
        let phase = two * self.chi_bar * t;
        let osc = cexp(cplx(T::zero(), phase)) * self.q_plus + cexp(cplx(T::zero(), -phase)) * self.q_minus;
        osc * (-two * self.gamma * t).exp()
    }
}

pub fn qubit_canonical_rates<T: Real>(q_plus: T, q_minus: T, gamma: T, chi_bar: T, t: T) -> Result<CanonicalRates<T>> {
    QubitDephasing::new(q_plus, q_minus, gamma, chi_bar)?.rates(t)
}

/// Number of bath qubits sharing a nonzero coupling with the system qubit of
/// a ring of `n` qubits at `λ = n/4`.
pub fn ring_effective_bath(n: usize) -> usize {
    n / 2
}

fn check_ring_size(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("ring needs at least 2 qubits, got {n}")));
    }
    Ok(())
}

/// Ring coherence `f(t) = e^{-2γt} cos^{n̄}(2χt)` for a uniform bath.
pub fn ring_coherence<T: Real>(n: usize, gamma: T, chi: T, t: T) -> Result<T> {
    check_ring_size(n)?;
    let two = lit::<T>(2.0);
    Ok((-two * gamma * t).exp() * (two * chi * t).cos().powi(ring_effective_bath(n) as i32))
}

/// `(0, γ + n̄ χ tan(2χt))`; tangent poles are reported, not evaluated.
pub fn ring_canonical_rates<T: Real>(n: usize, gamma: T, chi: T, t: T) -> Result<CanonicalRates<T>> {
    check_ring_size(n)?;
    let nbar = ring_effective_bath(n);
    if nbar == 0 || chi == T::zero() {
        return Ok(CanonicalRates { omega: T::zero(), gamma_rate: gamma });
    }
    let x = lit::<T>(2.0) * chi * t;
    if x.cos().abs() < lit(POLE_TOL) {
        let half_pi = T::frac_pi_2();
        let k = ((x - half_pi) / T::pi()).round();
        let pole = (half_pi + k * T::pi()) / (lit::<T>(2.0) * chi);
        return Err(Error::RateDivergence { t: to_f64(t), pole: to_f64(pole) });
    }
    Ok(CanonicalRates { omega: T::zero(), gamma_rate: gamma + lit::<T>(nbar as f64) * chi * x.tan() })
}

/// `sup_t |cos(2χ_n t)^{n̄} - exp(-2 g² t²)|` with `χ_n = g √(2/n)`.
pub fn gaussian_limit_check<T: Real>(g: T, n: usize, t_grid: &[T]) -> T {
    let two = lit::<T>(2.0);
    let chi_n = g * (two / lit::<T>(n as f64)).sqrt();
    let nbar = ring_effective_bath(n) as i32;
    t_grid.iter().fold(T::zero(), |acc, &t| {
        let dev = ((two * chi_n * t).cos().powi(nbar) - (-two * g * g * t * t).exp()).abs();
        if dev > acc {
            dev
        } else {
            acc
        }
    })
}

/// One row of a rate curve. Diverged rows carry NaN rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample<T> {
    pub t: T,
    pub omega: T,
    pub gamma_rate: T,
    pub diverged: bool,
}

/// Evaluates `rates` on a grid, turning divergences into flagged rows.
/// Any other error aborts the scan.
pub fn sample_rates<T: Real, F>(t_grid: &[T], rates: F) -> Result<Vec<RateSample<T>>>
where
    F: Fn(T) -> Result<CanonicalRates<T>>,
{
    t_grid
        .iter()
        .map(|&t| match rates(t) {
            Ok(r) => Ok(RateSample { t, omega: r.omega, gamma_rate: r.gamma_rate, diverged: false }),
            Err(Error::DenominatorVanishes { .. } | Error::RateDivergence { .. } | Error::CoherenceZero { .. }) => {
                Ok(RateSample { t, omega: lit::<T>(f64::NAN), gamma_rate: lit::<T>(f64::NAN), diverged: true })
            }
            Err(e) => Err(e),
        })
        .collect()
}

/// Maximal runs of consecutive samples with `γ(t) < 0`, as `(first t, last t)`.
pub fn negative_intervals<T: Real>(samples: &[RateSample<T>]) -> Vec<(T, T)> {
    let mut out = Vec::new();
    let mut open: Option<(T, T)> = None;
    for s in samples {
        if !s.diverged && s.gamma_rate < T::zero() {
            open = Some(match open {
                Some((a, _)) => (a, s.t),
                None => (s.t, s.t),
            });
        } else if let Some(iv) = open.take() {
            out.push(iv);
        }
    }
    out.extend(open);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn log_derivative_of_exponential_is_constant() {
        let phi = Complex::new(0.7, -1.3);
        for t in [0.0, 0.001, 0.5, 2.0] {
            let r = log_derivative_rate(|t: f64| Ok((-phi * t).exp()), t, 1e-3).unwrap();
            assert!((r - phi).norm() < 1e-10, "t={t}: {r}");
        }
    }

    #[test]
    fn log_derivative_rejects_vanishing_coherence() {
        let r = log_derivative_rate(|t: f64| Ok(Complex::new((2.0 * t).cos(), 0.0)), std::f64::consts::FRAC_PI_4, 1e-3);
        assert!(matches!(r, Err(Error::CoherenceZero { .. })));
        assert!(log_derivative_rate(|_t: f64| Ok(Complex::new(1.0, 0.0)), 1.0, 0.0).is_err());
    }

    #[test]
    fn qubit_extremes_are_constant() {
        for t in grid(0.0, 5.0, 100) {
            let r = qubit_canonical_rates(1.0, 0.0, 0.3, -0.8, t).unwrap();
            assert!((r.omega - 1.6).abs() < 1e-12 && (r.gamma_rate - 0.3).abs() < 1e-12);
            let r = qubit_canonical_rates(0.0, 1.0, 0.3, -0.8, t).unwrap();
            assert!((r.omega + 1.6).abs() < 1e-12 && (r.gamma_rate - 0.3).abs() < 1e-12);
        }
        assert_eq!(
            qubit_canonical_rates(0.4, 0.6, 0.5, 0.0, 1.3).unwrap(),
            CanonicalRates { omega: 0.0, gamma_rate: 0.5 }
        );
    }

    #[test]
    fn qubit_denominator_vanishes_only_for_equal_populations() {
        let t = std::f64::consts::PI / 4.0;
        assert!(matches!(qubit_canonical_rates(0.5, 0.5, 1.0, 1.0, t), Err(Error::DenominatorVanishes { .. })));
        assert!(qubit_canonical_rates(0.49, 0.51, 1.0, 1.0, t).is_ok());
        assert!(qubit_canonical_rates(0.5, 0.6, 1.0, 1.0, t).is_err());
    }

    #[test]
    fn integrated_rates_reconstruct_the_coherence() {
        // f(t) = exp(-∫ (2γ(s) + iω(s)) ds), Simpson's rule on a fine grid
        let q = QubitDephasing::new(0.3, 0.7, 1.0, -0.8).unwrap();
        let steps = 3000;
        let h = 3.0 / steps as f64;
        let rate = |t: f64| {
            let r = q.rates(t).unwrap();
            Complex::new(2.0 * r.gamma_rate, r.omega)
        };
        let mut integral = Complex::new(0.0, 0.0);
        for k in (0..steps).step_by(2) {
            let t = k as f64 * h;
            integral += (rate(t) + rate(t + h) * 4.0 + rate(t + 2.0 * h)) * (h / 3.0);
            let t_end = t + 2.0 * h;
            let rebuilt = (-integral).exp() * q.coherence(0.0);
            assert!((rebuilt - q.coherence(t_end)).norm() < 1e-9, "t = {t_end}");
        }
    }

    #[test]
    fn qubit_rates_match_log_derivative_of_closed_form() {
        let q = QubitDephasing::new(0.4, 0.6, 1.0, -1.0).unwrap();
        for t in grid(0.0, 3.0, 31) {
            let r = q.rates(t).unwrap();
            let lr = log_derivative_rate(|t| Ok(q.coherence(t)), t, 1e-4).unwrap();
            assert!((lr.re - 2.0 * r.gamma_rate).abs() < 1e-8, "t={t}: {} vs {}", lr.re, 2.0 * r.gamma_rate);
            assert!((lr.im - r.omega).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn equal_population_rate_is_tangent() {
        // q₊ = q₋ = ½: -d ln f/dt = 2γ + 2χ̲ tan(2χ̲ t)
        let (g, c) = (0.7, 0.45);
        let q = QubitDephasing::new(0.5, 0.5, g, c).unwrap();
        for t in grid(0.0, 1.5, 16) {
            let lr = log_derivative_rate(|t| Ok(q.coherence(t)), t, 1e-3).unwrap();
            let expect = 2.0 * g + 2.0 * c * (2.0 * c * t).tan();
            assert!((lr.re - expect).abs() < 1e-8 && lr.im.abs() < 1e-8);
        }
    }

    #[test]
    fn ring_rates_and_poles() {
        assert_eq!(ring_canonical_rates(5, 1.0, 0.0, 2.0).unwrap(), CanonicalRates { omega: 0.0, gamma_rate: 1.0 });
        let chi = 0.25;
        let pole = std::f64::consts::PI / (4.0 * chi);
        match ring_canonical_rates(4, 1.0, chi, pole) {
            Err(Error::RateDivergence { pole: p, .. }) => assert!((p - pole).abs() < 1e-12),
            other => panic!("expected divergence, got {other:?}"),
        }
        for t in grid(0.01, 3.0, 40) {
            let Ok(r) = ring_canonical_rates(6, 0.8, chi, t) else { continue };
            let lr = log_derivative_rate(|t| ring_coherence(6, 0.8, chi, t).map(|f| Complex::new(f, 0.0)), t, 1e-4);
            if let Ok(lr) = lr {
                if (2.0 * chi * t).cos().abs() > 0.05 {
                    assert!((lr.re / 2.0 - r.gamma_rate).abs() < 1e-7, "t={t}");
                }
            }
        }
    }

    #[test]
    fn ring_rate_turns_negative() {
        let samples = sample_rates(&grid(0.0, 20.0, 2001), |t| ring_canonical_rates(4, 1.0, 0.5, t)).unwrap();
        let neg = negative_intervals(&samples);
        // one negative stretch per period π/(2χ) ≈ 3.14 in [0, 20]
        assert!(neg.len() >= 6, "{neg:?}");
        let none = sample_rates(&grid(0.0, 20.0, 201), |t| ring_canonical_rates(4, 1.0, 0.0, t)).unwrap();
        assert!(negative_intervals(&none).is_empty());
    }

    #[test]
    fn gaussian_limit() {
        assert_eq!(gaussian_limit_check(1.0, 16, &[0.0]), 0.0);
        let g = grid(0.0, 1.5, 151);
        assert!(gaussian_limit_check(1.0, 400, &g) < 0.01);
        let devs: Vec<f64> = [16, 64, 256, 1024].iter().map(|&n| gaussian_limit_check(1.0, n, &g)).collect();
        assert!(devs.windows(2).all(|w| w[1] < w[0]), "{devs:?}");
    }

    #[test]
    fn negative_interval_grouping() {
        let mk = |t: f64, g: f64| RateSample { t, omega: 0.0, gamma_rate: g, diverged: false };
        let s = [mk(0.0, 1.0), mk(1.0, -1.0), mk(2.0, -0.5), mk(3.0, 0.2), mk(4.0, -0.1)];
        assert_eq!(negative_intervals(&s), vec![(1.0, 2.0), (4.0, 4.0)]);
    }
}
