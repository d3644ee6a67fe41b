//! Hamiltonian energy density of axisymmetric fields on the cylinder, its
//! sphere-slice integrals, and the radial Pohozaev invariant as a function
//! of the necksize.
//!
//! For `v(t, s)` with `s = <theta, a>`, the angular terms reduce to
//! `|grad v|^2 = (1-s^2) v_s^2`, `Lap v = (1-s^2) v_ss - (n-1) s v_s` and
//! `|grad v_t|^2 = (1-s^2) v_ts^2`.

use serde::Serialize;

use crate::coefficients::OdeCoefficients;
use crate::delaunay::{shoot_delaunay, v_sph, DelaunayOrbit, ShootingConfig};
use crate::ode::hamiltonian;
use crate::optimize::brent_root;
use crate::quadrature::SliceQuadrature;
use crate::series::Series2;
use crate::state::CylState;
use crate::{Error, Real, Result};

/// Pointwise partials of an axisymmetric field at `(t, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldJet<T> {
    pub s: T,
    pub v: T,
    pub v_t: T,
    pub v_tt: T,
    pub v_ttt: T,
    pub v_s: T,
    pub v_ss: T,
    pub v_ts: T,
}

impl<T: Real> FieldJet<T> {
    /// The jet of a field independent of `theta`.
    pub fn from_state(state: CylState<T>, s: T) -> Self {
        Self {
            s,
            v: state.v,
            v_t: state.dv,
            v_tt: state.d2v,
            v_ttt: state.d3v,
            v_s: T::zero(),
            v_ss: T::zero(),
            v_ts: T::zero(),
        }
    }

    /// Reads the jet off a series expanded in `(t, s)` at `s`.
    pub fn from_series(f: &Series2<T>, s: T) -> Self {
        Self {
            s,
            v: f.value(),
            v_t: f.partial(1, 0),
            v_tt: f.partial(2, 0),
            v_ttt: f.partial(3, 0),
            v_s: f.partial(0, 1),
            v_ss: f.partial(0, 2),
            v_ts: f.partial(1, 1),
        }
    }

    pub fn radial_part(&self) -> CylState<T> {
        CylState::new(self.v, self.v_t, self.v_tt, self.v_ttt)
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            s: self.s,
            v: self.v * k,
            v_t: self.v_t * k,
            v_tt: self.v_tt * k,
            v_ttt: self.v_ttt * k,
            v_s: self.v_s * k,
            v_ss: self.v_ss * k,
            v_ts: self.v_ts * k,
        }
    }
}

/// The angular terms `-(Lap v)^2/2 + |grad v_t|^2 - (n(n-4)/4) |grad v|^2`.
fn angular_terms<T: Real>(jet: &FieldJet<T>, coeffs: &OdeCoefficients<T>) -> T {
    if jet.v_s == T::zero() && jet.v_ss == T::zero() && jet.v_ts == T::zero() {
        return T::zero();
    }
    let nf = coeffs.dim();
    let w = T::one() - jet.s * jet.s;
    let lap = w * jet.v_ss - (nf - T::one()) * jet.s * jet.v_s;
    let grad2 = w * jet.v_s * jet.v_s;
    let grad_t2 = w * jet.v_ts * jet.v_ts;
    -T::lit(0.5) * lap * lap + grad_t2 - nf * (nf - T::lit(4.0)) / T::lit(4.0) * grad2
}

/// Energy density `H(v)`; equals [`hamiltonian`] on `theta`-independent jets.
pub fn ham_density<T: Real>(jet: &FieldJet<T>, coeffs: &OdeCoefficients<T>) -> Result<T> {
    let base = hamiltonian(jet.radial_part(), coeffs)?;
    let ang = angular_terms(jet, coeffs);
    Ok(if ang == T::zero() { base } else { base + ang })
}

/// `H_cyl(v) = H(v) - ((n-4)^2 (n^2-4)/32) v^{2n/(n-4)}`.
pub fn ham_cyl_density<T: Real>(jet: &FieldJet<T>, coeffs: &OdeCoefficients<T>) -> Result<T> {
    Ok(ham_density(jet, coeffs)? - power_term(jet.v, coeffs))
}

fn power_term<T: Real>(v: T, coeffs: &OdeCoefficients<T>) -> T {
    coeffs.potential_coeff() * v.powf(coeffs.energy_exponent())
}

/// A field `v(t, s)` on the cylinder, axisymmetric about a fixed axis.
pub trait AxisymmetricField<T: Real> {
    fn jet(&self, t: T, s: T) -> Result<FieldJet<T>>;

    /// The `theta`-independent state at `t`, for fields without angular
    /// dependence.
    fn radial_state(&self, _t: T) -> Option<CylState<T>> {
        None
    }
}

impl<T: Real> AxisymmetricField<T> for DelaunayOrbit<T> {
    fn jet(&self, t: T, s: T) -> Result<FieldJet<T>> {
        Ok(FieldJet::from_state(self.eval(t), s))
    }

    fn radial_state(&self, t: T) -> Option<CylState<T>> {
        Some(self.eval(t))
    }
}

/// `v_sph = (cosh t)^{(4-n)/2}`.
#[derive(Debug, Clone, Copy)]
pub struct SphereField {
    pub n: u32,
}

impl<T: Real> AxisymmetricField<T> for SphereField {
    fn jet(&self, t: T, s: T) -> Result<FieldJet<T>> {
        Ok(FieldJet::from_state(v_sph(t, self.n), s))
    }

    fn radial_state(&self, t: T) -> Option<CylState<T>> {
        Some(v_sph(t, self.n))
    }
}

/// The translated Delaunay field
/// `|theta - e^{-t} a|^{(4-n)/2} v_eps(t + phase + log|theta - e^{-t} a|)`,
/// differentiated by truncated Taylor arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct TranslatedDelaunay<'a, T> {
    pub orbit: &'a DelaunayOrbit<T>,
    pub a_norm: T,
    pub phase: T,
}

impl<'a, T: Real> TranslatedDelaunay<'a, T> {
    pub fn new(orbit: &'a DelaunayOrbit<T>, a_norm: T) -> Self {
        Self { orbit, a_norm, phase: T::zero() }
    }

    /// The field as a series about `(t, s)`.
    pub fn series(&self, t: T, s: T) -> Result<Series2<T>> {
        let tt = Series2::var_t(t);
        let ss = Series2::var_s(s);
        let x = (-tt).exp() * self.a_norm;
        let rho2 = (x * x - x * ss * T::lit(2.0)) + T::one();
        if !(rho2.value() > T::zero()) {
            return Err(Error::Domain("theta coincides with e^{-t} a".into()));
        }
        let arg = tt + rho2.ln() * T::lit(0.5) + self.phase;
        let st = self.orbit.eval(arg.value());
        let fourth = self.orbit.fourth_derivative(arg.value());
        let prof = arg.compose([st.v, st.dv, st.d2v, st.d3v, fourth]);
        Ok(rho2.powf(-self.orbit.coeffs().weight() / T::lit(2.0)) * prof)
    }
}

impl<T: Real> AxisymmetricField<T> for TranslatedDelaunay<'_, T> {
    fn jet(&self, t: T, s: T) -> Result<FieldJet<T>> {
        Ok(FieldJet::from_series(&self.series(t, s)?, s))
    }

    fn radial_state(&self, t: T) -> Option<CylState<T>> {
        (self.a_norm == T::zero()).then(|| self.orbit.eval(t + self.phase))
    }
}

/// `k * v` for an inner field `v`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledField<F, T> {
    pub inner: F,
    pub factor: T,
}

impl<T: Real, F: AxisymmetricField<T>> AxisymmetricField<T> for ScaledField<F, T> {
    fn jet(&self, t: T, s: T) -> Result<FieldJet<T>> {
        Ok(self.inner.jet(t, s)?.scaled(self.factor))
    }

    fn radial_state(&self, t: T) -> Option<CylState<T>> {
        self.inner.radial_state(t).map(|st| st * self.factor)
    }
}

/// A field given only by values; partials by central differences.
pub struct SampledField<F> {
    pub f: F,
}

impl<T: Real, F: Fn(T, T) -> Result<T>> AxisymmetricField<T> for SampledField<F> {
    fn jet(&self, t: T, s: T) -> Result<FieldJet<T>> {
        let f = &self.f;
        let ft = |h: T| f(t + h, s);
        let fs = |h: T| f(t, s + h);
        let d1 = |g: &dyn Fn(T) -> Result<T>, h: T| -> Result<T> {
            Ok((g(-h - h)? - T::lit(8.0) * g(-h)? + T::lit(8.0) * g(h)? - g(h + h)?) / (T::lit(12.0) * h))
        };
        let d2 = |g: &dyn Fn(T) -> Result<T>, h: T| -> Result<T> {
            Ok((-g(-h - h)? + T::lit(16.0) * g(-h)? - T::lit(30.0) * g(T::zero())? + T::lit(16.0) * g(h)? - g(h + h)?)
                / (T::lit(12.0) * h * h))
        };
        let d3 = |g: &dyn Fn(T) -> Result<T>, h: T| -> Result<T> {
            let three = T::lit(3.0);
            Ok((-g(three * h)? + T::lit(8.0) * g(h + h)? - T::lit(13.0) * g(h)? + T::lit(13.0) * g(-h)?
                - T::lit(8.0) * g(-h - h)?
                + g(-three * h)?)
                / (T::lit(8.0) * h * h * h))
        };
        let h1 = T::lit(FD_STEP);
        let h2 = T::lit(1e-3);
        let h3 = T::lit(5e-3);
        let v_ts = d1(&|k: T| d1(&|h: T| f(t + k, s + h), h1), h1 * T::lit(10.0))?;
        Ok(FieldJet {
            s,
            v: f(t, s)?,
            v_t: d1(&ft, h1)?,
            v_tt: d2(&ft, h2)?,
            v_ttt: d3(&ft, h3)?,
            v_s: d1(&fs, h1)?,
            v_ss: d2(&fs, h2)?,
            v_ts,
        })
    }
}

/// First-derivative step of [`SampledField`].
pub const FD_STEP: f64 = 1e-4;

/// `P~_rad(v) = int_{{t} x S^{n-1}} H(v) dtheta`.
pub fn slice_invariant<T: Real, F: AxisymmetricField<T> + ?Sized>(
    field: &F,
    t: T,
    coeffs: &OdeCoefficients<T>,
    quad: &SliceQuadrature<T>,
) -> Result<T> {
    if let Some(state) = field.radial_state(t) {
        return Ok(coeffs.sphere_area * hamiltonian(state, coeffs)?);
    }
    quad.integrate(|s| ham_density(&field.jet(t, s)?, coeffs))
}

/// `int H_cyl(v) + ((n-4)/(2n)) A v^{2n/(n-4)} dtheta`, conserved for
/// solutions of `P_cyl v = A v^{(n+4)/(n-4)}`.
pub fn generalized_invariant<T: Real, F: AxisymmetricField<T> + ?Sized>(
    field: &F,
    t: T,
    a: T,
    coeffs: &OdeCoefficients<T>,
    quad: &SliceQuadrature<T>,
) -> Result<T> {
    let nf = coeffs.dim();
    let k = (nf - T::lit(4.0)) / (T::lit(2.0) * nf) * a;
    let e = coeffs.energy_exponent();
    quad.integrate(|s| {
        let jet = field.jet(t, s)?;
        Ok(ham_cyl_density(&jet, coeffs)? + k * jet.v.powf(e))
    })
}

/// Slice invariant of `eps z` assembled as `eps^2 H_cyl(z) + C eps^{2n/(n-4)} z^{2n/(n-4)}`.
pub fn scaled_slice_invariant<T: Real, F: AxisymmetricField<T> + ?Sized>(
    z: &F,
    eps: T,
    t: T,
    coeffs: &OdeCoefficients<T>,
    quad: &SliceQuadrature<T>,
) -> Result<T> {
    let e = coeffs.energy_exponent();
    let c = coeffs.potential_coeff();
    let (e2, ep) = (eps * eps, eps.powf(e));
    quad.integrate(|s| {
        let jet = z.jet(t, s)?;
        Ok(e2 * ham_cyl_density(&jet, coeffs)? + c * ep * jet.v.powf(e))
    })
}

/// `P_rad(eps) = |S^{n-1}| H(v_eps)`.
pub fn pohozaev_of_necksize<T: Real>(eps: T, coeffs: &OdeCoefficients<T>, config: &ShootingConfig<T>) -> Result<T> {
    let orbit = shoot_delaunay(eps, coeffs, config)?;
    Ok(coeffs.sphere_area * orbit.ham_level)
}

/// `P_rad` of the cylinder, the most negative admissible value.
pub fn pohozaev_of_cylinder<T: Real>(coeffs: &OdeCoefficients<T>) -> T {
    coeffs.sphere_area * coeffs.cylinder_energy()
}

/// Inverts [`pohozaev_of_necksize`] on `[P_rad(eps_n), 0)`.
pub fn necksize_from_pohozaev<T: Real>(p: T, coeffs: &OdeCoefficients<T>, config: &ShootingConfig<T>) -> Result<T> {
    let p_cyl = pohozaev_of_cylinder(coeffs);
    let to_f = |x: T| x.to_f64().unwrap_or(f64::NAN);
    if !(p >= p_cyl && p < T::zero()) {
        return Err(Error::OutOfRange { value: to_f(p), lo: to_f(p_cyl), hi: 0.0 });
    }
    let eps_n = coeffs.eps_n;
    if p == p_cyl {
        return Ok(eps_n);
    }
    let lo = config.min_eps;
    let p_lo = pohozaev_of_necksize(lo, coeffs, config)?;
    if p > p_lo {
        return Err(Error::Degenerate { eps: 0.0, cutoff: to_f(lo) });
    }
    let f = |eps: T| -> Result<T> {
        if eps >= eps_n {
            return Ok(p_cyl - p);
        }
        pohozaev_of_necksize(eps, coeffs, config).map(|v| v - p)
    };
    let xtol = T::lit(1e-13) * eps_n;
    match brent_root(f, lo, eps_n, xtol, 200)? {
        Some(r) => Ok(r.x),
        None => Err(Error::NoConvergence { detail: format!("no sign change for P = {p}") }),
    }
}
