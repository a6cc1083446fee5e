//! Uniformly convex flux functions with the derivative data and norm
//! bounds the shock-budget formulas consume.

use std::sync::Arc;

use crate::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scan resolution for norm and convexity estimates.
const NORM_SCAN: usize = 8193;

/// A flux `f` with evaluators for `f', f'', f'''` (and `f''''` when the
/// flux is C4). Norms are taken over `(-V/2, V/2)`; the convexity
/// constant over the padded working range `[-0.6 V, 0.6 V]` that the
/// solvers may visit.
#[derive(Clone)]
pub struct FluxFunction {
    name: String,
    f: ScalarFn,
    f1: ScalarFn,
    f2: ScalarFn,
    f3: ScalarFn,
    f4: Option<ScalarFn>,
}

impl std::fmt::Debug for FluxFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FluxFunction")
            .field("name", &self.name)
            .field("c4", &self.f4.is_some())
            .finish()
    }
}

impl FluxFunction {
    pub fn new<F, G, H, K>(name: &str, f: F, f1: G, f2: H, f3: K) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
        K: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        FluxFunction {
            name: name.to_string(),
            f: Arc::new(f),
            f1: Arc::new(f1),
            f2: Arc::new(f2),
            f3: Arc::new(f3),
            f4: None,
        }
    }

    pub fn with_f4<F>(mut self, f4: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.f4 = Some(Arc::new(f4));
        self
    }

    /// Burgers flux `u^2 / 2`.
    pub fn burgers() -> Self {
        FluxFunction::new("burgers", |u| 0.5 * u * u, |u| u, |_| 1.0, |_| 0.0)
            .with_f4(|_| 0.0)
    }

    /// `u^2/2 + u^3/12`: uniformly convex on moderate ranges.
    pub fn cubic() -> Self {
        FluxFunction::new(
            "cubic",
            |u| 0.5 * u * u + u * u * u / 12.0,
            |u| u + 0.25 * u * u,
            |u| 1.0 + 0.5 * u,
            |_| 0.5,
        )
        .with_f4(|_| 0.0)
    }

    /// `e^u`.
    pub fn exponential() -> Self {
        FluxFunction::new("exp", f64::exp, f64::exp, f64::exp, f64::exp).with_f4(f64::exp)
    }

    /// Polynomial flux from low-order-first coefficients.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("polynomial flux needs finite coefficients"));
        }
        let deriv = |c: &[f64]| -> Vec<f64> {
            c.iter()
                .enumerate()
                .skip(1)
                .map(|(k, &v)| k as f64 * v)
                .collect()
        };
        let c0 = coeffs;
        let c1 = deriv(&c0);
        let c2 = deriv(&c1);
        let c3 = deriv(&c2);
        let c4 = deriv(&c3);
        let horner = |c: Vec<f64>| -> ScalarFn {
            Arc::new(move |u| c.iter().rev().fold(0.0, |acc, &v| acc * u + v))
        };
        Ok(FluxFunction {
            name: "poly".to_string(),
            f: horner(c0),
            f1: horner(c1),
            f2: horner(c2),
            f3: horner(c3),
            f4: Some(horner(c4)),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn d1(&self, u: f64) -> f64 {
        (self.f1)(u)
    }

    pub fn d2(&self, u: f64) -> f64 {
        (self.f2)(u)
    }

    pub fn d3(&self, u: f64) -> f64 {
        (self.f3)(u)
    }

    pub fn d4(&self, u: f64) -> Option<f64> {
        self.f4.as_ref().map(|f| f(u))
    }

    pub fn is_c4(&self) -> bool {
        self.f4.is_some()
    }

    /// Padded working range `[-0.6 V, 0.6 V]` absorbing solver excursions.
    pub fn working_range(v: f64) -> (f64, f64) {
        (-0.6 * v, 0.6 * v)
    }

    /// Convexity constant: `inf f''` over the padded working range.
    pub fn lambda(&self, v: f64) -> Result<f64> {
        let (lo, hi) = Self::working_range(v);
        let mut inf = f64::INFINITY;
        for i in 0..NORM_SCAN {
            let u = lo + (hi - lo) * i as f64 / (NORM_SCAN - 1) as f64;
            inf = inf.min(self.d2(u));
        }
        if !(inf > 0.0) {
            return Err(Error::precondition(format!(
                "flux '{}' is not uniformly convex on [{lo}, {hi}]: inf f'' = {inf}",
                self.name
            )));
        }
        Ok(inf)
    }

    fn sup_on(&self, k: usize, v: f64) -> f64 {
        let (lo, hi) = (-v / 2.0, v / 2.0);
        let g: &ScalarFn = match k {
            0 => &self.f,
            1 => &self.f1,
            2 => &self.f2,
            3 => &self.f3,
            _ => self.f4.as_ref().expect("f4 missing"),
        };
        let mut sup = 0.0f64;
        for i in 0..NORM_SCAN {
            let u = lo + (hi - lo) * i as f64 / (NORM_SCAN - 1) as f64;
            sup = sup.max(g(u).abs());
        }
        sup
    }

    /// `max_{k<=3} sup |f^{(k)}|` over `(-V/2, V/2)`.
    pub fn c3_norm(&self, v: f64) -> f64 {
        (0..=3).map(|k| self.sup_on(k, v)).fold(0.0, f64::max)
    }

    /// `max_{k<=4} sup |f^{(k)}|` over `(-V/2, V/2)` when the flux is C4.
    pub fn c4_norm(&self, v: f64) -> Option<f64> {
        self.f4.as_ref()?;
        Some((0..=4).map(|k| self.sup_on(k, v)).fold(0.0, f64::max))
    }

    /// Whether `f'''` is constant on `(-V/2, V/2)` (then its inverse
    /// modulus is infinite).
    pub fn f3_constant(&self, v: f64) -> bool {
        let (lo, hi) = (-v / 2.0, v / 2.0);
        let first = self.d3(lo);
        (0..NORM_SCAN).all(|i| {
            let u = lo + (hi - lo) * i as f64 / (NORM_SCAN - 1) as f64;
            self.d3(u) == first
        })
    }

    /// Monotone inversion of `f'` on the padded working range: bracketed
    /// bisection to width 1e-14, then one Newton polish.
    pub fn invert_speed(&self, y: f64, v: f64) -> Result<f64> {
        if y == self.d1(0.0) {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = Self::working_range(v);
        let (flo, fhi) = (self.d1(lo), self.d1(hi));
        if y < flo || y > fhi {
            return Err(Error::Range(format!(
                "speed {y} outside f'([{lo}, {hi}]) = [{flo}, {fhi}]"
            )));
        }
        let scale = (hi - lo).max(1.0);
        while hi - lo > 1e-14 * scale {
            let mid = 0.5 * (lo + hi);
            if self.d1(mid) <= y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut u = 0.5 * (lo + hi);
        let d2 = self.d2(u);
        if d2 > 0.0 {
            u -= (self.d1(u) - y) / d2;
        }
        Ok(u)
    }

    /// Convex conjugate `f*(s) = s w - f(w)` with `w = (f')^{-1}(s)`.
    pub fn conjugate(&self, s: f64, v: f64) -> Result<f64> {
        let w = self.invert_speed(s, v)?;
        Ok(s * w - self.eval(w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burgers_norms() {
        let f = FluxFunction::burgers();
        // C3 norm on (-1, 1): max(1/2, 1, 1, 0) = 1
        assert!((f.c3_norm(2.0) - 1.0).abs() < 1e-12);
        // C4 norm on (-2, 2): max(2, 2, 1, 0, 0) = 2
        assert!((f.c4_norm(4.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((f.lambda(4.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(f.f3_constant(4.0));
    }

    #[test]
    fn cubic_flux_is_convex_on_moderate_ranges() {
        let f = FluxFunction::cubic();
        let lam = f.lambda(2.0).unwrap();
        // inf (1 + u/2) on [-1.2, 1.2] = 0.4
        assert!((lam - 0.4).abs() < 1e-3, "lambda {lam}");
        assert!(f.lambda(5.0).is_err());
    }

    #[test]
    fn invert_speed_closed_forms() {
        let b = FluxFunction::burgers();
        assert!((b.invert_speed(0.37, 2.0).unwrap() - 0.37).abs() < 1e-12);
        assert_eq!(b.invert_speed(0.0, 2.0).unwrap(), 0.0);
        let e = FluxFunction::exponential();
        // f' = e^u: inverse is log
        let u = e.invert_speed(1.5, 4.0).unwrap();
        assert!((u - 1.5f64.ln()).abs() < 1e-12);
        assert!(e.invert_speed(-0.5, 4.0).is_err());
    }

    #[test]
    fn conjugate_of_burgers_is_half_square() {
        let b = FluxFunction::burgers();
        for s in [-0.8, -0.1, 0.0, 0.3, 0.9] {
            assert!((b.conjugate(s, 2.0).unwrap() - 0.5 * s * s).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_matches_burgers() {
        let p = FluxFunction::polynomial(vec![0.0, 0.0, 0.5]).unwrap();
        for u in [-1.0, 0.2, 2.0] {
            assert!((p.eval(u) - 0.5 * u * u).abs() < 1e-15);
            assert!((p.d1(u) - u).abs() < 1e-15);
            assert!((p.d2(u) - 1.0).abs() < 1e-15);
            assert_eq!(p.d3(u), 0.0);
        }
    }
}
