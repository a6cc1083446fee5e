//! Minimal modulus of continuity and its generalized inverse, estimated
//! from uniform grid samples.
//!
//! Estimates are suprema over sampled pairs, hence certified lower
//! estimates of the true modulus; the inverse is correspondingly an upper
//! estimate. Every downstream bound that consumes these quantities is
//! re-verified a posteriori on dense probes, so the estimation direction
//! is safe.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Fixed seed for the stratified random pair scan (d >= 2).
const PAIR_SCAN_SEED: u64 = 0x6d6f_6475_6c75_73;
/// Dyadic levels in a [`ModulusProfile`].
const PROFILE_LEVELS: usize = 64;
/// Relative bisection tolerance for the inverse modulus.
const PSI_REL_TOL: f64 = 1e-9;

/// Vector-valued point evaluator.
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Axis-aligned box in R^d.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::domain("box corners must be nonempty and match"));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !a.is_finite() || !b.is_finite() || a > b {
                return Err(Error::domain(format!("invalid box side [{a}, {b}]")));
            }
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn unit(d: usize) -> Self {
        BoxDomain {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        BoxDomain::new(vec![a], vec![b])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    /// Euclidean diameter, computed analytically.
    pub fn diam(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(a, &v)| v >= self.lo[a] - tol && v <= self.hi[a] + tol)
    }
}

/// A continuous map on a box, represented by a deterministic evaluator
/// plus values on a uniform grid of `n` nodes per axis.
///
/// The stored samples agree with the evaluator at grid nodes exactly, and
/// multilinear interpolation reproduces them bit-exactly at the nodes.
#[derive(Clone)]
pub struct SampledFunction {
    domain: BoxDomain,
    n: usize,
    m: usize,
    samples: Vec<f64>,
    evaluator: VectorFn,
}

impl std::fmt::Debug for SampledFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampledFunction")
            .field("domain", &self.domain)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish()
    }
}

impl SampledFunction {
    /// Samples `eval` on the uniform grid with `n` nodes per axis.
    pub fn from_fn<F>(domain: BoxDomain, n: usize, m: usize, eval: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if n < 2 {
            return Err(Error::domain("grid resolution must be at least 2 per axis"));
        }
        if m == 0 {
            return Err(Error::domain("codomain dimension must be positive"));
        }
        let d = domain.dim();
        let total = n.checked_pow(d as u32).ok_or_else(|| {
            Error::domain(format!("grid of {n}^{d} nodes overflows"))
        })?;
        if total.saturating_mul(m) > 1 << 28 {
            return Err(Error::domain(format!(
                "grid of {n}^{d} nodes with m={m} exceeds the sample budget"
            )));
        }
        let mut samples = Vec::with_capacity(total * m);
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0f64; d];
        for _ in 0..total {
            for a in 0..d {
                x[a] = grid_coord(&domain, n, a, idx[a]);
            }
            let v = eval(&x);
            if v.len() != m {
                return Err(Error::domain(format!(
                    "evaluator returned {} components, expected {m}",
                    v.len()
                )));
            }
            samples.extend_from_slice(&v);
            // odometer increment, last axis fastest
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < n {
                    break;
                }
                idx[a] = 0;
            }
        }
        Ok(SampledFunction {
            domain,
            n,
            m,
            samples,
            evaluator: Arc::new(eval),
        })
    }

    /// Scalar 1-D convenience constructor.
    pub fn from_scalar_fn<F>(a: f64, b: f64, n: usize, eval: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        SampledFunction::from_fn(BoxDomain::interval(a, b)?, n, 1, move |x| vec![eval(x[0])])
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn codim(&self) -> usize {
        self.m
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Exact point query through the evaluator.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.evaluator)(x)
    }

    pub fn eval_scalar(&self, x: f64) -> f64 {
        (self.evaluator)(&[x])[0]
    }

    pub fn evaluator(&self) -> VectorFn {
        Arc::clone(&self.evaluator)
    }

    /// Stored sample at a grid multi-index (last axis fastest).
    pub fn sample(&self, idx: &[usize]) -> &[f64] {
        let flat = self.flat_index(idx);
        &self.samples[flat * self.m..(flat + 1) * self.m]
    }

    pub fn grid_node(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dim())
            .map(|a| grid_coord(&self.domain, self.n, a, idx[a]))
            .collect()
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for &i in idx {
            debug_assert!(i < self.n);
            flat = flat * self.n + i;
        }
        flat
    }

    /// Multilinear interpolation of the stored samples.
    pub fn eval_interp(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0f64; d];
        for a in 0..d {
            let side = self.domain.side(a);
            let t = if side == 0.0 {
                0.0
            } else {
                (x[a] - self.domain.lo[a]) / side * (self.n - 1) as f64
            };
            let mut i = t.floor() as isize;
            i = i.clamp(0, self.n as isize - 2);
            base[a] = i as usize;
            frac[a] = (t - i as f64).clamp(0.0, 1.0);
        }
        let mut out = vec![0.0f64; self.m];
        let corners = 1usize << d;
        let mut idx = vec![0usize; d];
        for c in 0..corners {
            let mut w = 1.0;
            for a in 0..d {
                let hi = (c >> a) & 1 == 1;
                idx[a] = base[a] + hi as usize;
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            let s = self.sample(&idx);
            for k in 0..self.m {
                out[k] += w * s[k];
            }
        }
        out
    }
}

fn grid_coord(domain: &BoxDomain, n: usize, axis: usize, i: usize) -> f64 {
    domain.lo[axis] + (domain.hi[axis] - domain.lo[axis]) * i as f64 / (n - 1) as f64
}

/// Tabulated modulus estimates on a dyadic grid of 64 levels.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ModulusProfile {
    pub deltas: Vec<f64>,
    pub omegas: Vec<f64>,
    pub max_oscillation: f64,
}

impl ModulusProfile {
    pub fn build(f: &SampledFunction) -> Result<Self> {
        let diam = f.domain().diam();
        let mut deltas = vec![0.0];
        for j in (0..PROFILE_LEVELS - 1).rev() {
            deltas.push(diam * (0.5f64).powi(j as i32));
        }
        let omegas = deltas
            .iter()
            .map(|&d| estimate_modulus(f, d))
            .collect::<Result<Vec<_>>>()?;
        let max_oscillation = *omegas.last().unwrap();
        Ok(ModulusProfile {
            deltas,
            omegas,
            max_oscillation,
        })
    }

    /// Largest tabulated omega at a level <= delta (a lower estimate).
    pub fn omega_floor(&self, delta: f64) -> f64 {
        match self
            .deltas
            .iter()
            .rposition(|&d| d <= delta)
        {
            Some(i) => self.omegas[i],
            None => 0.0,
        }
    }
}

/// Supremum of `|f(y) - f(x)|` over sampled pairs at distance `<= delta`.
///
/// Exact over the sample set in 1-D scalar cases (monotone-deque window
/// scan); for d >= 2 the scan is restricted to axis and diagonal offsets
/// plus a seeded stratified pair sample, preserving a lower estimate.
pub fn estimate_modulus(f: &SampledFunction, delta: f64) -> Result<f64> {
    let diam = f.domain().diam();
    if !(delta >= 0.0) {
        return Err(Error::domain(format!("delta = {delta} is negative")));
    }
    if delta > diam * (1.0 + 1e-12) + 1e-300 {
        return Err(Error::domain(format!(
            "delta = {delta} exceeds the domain diameter {diam}"
        )));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    match (f.dim(), f.codim()) {
        (1, 1) => Ok(window_scan_1d(f, delta)),
        (1, _) => Ok(offset_scan_1d_vector(f, delta)),
        _ => Ok(offset_scan_nd(f, delta)),
    }
}

/// 1-D scalar scan: max over windows of (max - min), via monotone deques.
fn window_scan_1d(f: &SampledFunction, delta: f64) -> f64 {
    let n = f.n;
    let step = f.domain.side(0) / (n - 1) as f64;
    let khop = if step == 0.0 {
        n - 1
    } else {
        ((delta / step) * (1.0 + 1e-12) + 1e-12).floor() as usize
    };
    let khop = khop.min(n - 1);
    if khop == 0 {
        return 0.0;
    }
    let v = &f.samples;
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best = 0.0f64;
    for j in 0..n {
        while let Some(&b) = maxq.back() {
            if v[b] <= v[j] {
                maxq.pop_back();
            } else {
                break;
            }
        }
        maxq.push_back(j);
        while let Some(&b) = minq.back() {
            if v[b] >= v[j] {
                minq.pop_back();
            } else {
                break;
            }
        }
        minq.push_back(j);
        let lo = j.saturating_sub(khop);
        while *maxq.front().unwrap() < lo {
            maxq.pop_front();
        }
        while *minq.front().unwrap() < lo {
            minq.pop_front();
        }
        best = best.max(v[*maxq.front().unwrap()] - v[*minq.front().unwrap()]);
    }
    best
}

fn pair_norm(f: &SampledFunction, i: usize, j: usize) -> f64 {
    let m = f.m;
    let a = &f.samples[i * m..(i + 1) * m];
    let b = &f.samples[j * m..(j + 1) * m];
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Offsets to scan for a maximum hop count: all small ones, a geometric
/// ladder, and a seeded random fill.
fn offset_ladder(khop: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut offs: Vec<usize> = (1..=khop.min(64)).collect();
    let mut o = 64usize;
    while o < khop {
        o = (o as f64 * 1.15).ceil() as usize;
        offs.push(o.min(khop));
    }
    for _ in 0..128 {
        offs.push(rng.gen_range(1..=khop));
    }
    offs.sort_unstable();
    offs.dedup();
    offs
}

fn offset_scan_1d_vector(f: &SampledFunction, delta: f64) -> f64 {
    let n = f.n;
    let step = f.domain.side(0) / (n - 1) as f64;
    let khop = if step == 0.0 {
        n - 1
    } else {
        ((delta / step) * (1.0 + 1e-12) + 1e-12).floor() as usize
    }
    .min(n - 1);
    if khop == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SCAN_SEED);
    let mut best = 0.0f64;
    for o in offset_ladder(khop, &mut rng) {
        for i in 0..n - o {
            best = best.max(pair_norm(f, i, i + o));
        }
    }
    best
}

fn offset_scan_nd(f: &SampledFunction, delta: f64) -> f64 {
    let d = f.dim();
    let n = f.n;
    let steps: Vec<f64> = (0..d).map(|a| f.domain.side(a) / (n - 1) as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SCAN_SEED);
    let mut best = 0.0f64;

    // directions: {-1,0,1}^d \ {0}, one representative per antipodal pair
    let mut dirs: Vec<Vec<i64>> = Vec::new();
    let three = 3usize.pow(d as u32);
    for code in 0..three {
        let mut c = code;
        let mut dir = vec![0i64; d];
        for a in 0..d {
            dir[a] = (c % 3) as i64 - 1;
            c /= 3;
        }
        if dir.iter().all(|&x| x == 0) {
            continue;
        }
        if dir.iter().find(|&&x| x != 0).copied().unwrap_or(0) < 0 {
            continue; // antipodal representative
        }
        dirs.push(dir);
    }

    let total = n.pow(d as u32);
    let unravel = |mut flat: usize| -> Vec<usize> {
        let mut idx = vec![0usize; d];
        for a in (0..d).rev() {
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    };
    let ravel = |idx: &[usize]| -> usize { idx.iter().fold(0usize, |acc, &i| acc * n + i) };

    for dir in &dirs {
        let dlen = dir
            .iter()
            .zip(&steps)
            .map(|(&c, &s)| (c as f64 * s).powi(2))
            .sum::<f64>()
            .sqrt();
        if dlen == 0.0 {
            continue;
        }
        let khop = ((delta / dlen) * (1.0 + 1e-12) + 1e-12).floor() as usize;
        if khop == 0 {
            continue;
        }
        for o in offset_ladder(khop.min(n - 1), &mut rng) {
            for flat in 0..total {
                let idx = unravel(flat);
                let mut ok = true;
                let mut jdx = vec![0usize; d];
                for a in 0..d {
                    let j = idx[a] as i64 + dir[a] * o as i64;
                    if j < 0 || j >= n as i64 {
                        ok = false;
                        break;
                    }
                    jdx[a] = j as usize;
                }
                if ok {
                    best = best.max(pair_norm(f, flat, ravel(&jdx)));
                }
            }
        }
    }

    // stratified random pairs within distance delta
    for _ in 0..4096 {
        let i: Vec<usize> = (0..d).map(|_| rng.gen_range(0..n)).collect();
        let mut j = vec![0usize; d];
        let mut ok = true;
        for a in 0..d {
            let span = if steps[a] == 0.0 {
                0
            } else {
                (delta / steps[a]).floor() as i64
            };
            let off = if span == 0 { 0 } else { rng.gen_range(-span..=span) };
            let t = i[a] as i64 + off;
            if t < 0 || t >= n as i64 {
                ok = false;
                break;
            }
            j[a] = t as usize;
        }
        if !ok {
            continue;
        }
        let dist2: f64 = (0..d)
            .map(|a| ((i[a] as f64 - j[a] as f64) * steps[a]).powi(2))
            .sum();
        if dist2.sqrt() <= delta {
            best = best.max(pair_norm(f, ravel(&i), ravel(&j)));
        }
    }
    best
}

/// Generalized inverse `Psi_f(s) = sup { delta >= 0 : omega_f(delta) <= s }`.
///
/// Returns `+inf` for `s >= M_f` (in particular for constant functions);
/// otherwise bisects the monotone sampled estimate to relative tolerance
/// `1e-9` and returns the certified inner point (`omega(result) <= s`).
pub fn inverse_modulus(f: &SampledFunction, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::domain(format!("s = {s} is negative")));
    }
    let diam = f.domain().diam();
    let max_osc = estimate_modulus(f, diam)?;
    if s >= max_osc {
        return Ok(f64::INFINITY);
    }
    let mut lo = 0.0f64;
    let mut hi = diam;
    while hi - lo > PSI_REL_TOL * diam {
        let mid = 0.5 * (lo + hi);
        if estimate_modulus(f, mid)? <= s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Closed-form lower bound `(s / ||f||)^{1/alpha}` on `Psi_f(s)` for
/// Hoelder functions with the given norm and exponent.
pub fn holder_psi_lower_bound(holder_norm: f64, alpha: f64, s: f64) -> Result<f64> {
    if !(holder_norm > 0.0) {
        return Err(Error::domain("holder_norm must be positive"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("alpha must lie in (0, 1]"));
    }
    if !(s > 0.0) {
        return Err(Error::domain("s must be positive"));
    }
    Ok((s / holder_norm).powf(1.0 / alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear(l: f64) -> SampledFunction {
        SampledFunction::from_scalar_fn(0.0, 1.0, 1001, move |x| l * x).unwrap()
    }

    #[test]
    fn modulus_of_linear_function_is_l_delta() {
        let f = linear(2.0);
        let w = estimate_modulus(&f, 0.5).unwrap();
        assert!((w - 1.0).abs() < 1e-12, "got {w}");
    }

    #[test]
    fn modulus_of_constant_is_zero() {
        let f = SampledFunction::from_scalar_fn(0.0, 1.0, 64, |_| 3.25).unwrap();
        for delta in [0.0, 0.1, 0.5, 1.0] {
            assert_eq!(estimate_modulus(&f, delta).unwrap(), 0.0);
        }
    }

    #[test]
    fn modulus_of_sqrt_matches_closed_form() {
        let f = SampledFunction::from_scalar_fn(0.0, 1.0, 10_001, |x| x.sqrt()).unwrap();
        let w = estimate_modulus(&f, 0.25).unwrap();
        // omega(delta) = sqrt(delta) for sqrt on [0,1]
        assert!((w - 0.5).abs() < 1e-3, "got {w}");
    }

    #[test]
    fn modulus_rejects_bad_delta() {
        let f = linear(1.0);
        assert!(estimate_modulus(&f, -0.1).is_err());
        assert!(estimate_modulus(&f, 1.5).is_err());
    }

    #[test]
    fn inverse_of_constant_is_infinite() {
        let f = SampledFunction::from_scalar_fn(0.0, 1.0, 64, |_| 1.0).unwrap();
        assert_eq!(inverse_modulus(&f, 0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn inverse_of_identity_is_identity() {
        let f = linear(1.0);
        let psi = inverse_modulus(&f, 0.3).unwrap();
        assert!((psi - 0.3).abs() < 2e-3, "got {psi}");
    }

    #[test]
    fn inverse_of_sqrt_is_square() {
        let f = SampledFunction::from_scalar_fn(0.0, 1.0, 10_001, |x| x.sqrt()).unwrap();
        let psi = inverse_modulus(&f, 0.5).unwrap();
        assert!((psi - 0.25).abs() < 1e-3, "got {psi}");
    }

    #[test]
    fn holder_bound_examples() {
        assert!((holder_psi_lower_bound(1.0, 1.0, 0.1).unwrap() - 0.1).abs() < 1e-15);
        assert!((holder_psi_lower_bound(2.0, 0.5, 0.5).unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn holder_bound_below_sampled_inverse() {
        // f(x) = 2 sqrt(x): Hoelder-1/2 norm 2
        let f = SampledFunction::from_scalar_fn(0.0, 1.0, 20_001, |x| 2.0 * x.sqrt()).unwrap();
        for s in [0.1, 0.3, 0.7, 1.2] {
            let psi = inverse_modulus(&f, s).unwrap();
            let lb = holder_psi_lower_bound(2.0, 0.5, s).unwrap();
            assert!(
                psi >= lb - 1e-6,
                "psi {psi} below Hoelder floor {lb} at s={s}"
            );
        }
    }

    #[test]
    fn galois_pairing_on_probes() {
        let f = SampledFunction::from_scalar_fn(0.0, 1.0, 4001, |x| (6.0 * x).sin()).unwrap();
        let max_osc = estimate_modulus(&f, 1.0).unwrap();
        for k in 1..10 {
            let s = max_osc * k as f64 / 10.0;
            let psi = inverse_modulus(&f, s).unwrap();
            assert!(estimate_modulus(&f, psi).unwrap() <= s + 1e-12);
        }
    }

    #[test]
    fn superadditivity_within_grid_slack() {
        let f = SampledFunction::from_scalar_fn(0.0, 1.0, 4001, |x| (6.0 * x).sin()).unwrap();
        let max_osc = estimate_modulus(&f, 1.0).unwrap();
        let step = 1.0 / 4000.0;
        let slack = 2.0 * step + 2.0 * 1e-9;
        for (a, b) in [(0.1, 0.2), (0.3, 0.4), (0.2, 0.5)] {
            let (s1, s2) = (a * max_osc, b * max_osc);
            if s1 + s2 >= max_osc {
                continue;
            }
            let lhs = inverse_modulus(&f, s1 + s2).unwrap();
            let rhs = inverse_modulus(&f, s1).unwrap() + inverse_modulus(&f, s2).unwrap();
            assert!(lhs >= rhs - slack, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn samples_agree_with_evaluator_bit_exactly() {
        let f = SampledFunction::from_fn(BoxDomain::unit(2), 17, 2, |x| {
            vec![x[0] * x[1] + 0.125, x[0] - 3.0 * x[1]]
        })
        .unwrap();
        for i in 0..17 {
            for j in 0..17 {
                let node = f.grid_node(&[i, j]);
                assert_eq!(f.sample(&[i, j]), f.eval(&node).as_slice());
                assert_eq!(f.eval_interp(&node), f.eval(&node));
            }
        }
    }

    #[test]
    fn degenerate_axis_treated_as_constant() {
        let dom = BoxDomain::new(vec![0.0, 0.5], vec![1.0, 0.5]).unwrap();
        let f = SampledFunction::from_fn(dom, 33, 1, |x| vec![x[1]]).unwrap();
        assert_eq!(estimate_modulus(&f, 0.7).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn modulus_is_monotone(d1 in 0.0f64..1.0, d2 in 0.0f64..1.0, seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs: Vec<(f64, f64, f64)> = (0..4)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..6.0), rng.gen_range(0.0..6.28)))
                .collect();
            let f = SampledFunction::from_scalar_fn(0.0, 1.0, 801, move |x| {
                coeffs.iter().map(|(a, b, c)| a * (b * x + c).sin()).sum()
            }).unwrap();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(
                estimate_modulus(&f, lo).unwrap() <= estimate_modulus(&f, hi).unwrap()
            );
        }
    }
}
