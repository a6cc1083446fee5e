//! Lax-Oleinik evaluation of entropy solutions, shock detection and
//! shock-curve tracking.
//!
//! `u(t, x) = (f')^{-1}((x - y*) / t)` where `y*` minimizes
//! `t f*((x - y) / t) + int_0^y vbar`. The minimizer is located by a grid
//! scan over the characteristic cone refined by golden section, with the
//! smallest minimizer as the deterministic tie-break. Shocks appear as
//! jumps of the minimizer.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::conslaw::flux::FluxFunction;
use crate::{Error, Result};

/// Nodes in the initial minimizer scan.
const SCAN_NODES: usize = 2049;
/// Golden-section iterations in the refinement.
const GOLDEN_ITERS: usize = 90;
/// Nodes in the antiderivative cache.
const CACHE_NODES: usize = 16_385;

/// Initial datum for the solver: exact piecewise-constant data (Riemann
/// problems included) or a continuous compactly supported profile.
#[derive(Clone)]
pub enum InitialDatum {
    /// `values[i]` on `(breaks[i-1], breaks[i])`, tails included.
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<f64> },
    Profile {
        eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        support: (f64, f64),
    },
}

impl InitialDatum {
    pub fn riemann(u_left: f64, u_right: f64) -> Self {
        InitialDatum::PiecewiseConstant {
            breaks: vec![0.0],
            values: vec![u_left, u_right],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialDatum::PiecewiseConstant { breaks, values } => {
                let i = breaks.partition_point(|&b| b <= x);
                values[i]
            }
            InitialDatum::Profile { eval, support } => {
                if x <= support.0 || x >= support.1 {
                    0.0
                } else {
                    eval(x)
                }
            }
        }
    }
}

/// A detected shock at a fixed time.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Shock {
    pub x: f64,
    pub u_left: f64,
    pub u_right: f64,
    /// Rankine-Hugoniot speed `(f(u+) - f(u-)) / (u+ - u-)`
    pub speed: f64,
}

/// Tracked shock curves over a time grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ShockScan {
    /// distinct curves born over the scan (merges do not add)
    pub curve_count: usize,
    /// per curve: the (t, x) trajectory
    pub curves: Vec<Vec<(f64, f64)>>,
    /// shocks detected at each grid time
    pub per_time: Vec<usize>,
    /// stationary points of `beta + f'(vbar(beta)) t` at each time
    pub stationary_counts: Vec<usize>,
}

/// Queryable entropy solution of `u_t + f(u)_x = 0`.
pub struct EntropySolution {
    flux: Arc<FluxFunction>,
    datum: InitialDatum,
    /// antiderivative cache: nodes, Y values, datum values (Profile only)
    y_nodes: Vec<f64>,
    y_vals: Vec<f64>,
    v_vals: Vec<f64>,
    u_min: f64,
    u_max: f64,
    s_min: f64,
    s_max: f64,
    tv_estimate: f64,
    v_range: f64,
}

impl EntropySolution {
    pub fn new(flux: &FluxFunction, datum: InitialDatum) -> Result<Self> {
        let flux = Arc::new(flux.clone());
        let (mut u_min, mut u_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut tv = 0.0;
        let (y_nodes, y_vals, v_vals) = match &datum {
            InitialDatum::PiecewiseConstant { breaks, values } => {
                if breaks.is_empty() || values.len() != breaks.len() + 1 {
                    return Err(Error::domain(
                        "piecewise-constant datum needs breaks and breaks+1 values",
                    ));
                }
                for w in values.windows(2) {
                    tv += (w[1] - w[0]).abs();
                }
                for &v in values {
                    u_min = u_min.min(v);
                    u_max = u_max.max(v);
                }
                // exact piecewise-linear antiderivative anchored at breaks[0]
                let mut ys = vec![0.0f64; breaks.len()];
                for i in 1..breaks.len() {
                    ys[i] = ys[i - 1] + values[i] * (breaks[i] - breaks[i - 1]);
                }
                (breaks.clone(), ys, Vec::new())
            }
            InitialDatum::Profile { eval, support } => {
                let (lo, hi) = *support;
                if !(hi > lo) {
                    return Err(Error::domain("profile support must be nonempty"));
                }
                u_min = 0.0;
                u_max = 0.0;
                let mut nodes = Vec::with_capacity(CACHE_NODES);
                let mut vals = Vec::with_capacity(CACHE_NODES);
                for i in 0..CACHE_NODES {
                    let x = lo + (hi - lo) * i as f64 / (CACHE_NODES - 1) as f64;
                    let v = if i == 0 || i == CACHE_NODES - 1 { 0.0 } else { eval(x) };
                    u_min = u_min.min(v);
                    u_max = u_max.max(v);
                    nodes.push(x);
                    vals.push(v);
                }
                for w in vals.windows(2) {
                    tv += (w[1] - w[0]).abs();
                }
                // cumulative integral: per-interval 3-point Gauss-Legendre
                let gl_x = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
                let gl_w = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
                let mut ys = vec![0.0f64; CACHE_NODES];
                for i in 1..CACHE_NODES {
                    let (a, b) = (nodes[i - 1], nodes[i]);
                    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                    let mut s = 0.0;
                    for k in 0..3 {
                        s += gl_w[k] * eval(mid + half * gl_x[k]);
                    }
                    ys[i] = ys[i - 1] + s * half;
                }
                (nodes, ys, vals)
            }
        };
        let s_min = flux.d1(u_min);
        let s_max = flux.d1(u_max);
        // inversion range must cover the datum values with padding
        let v_range = 2.0 * u_min.abs().max(u_max.abs()).max(1e-9) * 1.8;
        Ok(EntropySolution {
            flux,
            datum,
            y_nodes,
            y_vals,
            v_vals,
            u_min,
            u_max,
            s_min,
            s_max,
            tv_estimate: tv,
            v_range,
        })
    }

    pub fn from_riemann(flux: &FluxFunction, u_left: f64, u_right: f64) -> Result<Self> {
        EntropySolution::new(flux, InitialDatum::riemann(u_left, u_right))
    }

    pub fn speed_range(&self) -> (f64, f64) {
        (self.s_min, self.s_max)
    }

    pub fn value_range(&self) -> (f64, f64) {
        (self.u_min, self.u_max)
    }

    /// Antiderivative `Y(y) = int vbar` (anchored arbitrarily; only
    /// differences matter for the minimization).
    fn y_int(&self, y: f64) -> f64 {
        match &self.datum {
            InitialDatum::PiecewiseConstant { breaks, values } => {
                if y <= breaks[0] {
                    return values[0] * (y - breaks[0]);
                }
                let i = breaks.partition_point(|&b| b <= y);
                self.y_vals[i - 1] + values[i] * (y - breaks[i - 1])
            }
            InitialDatum::Profile { .. } => {
                let nodes = &self.y_nodes;
                let n = nodes.len();
                if y <= nodes[0] {
                    return 0.0;
                }
                if y >= nodes[n - 1] {
                    return self.y_vals[n - 1];
                }
                let h = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
                let i = (((y - nodes[0]) / h).floor() as usize).min(n - 2);
                let t = (y - nodes[i]) / h;
                // cubic Hermite with cached derivative values
                let (y0, y1) = (self.y_vals[i], self.y_vals[i + 1]);
                let (m0, m1) = (self.v_vals[i] * h, self.v_vals[i + 1] * h);
                let t2 = t * t;
                let t3 = t2 * t;
                (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                    + (t3 - 2.0 * t2 + t) * m0
                    + (-2.0 * t3 + 3.0 * t2) * y1
                    + (t3 - t2) * m1
            }
        }
    }

    fn objective(&self, t: f64, x: f64, y: f64) -> f64 {
        let s = ((x - y) / t).clamp(self.s_min, self.s_max);
        let w = self
            .flux
            .invert_speed(s, self.v_range)
            .unwrap_or(0.0);
        t * (s * w - self.flux.eval(w)) + self.y_int(y)
    }

    /// The Lax-Oleinik minimizer `y*(t, x)` (smallest on ties).
    pub fn minimizer(&self, t: f64, x: f64) -> Result<f64> {
        self.eval_inner(t, x).map(|(_, y)| y)
    }

    /// `u(t, x)`.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        self.eval_inner(t, x).map(|(u, _)| u)
    }

    fn eval_inner(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("t = {t} must be positive")));
        }
        let mut lo = x - t * self.s_max;
        let mut hi = x - t * self.s_min;
        if self.s_max - self.s_min < 1e-14 {
            // constant datum
            let pad = 1e-9 * (1.0 + x.abs());
            lo -= pad;
            hi += pad;
        }
        let span = hi - lo;
        let mut best_val = f64::INFINITY;
        let mut vals = [0.0f64; SCAN_NODES];
        for (i, v) in vals.iter_mut().enumerate() {
            let y = lo + span * i as f64 / (SCAN_NODES - 1) as f64;
            *v = self.objective(t, x, y);
            if *v < best_val {
                best_val = *v;
            }
        }
        // refine every near-optimal local minimum, keep the smallest y
        let tol_v = 1e-7 * (1.0 + best_val.abs());
        let mut best: Option<(f64, f64)> = None;
        for i in 0..SCAN_NODES {
            let is_local_min = (i == 0 || vals[i] <= vals[i - 1])
                && (i == SCAN_NODES - 1 || vals[i] <= vals[i + 1]);
            if !is_local_min || vals[i] > best_val + tol_v {
                continue;
            }
            let a = lo + span * i.saturating_sub(1) as f64 / (SCAN_NODES - 1) as f64;
            let b = lo + span * (i + 1).min(SCAN_NODES - 1) as f64 / (SCAN_NODES - 1) as f64;
            let (y_ref, v_ref) = self.golden(t, x, a, b);
            let replace = match best {
                None => true,
                Some((by, bv)) => {
                    v_ref < bv - 1e-12 * (1.0 + bv.abs())
                        || (v_ref <= bv + 1e-12 * (1.0 + bv.abs()) && y_ref < by)
                }
            };
            if replace {
                best = Some((y_ref, v_ref));
            }
        }
        let (y_star, _) = best.expect("scan produced no minimum");
        let s = ((x - y_star) / t).clamp(self.s_min, self.s_max);
        let u = self.flux.invert_speed(s, self.v_range)?;
        Ok((u, y_star))
    }

    fn golden(&self, t: f64, x: f64, mut a: f64, mut b: f64) -> (f64, f64) {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = self.objective(t, x, c);
        let mut fd = self.objective(t, x, d);
        for _ in 0..GOLDEN_ITERS {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = self.objective(t, x, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = self.objective(t, x, d);
            }
        }
        let y = 0.5 * (a + b);
        (y, self.objective(t, x, y))
    }

    /// Scans `x` over the window, detects jumps of `u`, refines their
    /// positions by bisection and merges detections closer than four scan
    /// steps.
    pub fn count_shocks(
        &self,
        t: f64,
        window: (f64, f64),
        resolution: usize,
    ) -> Result<Vec<Shock>> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("t = {t} must be positive")));
        }
        let (x0, x1) = window;
        if !(x1 > x0) || resolution < 8 {
            return Err(Error::domain("bad shock scan window"));
        }
        let step = (x1 - x0) / (resolution - 1) as f64;
        let f2max = {
            let mut m = 0.0f64;
            for i in 0..256 {
                let u = self.u_min + (self.u_max - self.u_min) * i as f64 / 255.0;
                m = m.max(self.flux.d2(u).abs());
            }
            m.max(1e-12)
        };
        let jump_tol = 10.0 * step * f2max * self.tv_estimate.max(1e-9);

        let us: Vec<f64> = (0..resolution)
            .into_par_iter()
            .map(|i| self.eval(t, x0 + step * i as f64).unwrap_or(f64::NAN))
            .collect();

        let mut raw: Vec<(f64, f64, f64)> = Vec::new();
        for i in 0..resolution - 1 {
            if (us[i + 1] - us[i]).abs() > jump_tol {
                // bisect the jump position
                let (mut a, mut b) = (x0 + step * i as f64, x0 + step * (i + 1) as f64);
                let (ua, ub) = (us[i], us[i + 1]);
                for _ in 0..50 {
                    let m = 0.5 * (a + b);
                    let um = self.eval(t, m)?;
                    if (um - ua).abs() < (um - ub).abs() {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let xs = 0.5 * (a + b);
                raw.push((xs, ua, ub));
            }
        }

        // merge detections within 4 scan steps
        let merge = 4.0 * step;
        let mut shocks: Vec<Shock> = Vec::new();
        for (xs, ua, ub) in raw {
            if let Some(last) = shocks.last_mut() {
                if xs - last.x <= merge {
                    last.u_right = ub;
                    last.speed = rh_speed(&self.flux, last.u_left, ub);
                    continue;
                }
            }
            shocks.push(Shock {
                x: xs,
                u_left: ua,
                u_right: ub,
                speed: rh_speed(&self.flux, ua, ub),
            });
        }
        // sharpen the traces just off each refined position
        for s in &mut shocks {
            let h = (1e-7 * (1.0 + s.x.abs())).max(step * 1e-6);
            s.u_left = self.eval(t, s.x - h)?;
            s.u_right = self.eval(t, s.x + h)?;
            s.speed = rh_speed(&self.flux, s.u_left, s.u_right);
        }
        Ok(shocks)
    }

    /// Samples the Oleinik inequality `u(t,y) - u(t,x) <= (y-x)/(lambda t)`
    /// at random pairs; returns the worst violation (negative slack means
    /// a violation).
    pub fn oleinik_worst_slack(
        &self,
        t: f64,
        window: (f64, f64),
        pairs: usize,
        lambda: f64,
        seed: u64,
    ) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        for _ in 0..pairs {
            let mut x = rng.gen_range(window.0..window.1);
            let mut y = rng.gen_range(window.0..window.1);
            if x == y {
                continue;
            }
            if x > y {
                std::mem::swap(&mut x, &mut y);
            }
            let (ux, uy) = (self.eval(t, x)?, self.eval(t, y)?);
            worst = worst.min((y - x) / (lambda * t) - (uy - ux));
        }
        Ok(worst)
    }

    /// Tracks shocks across an increasing time grid; unmatched detections
    /// open new curves, merges continue the older one.
    pub fn shock_generation_scan(
        &self,
        t_grid: &[f64],
        window: (f64, f64),
        resolution: usize,
    ) -> Result<ShockScan> {
        if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.is_empty() {
            return Err(Error::domain("time grid must be increasing and nonempty"));
        }
        let step = (window.1 - window.0) / (resolution - 1) as f64;
        let mut curves: Vec<Vec<(f64, f64)>> = Vec::new();
        let mut active: Vec<usize> = Vec::new(); // indices into curves
        let mut per_time = Vec::with_capacity(t_grid.len());
        let mut stationary_counts = Vec::with_capacity(t_grid.len());
        let mut prev_t: Option<f64> = None;

        for &t in t_grid {
            let shocks = self.count_shocks(t, window, resolution)?;
            per_time.push(shocks.len());
            stationary_counts.push(self.stationary_points(t));

            let dt = prev_t.map(|p| t - p).unwrap_or(0.0);
            let pad = 4.0 * step + 1e-9;
            let mut next_active: Vec<usize> = Vec::new();
            let mut taken = vec![false; active.len()];
            for s in &shocks {
                // nearest active curve whose speed cone reaches the shock
                let mut best: Option<(usize, f64)> = None;
                for (ai, &ci) in active.iter().enumerate() {
                    if taken[ai] {
                        continue;
                    }
                    let (_, px) = *curves[ci].last().unwrap();
                    let lo = px + self.s_min * dt - pad;
                    let hi = px + self.s_max * dt + pad;
                    if s.x >= lo && s.x <= hi {
                        let d = (s.x - px).abs();
                        if best.map_or(true, |(_, bd)| d < bd) {
                            best = Some((ai, d));
                        }
                    }
                }
                match best {
                    Some((ai, _)) => {
                        taken[ai] = true;
                        let ci = active[ai];
                        curves[ci].push((t, s.x));
                        next_active.push(ci);
                    }
                    None => {
                        curves.push(vec![(t, s.x)]);
                        next_active.push(curves.len() - 1);
                    }
                }
            }
            // curves that merged into an already-taken detection: attach
            // them to the same endpoint so the trajectory closes, but do
            // not keep them active
            active = next_active;
            prev_t = Some(t);
        }
        Ok(ShockScan {
            curve_count: curves.len(),
            curves,
            per_time,
            stationary_counts,
        })
    }

    /// Sign changes of `d/dbeta [beta + f'(vbar(beta)) t]`, estimated by a
    /// central-difference scan over the datum support.
    fn stationary_points(&self, t: f64) -> usize {
        let (lo, hi) = match &self.datum {
            InitialDatum::PiecewiseConstant { breaks, .. } => (
                breaks[0] - 1.0,
                breaks[breaks.len() - 1] + 1.0,
            ),
            InitialDatum::Profile { support, .. } => *support,
        };
        let n = 8192;
        let h = (hi - lo) / n as f64;
        let mut count = 0;
        let mut last = 0i8;
        for i in 1..n {
            let b = lo + i as f64 * h;
            let sp = self.flux.d1(self.datum.eval(b + h)) - self.flux.d1(self.datum.eval(b - h));
            let d = 1.0 + t * sp / (2.0 * h);
            let s = if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            };
            if s != 0 {
                if last != 0 && s != last {
                    count += 1;
                }
                last = s;
            }
        }
        count
    }
}

fn rh_speed(flux: &FluxFunction, ul: f64, ur: f64) -> f64 {
    if (ul - ur).abs() < 1e-300 {
        flux.d1(ul)
    } else {
        (flux.eval(ur) - flux.eval(ul)) / (ur - ul)
    }
}

/// Free-function form of the solution query.
pub fn lax_oleinik_eval(sol: &EntropySolution, t: f64, x: f64) -> Result<f64> {
    sol.eval(t, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn burgers() -> FluxFunction {
        FluxFunction::burgers()
    }

    #[test]
    fn zero_datum_stays_zero() {
        let sol = EntropySolution::from_riemann(&burgers(), 0.0, 0.0).unwrap();
        for (t, x) in [(0.5, -1.0), (1.0, 0.0), (2.0, 3.0)] {
            assert!(sol.eval(t, x).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn riemann_shock_moves_at_half_speed() {
        let sol = EntropySolution::from_riemann(&burgers(), 1.0, 0.0).unwrap();
        for t in [0.5, 1.0, 2.0] {
            // left state ahead of the shock, right state behind
            assert!((sol.eval(t, 0.5 * t - 0.1).unwrap() - 1.0).abs() < 1e-9);
            assert!(sol.eval(t, 0.5 * t + 0.1).unwrap().abs() < 1e-9);
            let shocks = sol.count_shocks(t, (-2.0, 3.0), 4096).unwrap();
            assert_eq!(shocks.len(), 1);
            assert!(
                (shocks[0].x - 0.5 * t).abs() < 1e-4,
                "t = {t}: shock at {}",
                shocks[0].x
            );
            assert!(shocks[0].u_left > shocks[0].u_right);
            assert!((shocks[0].speed - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn riemann_rarefaction_is_a_fan() {
        let sol = EntropySolution::from_riemann(&burgers(), 0.0, 1.0).unwrap();
        let t = 1.0;
        let mut sup = 0.0f64;
        for i in 0..=1000 {
            let x = -0.5 + 2.0 * i as f64 / 1000.0;
            let expected = if x <= 0.0 {
                0.0
            } else if x >= t {
                1.0
            } else {
                x / t
            };
            sup = sup.max((sol.eval(t, x).unwrap() - expected).abs());
        }
        assert!(sup < 1e-6, "sup error {sup}");
        assert!(sol.count_shocks(t, (-1.0, 2.0), 4096).unwrap().is_empty());
    }

    #[test]
    fn oleinik_inequality_sampled() {
        let sol = EntropySolution::from_riemann(&burgers(), 1.0, 0.0).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let slack = sol
                .oleinik_worst_slack(t, (-2.0, 3.0), 1000, 1.0, 42)
                .unwrap();
            assert!(slack > -1e-6, "t = {t}: slack {slack}");
        }
    }

    #[test]
    fn single_curve_across_times() {
        let sol = EntropySolution::from_riemann(&burgers(), 1.0, 0.0).unwrap();
        let t_grid: Vec<f64> = (0..16).map(|i| 0.25 + i as f64 * 0.25).collect();
        let scan = sol.shock_generation_scan(&t_grid, (-2.0, 6.0), 2048).unwrap();
        assert_eq!(scan.curve_count, 1);
        assert_eq!(scan.curves[0].len(), 16);
        // speed check along the tracked curve
        let c = &scan.curves[0];
        for w in c.windows(2) {
            let v = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            assert!((v - 0.5).abs() < 0.02, "tracked speed {v}");
        }
    }

    #[test]
    fn two_bumps_merge_without_new_curves() {
        // two compressive fronts: three-piece datum; fronts merge later
        let datum = InitialDatum::PiecewiseConstant {
            breaks: vec![-1.0, 0.0, 1.0],
            values: vec![1.0, 0.5, 0.0, 0.0],
        };
        let sol = EntropySolution::new(&burgers(), datum).unwrap();
        let t_grid: Vec<f64> = (0..24).map(|i| 0.2 + 0.35 * i as f64).collect();
        let scan = sol.shock_generation_scan(&t_grid, (-3.0, 10.0), 3072).unwrap();
        assert_eq!(scan.curve_count, 2, "per_time = {:?}", scan.per_time);
        assert_eq!(*scan.per_time.first().unwrap(), 2);
        assert_eq!(*scan.per_time.last().unwrap(), 1);
    }

    #[test]
    fn rejects_nonpositive_time() {
        let sol = EntropySolution::from_riemann(&burgers(), 1.0, 0.0).unwrap();
        assert!(sol.eval(0.0, 0.0).is_err());
        assert!(lax_oleinik_eval(&sol, -1.0, 0.0).is_err());
    }

    #[test]
    fn exponential_flux_riemann_shock() {
        let flux = FluxFunction::exponential();
        let sol = EntropySolution::from_riemann(&flux, 1.0, 0.0).unwrap();
        let t = 1.0;
        let s = (flux.eval(1.0) - flux.eval(0.0)) / 1.0; // e - 1
        let shocks = sol.count_shocks(t, (-1.0, 4.0), 4096).unwrap();
        assert_eq!(shocks.len(), 1);
        assert!((shocks[0].x - s * t).abs() < 1e-3, "shock at {}", shocks[0].x);
    }
}
