//! The speed-profile pipeline: thin the zero set of `h = [f'(u_delta)]''`
//! within a sup budget, rebuild a C2 speed profile `F` by double
//! integration plus a cubic tail and a quintic patch, and invert through
//! `f'` to obtain the perturbed datum.
//!
//! The thinned function is kept as an exact piece list (linear pieces on
//! the marked cells, the analytic `h_delta` elsewhere, quadratic collar
//! ramps guarding the support), so every integral the reconstruction
//! needs has a closed form.

use std::sync::Arc;

use crate::conslaw::datum::{mollify, BVDatum, SmoothDatum};
use crate::conslaw::flux::FluxFunction;
use crate::moduli::{inverse_modulus, SampledFunction};
use crate::perturb::{perturb, GraphManifold};
use crate::{Error, Result};

/// Sample resolution for speed-profile scans.
const SPEED_SAMPLES: usize = 32_769;

/// `h_delta = [f'(u_delta)]'' = f'''(u) u'^2 + f''(u) u''`, sampled on
/// `[-R - 2 delta, R + 2 delta]`.
pub fn speed_second_derivative(
    u: &SmoothDatum,
    flux: &FluxFunction,
) -> Result<SampledFunction> {
    let (r, delta) = (u.r, u.delta);
    let uu = u.clone();
    let fx = flux.clone();
    SampledFunction::from_scalar_fn(-r - 2.0 * delta, r + 2.0 * delta, SPEED_SAMPLES, move |x| {
        let v = uu.eval(x);
        let du = uu.d1(x);
        fx.d3(v) * du * du + fx.d2(v) * uu.d2(x)
    })
}

/// Closed-form lower bound on `Psi_{h_delta}(s)`:
/// `min{ delta^3 s / (45 V (V+1) ||f||_C3),
///       (4 delta / 5V) Psi^V_{f'''}(5 delta^2 s / 16 V^2) }`.
pub fn psi_hdelta_lower_bound(
    flux: &FluxFunction,
    v: f64,
    delta: f64,
    s: f64,
) -> Result<f64> {
    if !(s > 0.0 && delta > 0.0 && v > 0.0) {
        return Err(Error::domain("psi_hdelta_lower_bound needs positive inputs"));
    }
    let c3 = flux.c3_norm(v);
    let branch1 = delta.powi(3) * s / (45.0 * v * (v + 1.0) * c3);
    let t = 5.0 * delta * delta * s / (16.0 * v * v);
    let psi_f3 = if flux.f3_constant(v) {
        f64::INFINITY
    } else if let Some(c4) = flux.c4_norm(v) {
        t / c4
    } else {
        let f3 = {
            let fx = flux.clone();
            SampledFunction::from_scalar_fn(-v / 2.0, v / 2.0, 8193, move |u| fx.d3(u))?
        };
        inverse_modulus(&f3, t)?
    };
    let branch2 = if psi_f3.is_finite() {
        4.0 * delta / (5.0 * v) * psi_f3
    } else {
        f64::INFINITY
    };
    Ok(branch1.min(branch2))
}

/// How the smooth background of a thinned profile is evaluated and
/// integrated.
#[derive(Clone)]
enum HSource {
    /// `h_delta` from a mollified datum: exact antiderivatives through
    /// `f'(u_delta)` and `f''(u_delta) u_delta'`.
    Datum {
        u: Arc<SmoothDatum>,
        flux: Arc<FluxFunction>,
    },
    Generic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl HSource {
    fn eval(&self, x: f64) -> f64 {
        match self {
            HSource::Datum { u, flux } => {
                let v = u.eval(x);
                let du = u.d1(x);
                flux.d3(v) * du * du + flux.d2(v) * u.d2(x)
            }
            HSource::Generic(f) => f(x),
        }
    }

    /// First antiderivative `D` with `D' = h` (up to a constant).
    fn anti1(&self, x: f64) -> Option<f64> {
        match self {
            HSource::Datum { u, flux } => Some(flux.d2(u.eval(x)) * u.d1(x)),
            HSource::Generic(_) => None,
        }
    }

    /// Second antiderivative `P` with `P'' = h`.
    fn anti2(&self, x: f64) -> Option<f64> {
        match self {
            HSource::Datum { u, flux } => Some(flux.d1(u.eval(x))),
            HSource::Generic(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
enum PieceKind {
    Zero,
    /// linear between endpoint values (a marked perturbation cell)
    Linear { v0: f64, v1: f64 },
    /// quadratic in `u = x - x0` (collar ramps)
    Quad { c0: f64, c1: f64, c2: f64 },
    /// the smooth background plus a constant shift
    Smooth { shift: f64 },
}

#[derive(Clone, Debug)]
struct Piece {
    x0: f64,
    x1: f64,
    kind: PieceKind,
}

/// The thinned profile `h~`: within `sigma` of the input, transversal
/// zeros counted exactly from the piece structure, support kept inside
/// the domain when the input vanished near its ends.
#[derive(Clone)]
pub struct ThinnedSpeed {
    pieces: Arc<Vec<Piece>>,
    source: HSource,
    pub sigma: f64,
    pub zero_count: usize,
    pub sup_deviation: f64,
    pub support: Option<(f64, f64)>,
    pub domain: (f64, f64),
    /// `Psi_h(sigma)` estimated from the input samples (diagnostic)
    pub psi_sampled: f64,
    final_sign: i8,
}

impl ThinnedSpeed {
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.domain;
        if x < a || x > b {
            return 0.0;
        }
        let i = self
            .pieces
            .partition_point(|p| p.x1 < x)
            .min(self.pieces.len() - 1);
        let p = &self.pieces[i];
        let u = x - p.x0;
        match &p.kind {
            PieceKind::Zero => 0.0,
            PieceKind::Linear { v0, v1 } => v0 + (v1 - v0) * u / (p.x1 - p.x0),
            PieceKind::Quad { c0, c1, c2 } => c0 + c1 * u + c2 * u * u,
            PieceKind::Smooth { shift } => self.source.eval(x) + shift,
        }
    }

    pub fn sup_support(&self) -> f64 {
        self.support.map(|s| s.1).unwrap_or(self.domain.0)
    }

    pub fn to_sampled(&self, n: usize) -> Result<SampledFunction> {
        let me = self.clone();
        let (a, b) = self.domain;
        SampledFunction::from_scalar_fn(a, b, n, move |x| me.eval(x))
    }
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Walks the global sign sequence of the piece list and counts flips.
fn count_transversal(pieces: &[Piece], source: &HSource, scan_per_len: f64) -> (usize, i8) {
    let mut count = 0usize;
    let mut last = 0i8;
    let mut push = |v: f64, count: &mut usize| {
        let s = sign_of(v);
        if s != 0 {
            if last != 0 && s != last {
                *count += 1;
            }
            last = s;
        }
    };
    for p in pieces {
        match &p.kind {
            PieceKind::Zero => {}
            PieceKind::Linear { v0, v1 } => {
                push(*v0, &mut count);
                push(*v1, &mut count);
            }
            PieceKind::Quad { c0, c1, c2 } => {
                for j in 0..=8 {
                    let u = (p.x1 - p.x0) * j as f64 / 8.0;
                    push(c0 + c1 * u + c2 * u * u, &mut count);
                }
            }
            PieceKind::Smooth { shift } => {
                let n = (((p.x1 - p.x0) * scan_per_len) as usize).clamp(64, 1 << 18);
                for j in 0..=n {
                    let x = p.x0 + (p.x1 - p.x0) * j as f64 / n as f64;
                    push(source.eval(x) + shift, &mut count);
                }
            }
        }
    }
    (count, last)
}

fn build_thinned(
    h: &SampledFunction,
    source: HSource,
    sigma: f64,
    seed: u64,
) -> Result<ThinnedSpeed> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain("sigma must be positive"));
    }
    if h.dim() != 1 || h.codim() != 1 {
        return Err(Error::domain("thin_zero_set works on scalar 1-D functions"));
    }
    let (a, b) = (h.domain().lo()[0], h.domain().hi()[0]);
    let n = h.resolution();
    let step = (b - a) / (n - 1) as f64;
    let psi_sampled = inverse_modulus(h, sigma)?;

    // support hull from samples plus a probe pass
    let mut first = None;
    let mut last = None;
    let note = |x: f64, v: f64, first: &mut Option<f64>, last: &mut Option<f64>| {
        if v != 0.0 {
            if first.map_or(true, |f| x < f) {
                *first = Some(x);
            }
            if last.map_or(true, |l| x > l) {
                *last = Some(x);
            }
        }
    };
    for i in 0..n {
        note(
            h.grid_node(&[i])[0],
            h.sample(&[i])[0],
            &mut first,
            &mut last,
        );
    }
    let probes = 4 * n;
    for i in 0..probes {
        let x = a + (b - a) * i as f64 / (probes - 1) as f64;
        note(x, h.eval_scalar(x), &mut first, &mut last);
    }

    let (pieces, support) = match (first, last) {
        (None, None) => {
            // identically zero input: keep it
            (vec![Piece { x0: a, x1: b, kind: PieceKind::Zero }], None)
        }
        (Some(f), Some(l)) => {
            let a1 = (f - step).max(a);
            let b1 = (l + step).min(b);

            // thin the heart through the scalar perturbation machinery
            let heart_len = b1 - a1;
            let hv = h.evaluator();
            let heart = SampledFunction::from_scalar_fn(0.0, 1.0, n, move |t| {
                hv(&[a1 + heart_len * t])[0]
            })?;
            let w = GraphManifold::point(vec![0.0])?;
            let res = perturb(&heart, &w, sigma, seed)?;

            let mut pieces: Vec<Piece> = Vec::new();
            // left zero tail and collar
            let wl = a1 - a;
            let mut heart_start_val = None;
            if res.shift.is_some() {
                heart_start_val = Some(h.eval_scalar(a1) + res.shift.as_ref().unwrap()[0]);
            }
            // heart pieces
            let mut heart_pieces: Vec<Piece> = Vec::new();
            if let Some(shift) = res.shift.as_ref() {
                heart_pieces.push(Piece {
                    x0: a1,
                    x1: b1,
                    kind: PieceKind::Smooth { shift: shift[0] },
                });
            } else if res.marked_cells == 0 {
                heart_pieces.push(Piece {
                    x0: a1,
                    x1: b1,
                    kind: PieceKind::Smooth { shift: 0.0 },
                });
            } else {
                let pl = res
                    .pl
                    .as_ref()
                    .expect("marked cells imply a PL approximation");
                let k = res.grid_k;
                let side = heart_len / k as f64;
                let flush_smooth =
                    |from: u64, to: u64, heart_pieces: &mut Vec<Piece>| {
                        if to > from {
                            heart_pieces.push(Piece {
                                x0: a1 + from as f64 * side,
                                x1: a1 + to as f64 * side,
                                kind: PieceKind::Smooth { shift: 0.0 },
                            });
                        }
                    };
                let marked: Vec<u64> = pl.marked.iter().map(|c| c[0]).collect();
                let mut cursor = 0u64;
                for &cell in &marked {
                    flush_smooth(cursor, cell, &mut heart_pieces);
                    let v0 = pl.vertex_value(&[2 * cell as i64]).unwrap()[0];
                    let v1 = pl.vertex_value(&[2 * cell as i64 + 2]).unwrap()[0];
                    heart_pieces.push(Piece {
                        x0: a1 + cell as f64 * side,
                        x1: a1 + (cell + 1) as f64 * side,
                        kind: PieceKind::Linear { v0, v1 },
                    });
                    cursor = cell + 1;
                }
                flush_smooth(cursor, k, &mut heart_pieces);
                if let Some(Piece { kind: PieceKind::Linear { v0, .. }, .. }) =
                    heart_pieces.first()
                {
                    heart_start_val = Some(*v0);
                }
            }
            let heart_start_val = heart_start_val.unwrap_or_else(|| h.eval_scalar(a1));
            let heart_end_val = match heart_pieces.last() {
                Some(Piece { kind: PieceKind::Linear { v1, .. }, .. }) => *v1,
                Some(Piece { kind: PieceKind::Smooth { shift }, .. }) => {
                    h.eval_scalar(b1) + shift
                }
                _ => h.eval_scalar(b1),
            };

            let collar_q = |c: f64| -> f64 {
                if c.abs() >= sigma / 4.0 {
                    0.0
                } else if c >= 0.0 {
                    sigma / 4.0
                } else {
                    -sigma / 4.0
                }
            };
            let tiny = 1e-13 * (b - a);
            let mut sup_lo = a1;
            if wl > tiny {
                let wa = 7.0 * wl / 8.0;
                let x_act = a1 - wa;
                sup_lo = x_act;
                pieces.push(Piece { x0: a, x1: x_act, kind: PieceKind::Zero });
                let c = heart_start_val;
                let q = collar_q(c);
                pieces.push(Piece {
                    x0: x_act,
                    x1: a1,
                    kind: PieceKind::Quad {
                        c0: 0.0,
                        c1: (c + q) / wa,
                        c2: -q / (wa * wa),
                    },
                });
            }
            pieces.extend(heart_pieces);
            let wr = b - b1;
            let mut sup_hi = b1;
            if wr > tiny {
                let wa = 7.0 * wr / 8.0;
                let x_act = b1 + wa;
                sup_hi = x_act;
                let c = heart_end_val;
                let q = collar_q(c);
                pieces.push(Piece {
                    x0: b1,
                    x1: x_act,
                    kind: PieceKind::Quad {
                        c0: c,
                        c1: (q - c) / wa,
                        c2: -q / (wa * wa),
                    },
                });
                pieces.push(Piece { x0: x_act, x1: b, kind: PieceKind::Zero });
            } else {
                sup_hi = b1.max(sup_hi);
            }
            (pieces, Some((sup_lo, sup_hi)))
        }
        _ => unreachable!(),
    };

    let scan_per_len = 4.0 * (n as f64) / (b - a);
    let (zero_count, final_sign) = count_transversal(&pieces, &source, scan_per_len);

    let thinned = ThinnedSpeed {
        pieces: Arc::new(pieces),
        source,
        sigma,
        zero_count,
        sup_deviation: 0.0,
        support,
        domain: (a, b),
        psi_sampled,
        final_sign,
    };

    // a-posteriori sup check against the input
    let mut sup = 0.0f64;
    let dense = 1 << 17;
    for i in 0..=dense {
        let x = a + (b - a) * i as f64 / dense as f64;
        sup = sup.max((thinned.eval(x) - h.eval_scalar(x)).abs());
    }
    for p in thinned.pieces.iter() {
        if let PieceKind::Linear { .. } = p.kind {
            for j in 0..=8 {
                let x = p.x0 + (p.x1 - p.x0) * j as f64 / 8.0;
                sup = sup.max((thinned.eval(x) - h.eval_scalar(x)).abs());
            }
        }
    }
    if sup > sigma * (1.0 + 1e-9) {
        return Err(Error::numerical(
            "thin_zero_set",
            format!("deviation {sup} exceeds sigma {sigma}"),
        ));
    }
    Ok(ThinnedSpeed {
        sup_deviation: sup,
        ..thinned
    })
}

/// Thins the zero set of a sampled scalar function within budget `sigma`.
pub fn thin_zero_set(
    h: &SampledFunction,
    sigma: f64,
    seed: u64,
) -> Result<ThinnedSpeed> {
    let hv = h.evaluator();
    build_thinned(
        h,
        HSource::Generic(Arc::new(move |x| hv(&[x])[0])),
        sigma,
        seed,
    )
}

/// Pipeline-internal variant carrying the exact antiderivatives of
/// `h_delta` for the reconstruction.
pub(crate) fn thin_speed(
    u: &Arc<SmoothDatum>,
    flux: &Arc<FluxFunction>,
    sigma: f64,
    seed: u64,
) -> Result<ThinnedSpeed> {
    let h = speed_second_derivative(u, flux)?;
    build_thinned(
        &h,
        HSource::Datum {
            u: Arc::clone(u),
            flux: Arc::clone(flux),
        },
        sigma,
        seed,
    )
}

/// Per-piece reconstruction data: value and slope of `F` at the piece
/// start, plus the closed-form segment continuation.
#[derive(Clone, Debug)]
struct FPiece {
    x0: f64,
    x1: f64,
    f_at_x0: f64,
    s_at_x0: f64,
    kind: PieceKind,
}

/// The reconstructed C2 speed profile `F` and its inverse datum.
#[derive(Clone)]
pub struct ReconstructedDatum {
    fpieces: Arc<Vec<FPiece>>,
    source: HSource,
    flux: Arc<FluxFunction>,
    pub fprime0: f64,
    pub r: f64,
    pub v: f64,
    pub delta: f64,
    pub sigma: f64,
    pub r1: f64,
    pub r2: f64,
    pub theta: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// the closed form printed in the source construction, kept for
    /// comparison (it differs from the C2-consistent alpha3 by one power
    /// of the tail length)
    pub alpha3_closed_form: f64,
    pub c2_residual: f64,
    /// transversal zeros of the thinned profile (heart inflections)
    pub zero_count: usize,
    /// sign changes of F'' on the tail `[R1, R+2delta]`
    pub patch_inflections: usize,
    pub inflections: usize,
    /// dense-scan `||F - f'(u_delta)||` when the exact source is known
    pub sup_f_error: Option<f64>,
    pub sup_f_bound: f64,
    g_q1: f64,
    g_q2: f64,
    domain: (f64, f64),
}

impl ReconstructedDatum {
    fn tail_len(&self) -> f64 {
        self.domain.1 - self.r1
    }

    fn g_patch(&self, x: f64) -> (f64, f64, f64) {
        if x < self.r1 || x > self.r2 {
            return (0.0, 0.0, 0.0);
        }
        let (q1, q2) = (self.g_q1, self.g_q2);
        let a = x - self.r2;
        let byes = x - self.r1;
        let poly = byes * q1 + byes * byes * q2;
        let dpoly = q1 + 2.0 * byes * q2;
        let g = a * a * a * poly;
        let g1 = 3.0 * a * a * poly + a * a * a * dpoly;
        let g2 = 6.0 * a * poly + 6.0 * a * a * dpoly + a * a * a * 2.0 * q2;
        (g, g1, g2)
    }

    fn cubic(&self, x: f64) -> (f64, f64, f64) {
        let l = self.tail_len();
        let t = (self.domain.1 - x) / l;
        (
            self.alpha0 * t * t * t,
            -3.0 * self.alpha0 * t * t / l,
            6.0 * self.alpha0 * t / (l * l),
        )
    }

    fn raw_at(&self, x: f64) -> (f64, f64) {
        // (double integral, single integral) of h~ from the left end
        let i = self
            .fpieces
            .partition_point(|p| p.x1 < x)
            .min(self.fpieces.len() - 1);
        let p = &self.fpieces[i];
        let u = x - p.x0;
        match &p.kind {
            PieceKind::Zero => (p.f_at_x0 + p.s_at_x0 * u, p.s_at_x0),
            PieceKind::Linear { v0, v1 } => {
                let slope = (v1 - v0) / (p.x1 - p.x0);
                (
                    p.f_at_x0 + p.s_at_x0 * u + v0 * u * u / 2.0 + slope * u * u * u / 6.0,
                    p.s_at_x0 + v0 * u + slope * u * u / 2.0,
                )
            }
            PieceKind::Quad { c0, c1, c2 } => (
                p.f_at_x0
                    + p.s_at_x0 * u
                    + c0 * u * u / 2.0
                    + c1 * u * u * u / 6.0
                    + c2 * u * u * u * u / 12.0,
                p.s_at_x0 + c0 * u + c1 * u * u / 2.0 + c2 * u * u * u / 3.0,
            ),
            PieceKind::Smooth { shift } => {
                let d0 = self.source.anti1(p.x0).expect("smooth piece needs a source");
                let p2 = self.source.anti2(x).unwrap() - self.source.anti2(p.x0).unwrap();
                (
                    p.f_at_x0 + (p.s_at_x0 - d0) * u + p2 + shift * u * u / 2.0,
                    p.s_at_x0 + self.source.anti1(x).unwrap() - d0 + shift * u,
                )
            }
        }
    }

    /// The speed profile `F`.
    pub fn f(&self, x: f64) -> f64 {
        let (a, b) = self.domain;
        if x <= a || x >= b {
            return self.fprime0;
        }
        if x < self.r1 {
            return self.fprime0 + self.raw_at(x).0;
        }
        let (c, _, _) = self.cubic(x);
        let (g, _, _) = self.g_patch(x);
        self.fprime0 + c + g
    }

    pub fn f1(&self, x: f64) -> f64 {
        let (a, b) = self.domain;
        if x <= a || x >= b {
            return 0.0;
        }
        if x < self.r1 {
            return self.raw_at(x).1;
        }
        let (_, c1, _) = self.cubic(x);
        let (_, g1, _) = self.g_patch(x);
        c1 + g1
    }

    pub fn f2(&self, x: f64) -> f64 {
        let (a, b) = self.domain;
        if x <= a || x >= b {
            return 0.0;
        }
        if x < self.r1 {
            let i = self
                .fpieces
                .partition_point(|p| p.x1 < x)
                .min(self.fpieces.len() - 1);
            let p = &self.fpieces[i];
            let u = x - p.x0;
            return match &p.kind {
                PieceKind::Zero => 0.0,
                PieceKind::Linear { v0, v1 } => v0 + (v1 - v0) * u / (p.x1 - p.x0),
                PieceKind::Quad { c0, c1, c2 } => c0 + c1 * u + c2 * u * u,
                PieceKind::Smooth { shift } => self.source.eval(x) + shift,
            };
        }
        let (_, _, c2) = self.cubic(x);
        let (_, _, g2) = self.g_patch(x);
        c2 + g2
    }

    /// The perturbed datum `vbar = (f')^{-1}(F)`; exact zero wherever
    /// `F` returns exactly `f'(0)`.
    pub fn vbar(&self, x: f64) -> Result<f64> {
        let y = self.f(x);
        if y == self.fprime0 {
            return Ok(0.0);
        }
        self.flux.invert_speed(y, self.v)
    }

    pub fn support(&self) -> (f64, f64) {
        self.domain
    }

    pub fn f_evaluator(&self) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        let me = self.clone();
        Arc::new(move |x| me.f(x))
    }

    pub fn vbar_evaluator(&self) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        let me = self.clone();
        Arc::new(move |x| me.vbar(x).unwrap_or(0.0))
    }
}

/// Builds the C2 profile (FF) from a thinned `h~`: double integral up to
/// `R1`, cubic decay plus the quintic Hermite patch `G_theta` on the
/// tail, constant `f'(0)` outside.
pub fn reconstruct_speed(
    ht: &ThinnedSpeed,
    flux: &FluxFunction,
    r: f64,
    v: f64,
    delta: f64,
    sigma: f64,
) -> Result<ReconstructedDatum> {
    let (a, b) = ht.domain;
    let expect_b = r + 2.0 * delta;
    if (a + expect_b).abs() > 1e-9 * (b - a) || (b - expect_b).abs() > 1e-9 * (b - a) {
        return Err(Error::domain(format!(
            "thinned profile domain [{a}, {b}] is not [-R-2delta, R+2delta]"
        )));
    }

    // resample generic smooth pieces into fine linear pieces so every
    // integral below is closed-form
    let mut pieces: Vec<Piece> = Vec::new();
    for p in ht.pieces.iter() {
        match p.kind {
            PieceKind::Smooth { shift } if matches!(ht.source, HSource::Generic(_)) => {
                let n = (((p.x1 - p.x0) / (b - a) * 65_536.0) as usize).clamp(16, 1 << 17);
                let mut v_prev = ht.source.eval(p.x0) + shift;
                for j in 0..n {
                    let x0 = p.x0 + (p.x1 - p.x0) * j as f64 / n as f64;
                    let x1 = p.x0 + (p.x1 - p.x0) * (j + 1) as f64 / n as f64;
                    let v_next = ht.source.eval(x1) + shift;
                    pieces.push(Piece {
                        x0,
                        x1,
                        kind: PieceKind::Linear { v0: v_prev, v1: v_next },
                    });
                    v_prev = v_next;
                }
            }
            _ => pieces.push(p.clone()),
        }
    }

    // prefix integrals
    let mut fpieces: Vec<FPiece> = Vec::with_capacity(pieces.len());
    let mut f_acc = 0.0f64;
    let mut s_acc = 0.0f64;
    for p in &pieces {
        let len = p.x1 - p.x0;
        fpieces.push(FPiece {
            x0: p.x0,
            x1: p.x1,
            f_at_x0: f_acc,
            s_at_x0: s_acc,
            kind: p.kind.clone(),
        });
        let (df, ds) = match &p.kind {
            PieceKind::Zero => (s_acc * len, 0.0),
            PieceKind::Linear { v0, v1 } => {
                let slope = (v1 - v0) / len;
                (
                    s_acc * len + v0 * len * len / 2.0 + slope * len * len * len / 6.0,
                    (v0 + v1) / 2.0 * len,
                )
            }
            PieceKind::Quad { c0, c1, c2 } => (
                s_acc * len
                    + c0 * len * len / 2.0
                    + c1 * len * len * len / 6.0
                    + c2 * len * len * len * len / 12.0,
                c0 * len + c1 * len * len / 2.0 + c2 * len * len * len / 3.0,
            ),
            PieceKind::Smooth { shift } => {
                let d0 = ht.source.anti1(p.x0).ok_or_else(|| {
                    Error::numerical("reconstruct_speed", "smooth piece without antiderivative")
                })?;
                let d1 = ht.source.anti1(p.x1).unwrap();
                let p0 = ht.source.anti2(p.x0).unwrap();
                let p1 = ht.source.anti2(p.x1).unwrap();
                (
                    s_acc * len + (p1 - p0 - d0 * len) + shift * len * len / 2.0,
                    d1 - d0 + shift * len,
                )
            }
        };
        f_acc += df;
        s_acc += ds;
    }

    let fprime0 = flux.d1(0.0);
    let sup_supp = ht.sup_support();
    let r1 = (r + delta).max(sup_supp) + 1e-12 * (1.0 + sup_supp.abs());
    if r1 >= b - 1e-9 * (b - a) {
        return Err(Error::numerical(
            "reconstruct_speed",
            format!("support reaches the right boundary: R1 = {r1}, B = {b}"),
        ));
    }
    let l = b - r1;

    let mut rd = ReconstructedDatum {
        fpieces: Arc::new(fpieces),
        source: ht.source.clone(),
        flux: Arc::new(flux.clone()),
        fprime0,
        r,
        v,
        delta,
        sigma,
        r1,
        r2: r1,
        theta: 0.0,
        alpha0: 0.0,
        alpha1: 0.0,
        alpha2: 0.0,
        alpha3: 0.0,
        alpha3_closed_form: 0.0,
        c2_residual: 0.0,
        zero_count: ht.zero_count,
        patch_inflections: 0,
        inflections: ht.zero_count,
        sup_f_error: None,
        sup_f_bound: 2.0 * expect_b * expect_b * sigma,
        g_q1: 0.0,
        g_q2: 0.0,
        domain: (a, b),
    };

    let (alpha0, alpha1) = rd.raw_at(r1);
    rd.alpha0 = alpha0;
    rd.alpha1 = alpha1;
    rd.alpha2 = alpha1 + 3.0 * alpha0 / l;
    rd.alpha3 = -6.0 * alpha0 / (l * l);
    rd.alpha3_closed_form = -6.0 * alpha0 / l;

    // theta: small enough for the stated F-error budget, the paper's
    // patch cap, and the tail geometry
    let den = 4.0 * rd.alpha2.abs() + rd.alpha3.abs() / 2.0;
    let slack = 2.0 * expect_b * expect_b * sigma - (r1 + expect_b) * (r1 + expect_b) * sigma / 2.0;
    let paper_cap = sigma * expect_b * expect_b / 2.0;
    let mut theta = (delta / 4.0).min(l / 2.0);
    if den > 0.0 {
        theta = theta.min(slack.max(0.0).min(paper_cap) / den);
    }
    if !(theta > 0.0) {
        return Err(Error::numerical(
            "reconstruct_speed",
            format!("degenerate patch width theta = {theta}"),
        ));
    }
    rd.theta = theta;
    rd.r2 = r1 + theta;
    let wq = -theta; // R1 - R2
    rd.g_q1 = rd.alpha2 / (wq * wq * wq);
    rd.g_q2 = (rd.alpha3 * wq - 6.0 * rd.alpha2) / (2.0 * wq * wq * wq * wq);

    // C2 gluing residuals at the four junctions
    let rel = |x: f64, y: f64| (x - y).abs() / (1.0 + x.abs().max(y.abs()));
    let mut worst = (0.0f64, "");
    {
        let mut check = |junction: &'static str, left: (f64, f64, f64), right: (f64, f64, f64)| {
            for (lv, rv) in [(left.0, right.0), (left.1, right.1), (left.2, right.2)] {
                let res = rel(lv, rv);
                if res > worst.0 {
                    worst = (res, junction);
                }
            }
        };
        // at A
        let (ra, sa) = rd.raw_at(a + 0.0);
        check(
            "-R-2delta",
            (fprime0, 0.0, 0.0),
            (fprime0 + ra, sa, ht.eval(a)),
        );
        // at R1
        let (rr, sr) = rd.raw_at(r1);
        let (c, c1, c2) = rd.cubic(r1);
        let (g, g1, g2) = rd.g_patch(r1);
        check(
            "R1",
            (fprime0 + rr, sr, ht.eval(r1)),
            (fprime0 + c + g, c1 + g1, c2 + g2),
        );
        // at R2
        let (cc, cc1, cc2) = rd.cubic(rd.r2);
        let (gg, gg1, gg2) = rd.g_patch(rd.r2);
        check(
            "R2",
            (fprime0 + cc + gg, cc1 + gg1, cc2 + gg2),
            (fprime0 + cc, cc1, cc2),
        );
        // at B
        let (cb, cb1, cb2) = rd.cubic(b);
        check("R+2delta", (fprime0 + cb, cb1, cb2), (fprime0, 0.0, 0.0));
    }
    rd.c2_residual = worst.0;
    if worst.0 > 1e-9 {
        return Err(Error::ReconstructionFailure {
            junction: worst.1.to_string(),
            residual: worst.0,
        });
    }

    // patch inflections: sign changes of F'' over [R1, B], seeded with
    // the final sign of the heart
    let mut count = 0usize;
    let mut last = ht.final_sign;
    let scan = |x0: f64, x1: f64, n: usize, count: &mut usize, last: &mut i8| {
        for j in 0..=n {
            let x = x0 + (x1 - x0) * j as f64 / n as f64;
            let s = sign_of(rd.f2(x));
            if s != 0 {
                if *last != 0 && s != *last {
                    *count += 1;
                }
                *last = s;
            }
        }
    };
    scan(r1, rd.r2, 2048, &mut count, &mut last);
    scan(rd.r2, b, 2048, &mut count, &mut last);
    rd.patch_inflections = count;
    rd.inflections = rd.zero_count + count;

    // dense F-error check against f'(u_delta) when the source is exact
    if let HSource::Datum { u, flux } = &rd.source {
        let mut sup = 0.0f64;
        let n = SPEED_SAMPLES;
        for i in 0..n {
            let x = (a - delta / 2.0)
                + (b - a + delta) * i as f64 / (n - 1) as f64;
            sup = sup.max((rd.f(x) - flux.d1(u.eval(x))).abs());
        }
        if sup > rd.sup_f_bound * (1.0 + 1e-9) {
            return Err(Error::numerical(
                "reconstruct_speed",
                format!("||F - f'(u_delta)|| = {sup} exceeds {}", rd.sup_f_bound),
            ));
        }
        rd.sup_f_error = Some(sup);
    }

    Ok(rd)
}

/// Monotone inversion of a speed profile through `f'`.
pub fn invert_speed(
    f_eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    flux: Arc<FluxFunction>,
    v: f64,
) -> Arc<dyn Fn(f64) -> Result<f64> + Send + Sync> {
    let neutral = flux.d1(0.0);
    Arc::new(move |x| {
        let y = f_eval(x);
        if y == neutral {
            return Ok(0.0);
        }
        flux.invert_speed(y, v)
    })
}

/// Total inflection count of the reconstructed profile.
pub fn count_inflections(rd: &ReconstructedDatum) -> usize {
    rd.inflections
}

/// The epsilon-dependent factor of the shock budget.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PhiBound {
    pub phi: f64,
    /// the eps-free cap available for C4 fluxes
    pub c4_constant: Option<f64>,
    pub beta_eps: f64,
    pub branch_c3: f64,
    pub branch_modulus: f64,
}

/// `Phi_{f,V,R}(eps) = 2^12 max{45 (1+1/V) ||f||_C3, 4 beta / Psi^V_{f'''}(beta)}`
/// with `beta = 5 lambda eps^3 / (2^9 V^4 R^3)`.
pub fn phi_bound(flux: &FluxFunction, v: f64, r: f64, eps: f64) -> Result<PhiBound> {
    if !(eps > 0.0 && eps <= r * v / 4.0 * (1.0 + 1e-12)) {
        return Err(Error::domain(format!(
            "eps = {eps} outside (0, R V / 4 = {}]",
            r * v / 4.0
        )));
    }
    let lambda = flux.lambda(v)?;
    let beta = 5.0 * lambda * eps.powi(3) / (2f64.powi(9) * v.powi(4) * r.powi(3));
    let branch_c3 = 45.0 * (1.0 + 1.0 / v) * flux.c3_norm(v);
    let branch_modulus = if flux.f3_constant(v) {
        0.0
    } else if let Some(c4) = flux.c4_norm(v) {
        4.0 * c4
    } else {
        let fx = flux.clone();
        let f3 = SampledFunction::from_scalar_fn(-v / 2.0, v / 2.0, 8193, move |u| fx.d3(u))?;
        let psi = inverse_modulus(&f3, beta)?;
        if psi.is_finite() && psi > 0.0 {
            4.0 * beta / psi
        } else if psi.is_infinite() {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let two12 = 2f64.powi(12);
    Ok(PhiBound {
        phi: two12 * branch_c3.max(branch_modulus),
        c4_constant: flux
            .c4_norm(v)
            .map(|c4| two12 * 45.0 * (1.0 + 1.0 / v) * c4),
        beta_eps: beta,
        branch_c3,
        branch_modulus,
    })
}

/// Initial-datum budget from the corollary: at most `N` shocks when
/// `||vbar - ubar||_L1` is below the returned value.
pub fn corollary_budget(flux: &FluxFunction, v: f64, r: f64, n: u64) -> Result<f64> {
    if n <= 4 {
        return Err(Error::domain(format!("N = {n} must exceed 4")));
    }
    let c4 = flux
        .c4_norm(v)
        .ok_or_else(|| Error::domain("corollary budget needs a C4 flux"))?;
    let lambda = flux.lambda(v)?;
    Ok(8.0
        * 45f64.powf(0.25)
        * ((v + 1.0) / lambda * c4).powf(0.25)
        * r
        * v
        / ((n - 4) as f64).powf(0.25))
}

/// Full pipeline output.
#[derive(Clone)]
pub struct PipelineResult {
    pub reconstructed: ReconstructedDatum,
    pub eps: f64,
    pub delta: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub l1_error: f64,
    pub support: (f64, f64),
    pub zero_count: usize,
    pub inflections: usize,
    pub inflection_bound: f64,
    pub phi: PhiBound,
    /// `4 (R + delta) / Psi_{h}(sigma)` with the sampled inverse modulus
    pub zero_bound_sampled: f64,
    /// same with the closed-form certified lower bound on `Psi_{h}`
    pub zero_bound_certified: f64,
    pub seed: u64,
}

/// Mollify, thin, reconstruct, invert; asserts the L1 budget, the support
/// containment and the inflection bound before returning.
pub fn pipeline(
    ubar: &BVDatum,
    flux: &FluxFunction,
    eps: f64,
    seed: u64,
) -> Result<PipelineResult> {
    let (r, v) = (ubar.r(), ubar.v());
    if !(eps > 0.0 && eps <= r * v / 4.0 * (1.0 + 1e-12)) {
        return Err(Error::domain(format!(
            "eps = {eps} outside (0, R V / 4 = {}]",
            r * v / 4.0
        )));
    }
    let lambda = flux.lambda(v)?;
    let delta = eps / (2.0 * v);
    let rb = r + 2.0 * delta;
    let sigma = lambda * eps / (8.0 * rb * rb * rb);
    if 2.0 * delta > r + 1e-12 {
        return Err(Error::precondition(format!(
            "2 delta = {} exceeds R = {r}",
            2.0 * delta
        )));
    }

    let u = Arc::new(mollify(ubar, delta)?);
    let fx = Arc::new(flux.clone());
    let ht = thin_speed(&u, &fx, sigma, seed)?;
    let rd = reconstruct_speed(&ht, flux, r, v, delta, sigma)?;

    // L1 error by composite Simpson with cuts at the datum breakpoints
    let mut cuts = vec![-rb, rb, -r - delta, r + delta];
    for &(p0, p1, _) in ubar.pieces() {
        cuts.push(p0);
        cuts.push(p1);
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut l1 = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 1e-14 {
            continue;
        }
        let n = 2048;
        let h = (b - a) / n as f64;
        let g = |x: f64| (rd.vbar(x).unwrap_or(f64::NAN) - ubar.eval(x)).abs();
        let mut s = g(a) + g(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(a + i as f64 * h);
        }
        l1 += s * h / 3.0;
    }
    if !l1.is_finite() || l1 > eps * 1.01 {
        return Err(Error::numerical(
            "pipeline",
            format!("||vbar - ubar||_L1 = {l1} exceeds eps = {eps} (1% slack)"),
        ));
    }
    let support = rd.support();
    if support.0 < -2.0 * r - 1e-12 || support.1 > 2.0 * r + 1e-12 {
        return Err(Error::numerical(
            "pipeline",
            format!("supp(vbar) = {support:?} leaves [-2R, 2R]"),
        ));
    }

    let phi = phi_bound(flux, v, r, eps)?;
    let inflection_bound = phi.phi / lambda * r.powi(4) * v.powi(5) / eps.powi(4) + 4.0;
    if (rd.inflections as f64) > inflection_bound {
        return Err(Error::numerical(
            "pipeline",
            format!(
                "inflection count {} exceeds the bound {inflection_bound}",
                rd.inflections
            ),
        ));
    }

    let psi_cert = psi_hdelta_lower_bound(flux, v, delta, sigma)?;
    Ok(PipelineResult {
        zero_count: ht.zero_count,
        inflections: rd.inflections,
        inflection_bound,
        zero_bound_sampled: if ht.psi_sampled.is_finite() {
            4.0 * (r + delta) / ht.psi_sampled
        } else {
            0.0
        },
        zero_bound_certified: 4.0 * (r + delta) / psi_cert,
        reconstructed: rd,
        eps,
        delta,
        sigma,
        lambda,
        l1_error: l1,
        support,
        phi,
        seed,
    })
}
