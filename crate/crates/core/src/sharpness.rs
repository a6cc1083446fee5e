//! Nested sawtooth construction showing the `(1/eps)` blow-up rate is
//! attained: a 1-Lipschitz function on `[0,1]` built from blocks of
//! `2^{n^2}` teeth of width `2^{-(n^2+n)}`, so that any `eps`-perturbation
//! in the n-th dyadic window keeps at least `2^{n^2}` zeros.
//!
//! Evaluation is analytic per tooth (locate block, locate tooth, evaluate
//! the base profile), O(1) per query. Breakpoints are dyadic, so the
//! tooth geometry is exact in double precision.

use crate::moduli::SampledFunction;
use crate::{Error, Result};

/// Block cap: block 4 already has 2^16 teeth at width 2^-20.
pub const MAX_DEPTH: usize = 4;

/// The assembled sawtooth, truncated after `depth` blocks.
#[derive(Debug, Clone, Copy)]
pub struct SharpExample {
    depth: usize,
}

/// Base tooth on [0,1]: tent up on [0,1/2], mirrored tent down on [1/2,1];
/// both branches vanish at the overlap point 1/2.
fn base_tooth(x: f64) -> f64 {
    if x <= 0.5 {
        0.25 - (x - 0.25).abs()
    } else {
        (x - 0.75).abs() - 0.25
    }
}

impl SharpExample {
    pub fn new(depth: usize) -> Result<Self> {
        if depth < 1 || depth > MAX_DEPTH {
            return Err(Error::domain(format!(
                "depth {depth} outside 1..={MAX_DEPTH}"
            )));
        }
        Ok(SharpExample { depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Left endpoint of block n: `s_n = 1 - 2^{1-n}`, so `s_1 = 0`.
    pub fn breakpoint(n: usize) -> f64 {
        1.0 - (0.5f64).powi(n as i32 - 1)
    }

    /// Teeth per block and tooth width.
    pub fn teeth(n: usize) -> u64 {
        1u64 << (n * n)
    }

    pub fn tooth_width(n: usize) -> f64 {
        (0.5f64).powi((n * n + n) as i32)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain(format!("x = {x} outside [0, 1]")));
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: f64) -> f64 {
        if x >= Self::breakpoint(self.depth + 1) || x >= 1.0 {
            return 0.0;
        }
        let mut n = 1usize;
        while x >= Self::breakpoint(n + 1) {
            n += 1;
        }
        let w = Self::tooth_width(n);
        let t = x - Self::breakpoint(n);
        // scaling by a power of two is exact
        let scaled = t / w;
        let k = scaled.floor().min((Self::teeth(n) - 1) as f64);
        w * base_tooth(scaled - k)
    }

    pub fn to_sampled(&self, n: usize) -> Result<SampledFunction> {
        let me = *self;
        SampledFunction::from_scalar_fn(0.0, 1.0, n, move |x| {
            me.eval_unchecked(x.clamp(0.0, 1.0))
        })
    }
}

/// The forced-zero count for a budget in one of the dyadic windows.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ForcedZeroBound {
    pub n: usize,
    pub lower_bound: u64,
}

/// Window lookup: `eps` in `(2^{-(n+1)^2-(n+1)}, 2^{-n^2-n}]` maps to the
/// bound `2^{n^2}`. A budget on the shared dyadic boundary belongs to the
/// deeper window.
pub fn forced_zero_lower_bound(eps: f64) -> Result<ForcedZeroBound> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain("eps must be positive and finite"));
    }
    for n in 1..=7usize {
        let hi = (0.5f64).powi((n * n + n) as i32);
        let lo = (0.5f64).powi(((n + 1) * (n + 1) + n + 1) as i32);
        if eps > lo && eps <= hi {
            return Ok(ForcedZeroBound {
                n,
                lower_bound: 1u64 << (n * n),
            });
        }
    }
    let nearest = if eps > 0.25 { 1 } else { 7 };
    Err(Error::domain(format!(
        "eps = {eps} outside all dyadic windows; nearest n = {nearest}"
    )))
}

/// Counts sign changes of `h` scanned at `resolution` points: a lower
/// bound on the number of zeros (tangential zeros are not counted).
pub fn count_zeros_oracle(h: &SampledFunction, resolution: usize) -> usize {
    let dom = h.domain();
    let (a, b) = (dom.lo()[0], dom.hi()[0]);
    let mut count = 0usize;
    let mut last = 0i8;
    for i in 0..resolution {
        let x = a + (b - a) * i as f64 / (resolution - 1) as f64;
        let v = h.eval_scalar(x);
        let s = if v > 0.0 {
            1
        } else if v < 0.0 {
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
