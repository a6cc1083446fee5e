//! Compactly supported BV data and their mollifications.
//!
//! The mollifier is `rho_delta(x) = 315/(256 delta) (1 - x^2/delta^2)^4`
//! on `[-delta, delta]`: a C4 bump of unit mass. For piecewise-constant
//! data the convolution and its first three derivatives are exact
//! piecewise polynomials, so every evaluator here is closed-form.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::{Error, Result};

/// A piecewise-constant datum with support radius `R` and total-variation
/// budget `V`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BVDatum {
    /// disjoint `(left, right, value)` pieces, sorted by position
    pieces: Vec<(f64, f64, f64)>,
    r: f64,
    v: f64,
}

impl BVDatum {
    pub fn new(mut pieces: Vec<(f64, f64, f64)>, r: f64, v: f64) -> Result<Self> {
        if !(r > 0.0 && v > 0.0) {
            return Err(Error::domain("R and V must be positive"));
        }
        pieces.retain(|&(a, b, c)| b > a && c != 0.0);
        pieces.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for w in pieces.windows(2) {
            if w[0].1 > w[1].0 + 1e-12 {
                return Err(Error::domain(format!(
                    "overlapping pieces near x = {}",
                    w[1].0
                )));
            }
        }
        let datum = BVDatum { pieces, r, v };
        for &(a, b, c) in &datum.pieces {
            if a < -r - 1e-12 || b > r + 1e-12 {
                return Err(Error::domain(format!(
                    "piece [{a}, {b}] leaves the support [-{r}, {r}]"
                )));
            }
            if c.abs() > v / 2.0 + 1e-12 {
                return Err(Error::domain(format!(
                    "|value {c}| exceeds V/2 = {}",
                    v / 2.0
                )));
            }
        }
        let tv = datum.total_variation();
        if tv > v + 1e-9 {
            return Err(Error::domain(format!(
                "total variation {tv} exceeds the budget V = {v}"
            )));
        }
        Ok(datum)
    }

    pub fn zero(r: f64, v: f64) -> Result<Self> {
        BVDatum::new(Vec::new(), r, v)
    }

    pub fn pieces(&self) -> &[(f64, f64, f64)] {
        &self.pieces
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn eval(&self, x: f64) -> f64 {
        for &(a, b, c) in &self.pieces {
            if x >= a && x < b {
                return c;
            }
        }
        0.0
    }

    /// Total variation over the line, counting the jumps to zero on gaps
    /// and at the ends.
    pub fn total_variation(&self) -> f64 {
        let mut tv = 0.0;
        let mut prev = 0.0f64;
        let mut prev_end = f64::NEG_INFINITY;
        for &(a, b, c) in &self.pieces {
            if a > prev_end + 1e-12 && prev != 0.0 {
                tv += prev.abs();
                prev = 0.0;
            }
            tv += (c - prev).abs();
            prev = c;
            prev_end = b;
        }
        tv + prev.abs()
    }

    /// Parses the plain-text format: `R=`/`V=` headers, then one
    /// `x_left x_right value` triple per line.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut r = None;
        let mut v = None;
        let mut pieces = Vec::new();
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("R=") {
                r = Some(rest.trim().parse::<f64>().map_err(|e| {
                    Error::Parse(format!("line {}: bad R: {e}", ln + 1))
                })?);
            } else if let Some(rest) = line.strip_prefix("V=") {
                v = Some(rest.trim().parse::<f64>().map_err(|e| {
                    Error::Parse(format!("line {}: bad V: {e}", ln + 1))
                })?);
            } else {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::Parse(format!(
                        "line {}: expected `x_left x_right value`",
                        ln + 1
                    )));
                }
                let nums: Vec<f64> = parts
                    .iter()
                    .map(|p| {
                        p.parse::<f64>()
                            .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))
                    })
                    .collect::<Result<_>>()?;
                pieces.push((nums[0], nums[1], nums[2]));
            }
        }
        let r = r.ok_or_else(|| Error::Parse("missing R= header".into()))?;
        let v = v.ok_or_else(|| Error::Parse("missing V= header".into()))?;
        BVDatum::new(pieces, r, v)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        BVDatum::from_reader(std::io::BufReader::new(file))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "R={}", self.r)?;
        writeln!(w, "V={}", self.v)?;
        for &(a, b, c) in &self.pieces {
            writeln!(w, "{a} {b} {c}")?;
        }
        Ok(())
    }
}

/// Normalized kernel profile `315/256 (1 - t^2)^4` on `[-1, 1]`.
fn kernel_profile(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let w = 1.0 - t * t;
    315.0 / 256.0 * w * w * w * w
}

fn kernel_profile_d1(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let w = 1.0 - t * t;
    315.0 / 256.0 * (-8.0 * t) * w * w * w
}

fn kernel_profile_d2(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let w = 1.0 - t * t;
    315.0 / 256.0 * w * w * (56.0 * t * t - 8.0)
}

/// Cumulative kernel: `int_{-1}^{t} 315/256 (1-s^2)^4 ds`, clamped.
fn kernel_cdf(t: f64) -> f64 {
    if t <= -1.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let p = |s: f64| {
        s - 4.0 * s.powi(3) / 3.0 + 6.0 * s.powi(5) / 5.0 - 4.0 * s.powi(7) / 7.0 + s.powi(9) / 9.0
    };
    315.0 / 256.0 * (p(t) + 128.0 / 315.0)
}

/// `rho_delta(x)`: the mollifier itself.
pub fn mollifier_kernel(delta: f64, x: f64) -> f64 {
    kernel_profile(x / delta) / delta
}

/// `int_{-inf}^{x} rho_delta`.
pub fn mollifier_cdf(delta: f64, x: f64) -> f64 {
    kernel_cdf(x / delta)
}

/// The mollified datum `u_delta = ubar * rho_delta` with closed-form
/// derivatives up to third order.
#[derive(Debug, Clone)]
pub struct SmoothDatum {
    pieces: Vec<(f64, f64, f64)>,
    pub delta: f64,
    pub r: f64,
    pub v: f64,
}

impl SmoothDatum {
    /// Support `[-R - delta, R + delta]`, exact zero outside.
    pub fn support(&self) -> (f64, f64) {
        (-self.r - self.delta, self.r + self.delta)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo || x >= hi {
            return 0.0;
        }
        self.pieces
            .iter()
            .map(|&(a, b, c)| {
                c * (kernel_cdf((x - a) / self.delta) - kernel_cdf((x - b) / self.delta))
            })
            .sum()
    }

    pub fn d1(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo || x >= hi {
            return 0.0;
        }
        self.pieces
            .iter()
            .map(|&(a, b, c)| {
                c * (kernel_profile((x - a) / self.delta) - kernel_profile((x - b) / self.delta))
            })
            .sum::<f64>()
            / self.delta
    }

    pub fn d2(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo || x >= hi {
            return 0.0;
        }
        self.pieces
            .iter()
            .map(|&(a, b, c)| {
                c * (kernel_profile_d1((x - a) / self.delta)
                    - kernel_profile_d1((x - b) / self.delta))
            })
            .sum::<f64>()
            / (self.delta * self.delta)
    }

    pub fn d3(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo || x >= hi {
            return 0.0;
        }
        self.pieces
            .iter()
            .map(|&(a, b, c)| {
                c * (kernel_profile_d2((x - a) / self.delta)
                    - kernel_profile_d2((x - b) / self.delta))
            })
            .sum::<f64>()
            / (self.delta * self.delta * self.delta)
    }

    /// Exact `L1` distance to the datum it mollifies, by piecewise
    /// integration on a fine partition refined at all kernel breakpoints.
    pub fn l1_distance(&self, ubar: &BVDatum) -> f64 {
        let mut cuts = vec![self.support().0, self.support().1];
        for &(a, b, _) in &self.pieces {
            for e in [a - self.delta, a, a + self.delta, b - self.delta, b, b + self.delta] {
                cuts.push(e);
            }
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 1e-15 {
                continue;
            }
            // composite Simpson on |u_delta - ubar| per smooth piece
            let n = 512;
            let h = (b - a) / n as f64;
            let g = |x: f64| (self.eval(x) - ubar.eval(x)).abs();
            let mut s = g(a) + g(b);
            for i in 1..n {
                let x = a + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(x);
            }
            total += s * h / 3.0;
        }
        total
    }
}

/// Convolves the datum with the bump `rho_delta`.
pub fn mollify(ubar: &BVDatum, delta: f64) -> Result<SmoothDatum> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain(format!("delta = {delta} must be positive")));
    }
    Ok(SmoothDatum {
        pieces: ubar.pieces().to_vec(),
        delta,
        r: ubar.r(),
        v: ubar.v(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_datum() -> BVDatum {
        BVDatum::new(vec![(-1.0, 0.0, 1.0), (0.0, 1.0, -1.0)], 1.0, 4.0).unwrap()
    }

    #[test]
    fn total_variation_of_step_pair() {
        assert_eq!(step_datum().total_variation(), 4.0);
        let single = BVDatum::new(vec![(-1.0, 1.0, 1.0)], 1.0, 2.0).unwrap();
        assert_eq!(single.total_variation(), 2.0);
        // gap inserts a return to zero
        let gapped =
            BVDatum::new(vec![(-1.0, -0.5, 1.0), (0.5, 1.0, 1.0)], 1.0, 4.0).unwrap();
        assert_eq!(gapped.total_variation(), 4.0);
    }

    #[test]
    fn datum_validation() {
        assert!(BVDatum::new(vec![(-2.0, 0.0, 1.0)], 1.0, 4.0).is_err()); // support
        assert!(BVDatum::new(vec![(-1.0, 0.0, 3.0)], 1.0, 4.0).is_err()); // sup norm
        assert!(
            BVDatum::new(vec![(-1.0, 0.0, 1.9), (0.0, 1.0, -1.9)], 1.0, 4.0).is_err() // tv 7.6
        );
        assert!(
            BVDatum::new(vec![(-1.0, 0.5, 1.0), (0.0, 1.0, -1.0)], 1.0, 4.0).is_err() // overlap
        );
    }

    #[test]
    fn mollifier_mass_is_one() {
        // quadrature oracle at two scales
        for delta in [0.1, 1.0] {
            let n = 200_001;
            let h = 2.0 * delta / (n - 1) as f64;
            let mut s = 0.0;
            for i in 0..n {
                let x = -delta + i as f64 * h;
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                s += w * mollifier_kernel(delta, x);
            }
            assert!((s * h - 1.0).abs() < 1e-10, "mass {}", s * h);
            assert!((mollifier_cdf(delta, delta) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn l1_distance_within_v_delta() {
        let ubar = BVDatum::new(vec![(-1.0, 1.0, 1.0)], 1.0, 2.0).unwrap();
        let u = mollify(&ubar, 0.1).unwrap();
        let l1 = u.l1_distance(&ubar);
        assert!(l1 <= 2.0 * 0.1 + 1e-9, "l1 {l1}");
        assert!(l1 > 0.0);
    }

    #[test]
    fn zero_datum_stays_zero() {
        let u = mollify(&BVDatum::zero(1.0, 1.0).unwrap(), 0.2).unwrap();
        for x in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            assert_eq!(u.eval(x), 0.0);
            assert_eq!(u.d1(x), 0.0);
            assert_eq!(u.d3(x), 0.0);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let u = mollify(&step_datum(), 0.25).unwrap();
        let h = 1e-6;
        for x in [-1.1, -0.9, -0.1, 0.05, 0.8, 1.2] {
            let fd1 = (u.eval(x + h) - u.eval(x - h)) / (2.0 * h);
            assert!((fd1 - u.d1(x)).abs() < 1e-5, "d1 at {x}");
            let fd2 = (u.d1(x + h) - u.d1(x - h)) / (2.0 * h);
            assert!((fd2 - u.d2(x)).abs() < 1e-4, "d2 at {x}");
            let fd3 = (u.d2(x + h) - u.d2(x - h)) / (2.0 * h);
            assert!((fd3 - u.d3(x)).abs() * 0.25f64.powi(3) < 1e-3, "d3 at {x}");
        }
    }

    #[test]
    fn derivative_norms_respect_kernel_bounds() {
        let ubar = step_datum();
        let v = ubar.v();
        for delta in [0.05, 0.1, 0.4] {
            let u = mollify(&ubar, delta).unwrap();
            let n = 40_001;
            let (lo, hi) = u.support();
            let mut sup1 = 0.0f64;
            let mut sup2 = 0.0f64;
            let mut sup3 = 0.0f64;
            for i in 0..n {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                sup1 = sup1.max(u.d1(x).abs());
                sup2 = sup2.max(u.d2(x).abs());
                sup3 = sup3.max(u.d3(x).abs());
            }
            assert!(sup1 <= 315.0 * v / (256.0 * delta) + 1e-9);
            assert!(sup2 <= 1215.0 * v / (98.0 * 7f64.sqrt() * delta * delta) + 1e-9);
            assert!(sup3 <= 5085.0 * v / (224.0 * delta.powi(3)) + 1e-9);
        }
    }

    #[test]
    fn file_roundtrip() {
        let d = step_datum();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let back = BVDatum::from_reader(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.pieces(), d.pieces());
        assert_eq!(back.r(), 1.0);
        assert_eq!(back.v(), 4.0);
    }
}
