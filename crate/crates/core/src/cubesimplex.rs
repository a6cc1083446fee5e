//! Inductive decomposition of the unit d-cube into `2^{d-1} d!` simplices,
//! plus barycentric and volume utilities over them.
//!
//! Construction: the base interval is a single 1-simplex; for d >= 2 each
//! of the 2d faces is decomposed recursively as a (d-1)-cube and every
//! face simplex is coned to the cube center. Faces are enumerated as
//! (axis, side) in lexicographic order, so the leaf ordering follows
//! `k = h * 2^{d-2} (d-1)! + l`.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Practical dimension cap for the decomposition.
pub const MAX_DIM: usize = 6;

/// A d-simplex given by d+1 vertices, tagged with its position in the
/// inductive construction.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Simplex {
    /// d+1 vertices in R^d; the cone apex (cube center) is last.
    pub vertices: Vec<Vec<f64>>,
    /// Face index chosen at each recursion level, outermost first.
    pub face_path: Vec<usize>,
    /// Leaf index within the full decomposition ordering.
    pub leaf: usize,
}

impl Simplex {
    pub fn from_vertices(vertices: Vec<Vec<f64>>) -> Self {
        Simplex {
            vertices,
            face_path: Vec::new(),
            leaf: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.vertices.len() {
            for j in i + 1..self.vertices.len() {
                let d = dist(&self.vertices[i], &self.vertices[j]);
                best = best.max(d);
            }
        }
        best
    }

    /// Edge matrix [v_1 - v_{d+1}, ..., v_d - v_{d+1}].
    fn edge_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |r, c| self.vertices[c][r] - self.vertices[d][r])
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The full decomposition of `[0,1]^d`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Decomposition {
    pub dim: usize,
    pub simplices: Vec<Simplex>,
}

/// `2^{d-1} d!` as f64-safe usize (d <= MAX_DIM keeps this tiny).
pub fn expected_count(d: usize) -> usize {
    let fact: usize = (1..=d).product();
    (1usize << (d - 1)) * fact
}

/// Decomposes the unit d-cube by the inductive cone-over-faces process.
pub fn decompose_cube(d: usize) -> Result<Decomposition> {
    if d < 1 || d > MAX_DIM {
        return Err(Error::domain(format!(
            "dimension {d} outside supported range 1..={MAX_DIM}"
        )));
    }
    let mut simplices = build(d);
    for (k, s) in simplices.iter_mut().enumerate() {
        s.leaf = k;
    }
    // the count is structural; a mismatch means the construction is broken
    assert_eq!(
        simplices.len(),
        expected_count(d),
        "decomposition count mismatch for d = {d}"
    );
    Ok(Decomposition { dim: d, simplices })
}

fn build(d: usize) -> Vec<Simplex> {
    if d == 1 {
        return vec![Simplex {
            vertices: vec![vec![0.0], vec![1.0]],
            face_path: Vec::new(),
            leaf: 0,
        }];
    }
    let sub = build(d - 1);
    let center = vec![0.5f64; d];
    let mut out = Vec::with_capacity(2 * d * sub.len());
    for h in 0..2 * d {
        let axis = h / 2;
        let side = (h % 2) as f64;
        for s in &sub {
            let mut vertices: Vec<Vec<f64>> = s
                .vertices
                .iter()
                .map(|v| {
                    let mut w = Vec::with_capacity(d);
                    w.extend_from_slice(&v[..axis]);
                    w.push(side);
                    w.extend_from_slice(&v[axis..]);
                    w
                })
                .collect();
            vertices.push(center.clone());
            let mut face_path = Vec::with_capacity(s.face_path.len() + 1);
            face_path.push(h);
            face_path.extend_from_slice(&s.face_path);
            out.push(Simplex {
                vertices,
                face_path,
                leaf: 0,
            });
        }
    }
    out
}

/// Barycentric coordinates of `x` with respect to `simplex`, returned as
/// d+1 coefficients summing to 1 (the apex coefficient last).
///
/// `x` lies in the simplex iff every coefficient is `>= -tol` (and the
/// first d sum to `<= 1 + tol`).
pub fn barycentric(simplex: &Simplex, x: &[f64]) -> Result<Vec<f64>> {
    let d = simplex.dim();
    if x.len() != d {
        return Err(Error::domain(format!(
            "point has dimension {}, simplex has {d}",
            x.len()
        )));
    }
    let mat = simplex.edge_matrix();
    let lu = mat.lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() < 1e-250 {
        return Err(Error::SingularGeometry(format!(
            "simplex leaf {} is degenerate (det = {det:.3e})",
            simplex.leaf
        )));
    }
    let rhs = DMatrix::from_fn(d, 1, |r, _| x[r] - simplex.vertices[d][r]);
    let sol = lu.solve(&rhs).ok_or_else(|| {
        Error::SingularGeometry(format!("barycentric solve failed on leaf {}", simplex.leaf))
    })?;
    let mut alpha: Vec<f64> = (0..d).map(|i| sol[(i, 0)]).collect();
    let sum: f64 = alpha.iter().sum();
    alpha.push(1.0 - sum);
    Ok(alpha)
}

/// Membership test with tolerance, via barycentric coordinates.
pub fn simplex_contains(simplex: &Simplex, x: &[f64], tol: f64) -> Result<bool> {
    let alpha = barycentric(simplex, x)?;
    Ok(alpha.iter().all(|&a| a >= -tol))
}

/// `|det[v_1 - v_{d+1}, ..., v_d - v_{d+1}]| / d!`
pub fn simplex_volume(simplex: &Simplex) -> f64 {
    let d = simplex.dim();
    let det = simplex.edge_matrix().determinant();
    let fact: f64 = (1..=d).map(|k| k as f64).product();
    det.abs() / fact
}

/// Reconstructs the point from barycentric coordinates.
pub fn from_barycentric(simplex: &Simplex, alpha: &[f64]) -> Vec<f64> {
    let d = simplex.dim();
    let mut x = vec![0.0f64; d];
    for (j, v) in simplex.vertices.iter().enumerate() {
        for a in 0..d {
            x[a] += alpha[j] * v[a];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cayley-Menger volume, an independent route from pairwise distances.
    fn cayley_menger_volume(s: &Simplex) -> f64 {
        let d = s.dim();
        let n = d + 2;
        let mut m = DMatrix::zeros(n, n);
        for i in 1..n {
            m[(0, i)] = 1.0;
            m[(i, 0)] = 1.0;
        }
        for i in 0..d + 1 {
            for j in 0..d + 1 {
                let dij = dist(&s.vertices[i], &s.vertices[j]);
                m[(i + 1, j + 1)] = dij * dij;
            }
        }
        let det = m.determinant();
        let fact: f64 = (1..=d).map(|k| k as f64).product();
        let coeff = (-1.0f64).powi(d as i32 + 1) / (2.0f64.powi(d as i32) * fact * fact);
        (coeff * det).max(0.0).sqrt()
    }

    fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
        let mut sum = 0.0;
        let mut c = 0.0;
        for v in values {
            let y = v - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum
    }

    #[test]
    fn counts_match_formula() {
        for d in 1..=MAX_DIM {
            let dec = decompose_cube(d).unwrap();
            assert_eq!(dec.simplices.len(), expected_count(d), "d = {d}");
            for s in &dec.simplices {
                assert_eq!(s.vertices.len(), d + 1);
                for v in &s.vertices {
                    assert!(v.iter().all(|&c| (0.0..=1.0).contains(&c)));
                }
            }
        }
    }

    #[test]
    fn d1_is_the_unit_interval() {
        let dec = decompose_cube(1).unwrap();
        assert_eq!(dec.simplices.len(), 1);
        assert_eq!(dec.simplices[0].vertices, vec![vec![0.0], vec![1.0]]);
    }

    #[test]
    fn d2_gives_four_quarter_triangles() {
        let dec = decompose_cube(2).unwrap();
        assert_eq!(dec.simplices.len(), 4);
        for s in &dec.simplices {
            // shoelace oracle
            let (a, b, c) = (&s.vertices[0], &s.vertices[1], &s.vertices[2]);
            let area =
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
            assert!((area - 0.25).abs() < 1e-15);
            assert!((simplex_volume(s) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn d3_gives_24_equal_pieces() {
        let dec = decompose_cube(3).unwrap();
        assert_eq!(dec.simplices.len(), 24);
        for s in &dec.simplices {
            let v = simplex_volume(s);
            assert!((v - 1.0 / 24.0).abs() < 1e-14, "volume {v}");
            let cm = cayley_menger_volume(s);
            assert!((v - cm).abs() < 1e-12, "det {v} vs cayley-menger {cm}");
        }
    }

    #[test]
    fn volumes_partition_the_cube() {
        for d in 1..=MAX_DIM {
            let dec = decompose_cube(d).unwrap();
            let total = kahan_sum(dec.simplices.iter().map(simplex_volume));
            assert!((total - 1.0).abs() < 1e-12, "d = {d}: sum {total}");
        }
    }

    #[test]
    fn diameters_bounded_by_sqrt_d() {
        for d in 1..=4 {
            let dec = decompose_cube(d).unwrap();
            let cap = (d as f64).sqrt() * (1.0 + 1e-12);
            for s in &dec.simplices {
                assert!(s.diameter() <= cap);
            }
        }
    }

    #[test]
    fn barycentric_at_vertices_and_centroid() {
        let dec = decompose_cube(3).unwrap();
        let s = &dec.simplices[7];
        let alpha = barycentric(s, &s.vertices[0]).unwrap();
        assert!((alpha[0] - 1.0).abs() < 1e-12);
        for a in &alpha[1..] {
            assert!(a.abs() < 1e-12);
        }
        let centroid: Vec<f64> = (0..3)
            .map(|a| s.vertices.iter().map(|v| v[a]).sum::<f64>() / 4.0)
            .collect();
        let alpha = barycentric(s, &centroid).unwrap();
        for a in &alpha {
            assert!((a - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn barycentric_reconstruction_residual() {
        let dec = decompose_cube(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s = &dec.simplices[rng.gen_range(0..24)];
            let alpha = barycentric(s, &x).unwrap();
            let back = from_barycentric(s, &alpha);
            for a in 0..3 {
                assert!((back[a] - x[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_simplex_is_rejected_and_has_zero_volume() {
        let s = Simplex::from_vertices(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(simplex_volume(&s), 0.0);
        assert!(matches!(
            barycentric(&s, &[0.5, 0.5]),
            Err(Error::SingularGeometry(_))
        ));
    }

    #[test]
    fn random_points_are_covered_once() {
        for d in 1..=4 {
            let dec = decompose_cube(d).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let trials = if d <= 3 { 10_000 } else { 2_000 };
            for _ in 0..trials {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
                let mut loose = 0usize;
                let mut strict = 0usize;
                for s in &dec.simplices {
                    let alpha = barycentric(s, &x).unwrap();
                    if alpha.iter().all(|&a| a >= -1e-9) {
                        loose += 1;
                    }
                    if alpha.iter().all(|&a| a > 1e-7) {
                        strict += 1;
                    }
                }
                assert!(loose >= 1, "uncovered point {x:?} in d = {d}");
                assert!(strict <= 1, "double-covered interior point {x:?} in d = {d}");
            }
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        assert!(decompose_cube(0).is_err());
        assert!(decompose_cube(7).is_err());
    }
}
