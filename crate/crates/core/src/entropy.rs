//! Covering numbers and metric entropy of finite unions of grid cells.
//!
//! The covering routine covers the full union of cells (not just their
//! centers): cells are refined into subcells whose diameter fits the
//! requested covering sets, and subcell centers are covered greedily with
//! a deterministic lexicographic seed rule. Greedy covers overshoot the
//! optimal count, which is the safe direction for every bound built on
//! top of them.

use std::collections::{BTreeSet, HashMap};

use crate::{Error, Result};

/// Hard cap on refined subcells per covering query.
const SUBCELL_BUDGET: usize = 1 << 22;

/// A set of marked cells of side `ell` inside the unit cube `[0,1]^d`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CellSet {
    dim: usize,
    side: f64,
    indices: BTreeSet<Vec<u64>>,
}

impl CellSet {
    pub fn new(dim: usize, side: f64, indices: impl IntoIterator<Item = Vec<u64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("cell set dimension must be positive"));
        }
        if !(side > 0.0 && side <= 1.0) {
            return Err(Error::domain(format!("cell side {side} outside (0, 1]")));
        }
        let k = (1.0 / side).round() as u64;
        let set: BTreeSet<Vec<u64>> = indices.into_iter().collect();
        for idx in &set {
            if idx.len() != dim {
                return Err(Error::domain("cell index arity mismatch"));
            }
            if idx.iter().any(|&i| i >= k) {
                return Err(Error::domain(format!(
                    "cell index {idx:?} outside [0, {k})^{dim}"
                )));
            }
        }
        Ok(CellSet {
            dim,
            side,
            indices: set,
        })
    }

    pub fn empty(dim: usize, side: f64) -> Result<Self> {
        CellSet::new(dim, side, std::iter::empty())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn cells_per_axis(&self) -> u64 {
        (1.0 / self.side).round() as u64
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: &[u64]) -> bool {
        self.indices.contains(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<u64>> {
        self.indices.iter()
    }
}

/// Upper bound on the covering number of the cell union by sets of
/// diameter `2 * radius`.
pub fn covering_number(cells: &CellSet, radius: f64) -> Result<usize> {
    if !(radius > 0.0) {
        return Err(Error::domain(format!("radius {radius} must be positive")));
    }
    if cells.is_empty() {
        return Ok(0);
    }
    let d = cells.dim;
    let sqrt_d = (d as f64).sqrt();

    // refine so a subcell fits inside one covering set
    let mut levels = 0u32;
    let mut sub = cells.side;
    while sub * sqrt_d > 2.0 * radius {
        levels += 1;
        sub *= 0.5;
        if levels > 40 {
            return Err(Error::domain(
                "covering radius too small relative to the cell side",
            ));
        }
    }
    let per_cell = 1usize << (levels as usize * d);
    let total = cells.len().saturating_mul(per_cell);
    if total > SUBCELL_BUDGET {
        return Err(Error::domain(format!(
            "covering refinement needs {total} subcells, over the budget"
        )));
    }

    // subcell centers, lexicographically sorted
    let split = 1u64 << levels;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(total);
    for idx in cells.iter() {
        let mut sc = vec![0u64; d];
        loop {
            centers.push(
                (0..d)
                    .map(|a| ((idx[a] * split + sc[a]) as f64 + 0.5) * sub)
                    .collect(),
            );
            let mut a = d;
            loop {
                if a == 0 {
                    break;
                }
                a -= 1;
                sc[a] += 1;
                if sc[a] < split {
                    break;
                }
                sc[a] = 0;
            }
            if sc.iter().all(|&x| x == 0) {
                break;
            }
        }
    }
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    centers.dedup();

    // a seed ball of radius `radius` covers subcells whose center lies
    // within `radius - sub*sqrt(d)/2` of it
    let reach = (radius - sub * sqrt_d / 2.0).max(0.0);

    // spatial bins to find neighbors
    let bin = sub.max(reach);
    let key = |c: &[f64]| -> Vec<i64> { c.iter().map(|&x| (x / bin).floor() as i64).collect() };
    let mut bins: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, c) in centers.iter().enumerate() {
        bins.entry(key(c)).or_default().push(i);
    }
    let span = (reach / bin).ceil() as i64 + 1;

    let mut covered = vec![false; centers.len()];
    let mut count = 0usize;
    for i in 0..centers.len() {
        if covered[i] {
            continue;
        }
        count += 1;
        let seed = centers[i].clone();
        let k0 = key(&seed);
        let mut offsets = vec![0i64; d];
        let mut stack = vec![-span; d];
        // enumerate neighbor bins in a (2*span+1)^d block
        let mut done = false;
        while !done {
            offsets.copy_from_slice(&stack);
            let nb: Vec<i64> = k0.iter().zip(&offsets).map(|(a, b)| a + b).collect();
            if let Some(list) = bins.get(&nb) {
                for &j in list {
                    if !covered[j] {
                        let d2: f64 = centers[j]
                            .iter()
                            .zip(&seed)
                            .map(|(x, y)| (x - y) * (x - y))
                            .sum();
                        if d2.sqrt() <= reach {
                            covered[j] = true;
                        }
                    }
                }
            }
            let mut a = d;
            loop {
                if a == 0 {
                    done = true;
                    break;
                }
                a -= 1;
                stack[a] += 1;
                if stack[a] <= span {
                    break;
                }
                stack[a] = -span;
            }
        }
    }
    Ok(count)
}

/// `log2` of the covering number; `-inf` for the empty set.
pub fn epsilon_entropy(cells: &CellSet, radius: f64) -> Result<f64> {
    let n = covering_number(cells, radius)?;
    if n == 0 {
        Ok(f64::NEG_INFINITY)
    } else {
        Ok((n as f64).log2())
    }
}

/// `min { (4 l)^d * 2^{H_l(marked)}, 1 }` evaluated with covering radius
/// `ell_of_eps`.
pub fn lambda_epsilon(marked: &CellSet, ell_of_eps: f64) -> Result<f64> {
    if !(ell_of_eps > 0.0) {
        return Err(Error::domain(format!(
            "ell(eps) = {ell_of_eps} must be positive"
        )));
    }
    let n = covering_number(marked, ell_of_eps)?;
    let v = (4.0 * ell_of_eps).powi(marked.dim() as i32) * n as f64;
    Ok(v.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cell_1d() -> CellSet {
        CellSet::new(1, 1.0, [vec![0u64]]).unwrap()
    }

    #[test]
    fn interval_needs_two_halves() {
        assert_eq!(covering_number(&unit_cell_1d(), 0.25).unwrap(), 2);
    }

    #[test]
    fn isolated_cells_need_one_each() {
        // cells 0, 4, 8 of side 1/16: gaps far beyond 2 * radius
        let cells = CellSet::new(1, 1.0 / 16.0, [vec![0u64], vec![4], vec![8]]).unwrap();
        assert_eq!(covering_number(&cells, 0.05).unwrap(), 3);
    }

    #[test]
    fn empty_set_covers_with_zero() {
        let cells = CellSet::empty(2, 0.25).unwrap();
        assert_eq!(covering_number(&cells, 0.1).unwrap(), 0);
        assert_eq!(epsilon_entropy(&cells, 0.1).unwrap(), f64::NEG_INFINITY);
        assert_eq!(lambda_epsilon(&cells, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_two_and_one() {
        assert_eq!(epsilon_entropy(&unit_cell_1d(), 0.25).unwrap(), 1.0);
        assert_eq!(epsilon_entropy(&unit_cell_1d(), 0.5).unwrap(), 0.0);
    }

    /// Exhaustive greedy oracle over a tiny instance, written independently.
    #[test]
    fn full_square_matches_greedy_oracle() {
        let k = 4u64;
        let all: Vec<Vec<u64>> = (0..k)
            .flat_map(|i| (0..k).map(move |j| vec![i, j]))
            .collect();
        let cells = CellSet::new(2, 0.25, all).unwrap();
        let n = covering_number(&cells, 0.25).unwrap();

        // oracle: refine to subcell side s with s*sqrt(2) <= 1/2 -> s = 1/4,
        // reach = 1/4 - s*sqrt(2)/2; brute-force greedy on sorted centers.
        let s = 0.25f64;
        let reach = 0.25 - s * (2.0f64).sqrt() / 2.0;
        let mut centers: Vec<(f64, f64)> = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i as f64 * s + s / 2.0, j as f64 * s + s / 2.0)))
            .collect();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut covered = vec![false; centers.len()];
        let mut oracle = 0;
        for i in 0..centers.len() {
            if covered[i] {
                continue;
            }
            oracle += 1;
            for j in 0..centers.len() {
                let dx = centers[j].0 - centers[i].0;
                let dy = centers[j].1 - centers[i].1;
                if (dx * dx + dy * dy).sqrt() <= reach {
                    covered[j] = true;
                }
            }
        }
        assert_eq!(n, oracle);
        let h = epsilon_entropy(&cells, 0.25).unwrap();
        assert!((h - (oracle as f64).log2()).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_radius_and_inclusion() {
        let small = CellSet::new(1, 1.0 / 8.0, [vec![1u64], vec![2]]).unwrap();
        let large = CellSet::new(1, 1.0 / 8.0, [vec![1u64], vec![2], vec![5], vec![6]]).unwrap();
        let radii = [0.03, 0.06, 0.12, 0.25, 0.5];
        for w in radii.windows(2) {
            assert!(
                covering_number(&large, w[0]).unwrap() >= covering_number(&large, w[1]).unwrap()
            );
        }
        for &r in &radii {
            assert!(covering_number(&small, r).unwrap() <= covering_number(&large, r).unwrap());
        }
    }

    #[test]
    fn ball_cover_scaling_sanity() {
        // cells approximating a ball of radius cap_r around the center
        let k = 16u64;
        let side = 1.0 / k as f64;
        let cap_r = 0.3;
        let mut idx = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let c = [
                    (i as f64 + 0.5) * side - 0.5,
                    (j as f64 + 0.5) * side - 0.5,
                ];
                if (c[0] * c[0] + c[1] * c[1]).sqrt() <= cap_r {
                    idx.push(vec![i, j]);
                }
            }
        }
        let cells = CellSet::new(2, side, idx).unwrap();
        for r in [0.1, 0.15, 0.3] {
            let n = covering_number(&cells, r).unwrap();
            let cap = ((cap_r / r).ceil() + 1.0).powi(2);
            assert!(
                (n as f64) <= cap,
                "covering {n} exceeds scaling cap {cap} at r = {r}"
            );
        }
    }

    #[test]
    fn lambda_examples() {
        // single cell of side 1/8, radius 1/8 -> min{ (1/2) * 1, 1 } = 1/2
        let one = CellSet::new(1, 0.125, [vec![3u64]]).unwrap();
        assert!((lambda_epsilon(&one, 0.125).unwrap() - 0.5).abs() < 1e-15);

        // clamp at 1
        let k = 8u64;
        let all: Vec<Vec<u64>> = (0..k).map(|i| vec![i]).collect();
        let full = CellSet::new(1, 0.125, all).unwrap();
        assert_eq!(lambda_epsilon(&full, 0.125).unwrap(), 1.0);
    }

    #[test]
    fn lambda_rejects_nonpositive_ell() {
        let one = CellSet::new(1, 0.125, [vec![3u64]]).unwrap();
        assert!(lambda_epsilon(&one, 0.0).is_err());
    }
}
