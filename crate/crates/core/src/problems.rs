//! Robust l1 regression over the simplex: `minimize |Gx - h|_1` s.t. `x` in the simplex.
//!
//! The objective splits by rows, `f(x) = sum_i |<g_i, x> - h_i|`, which is how
//! the distributed solver hands one term to each agent.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::linalg::{axpy, dot, norm2};
use crate::textio::{fmt_f64, parse_f64s};
use crate::Rng64;

/// Data `(G, h)` of an l1 regression instance plus its Lipschitz bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    rows: usize,
    dim: usize,
    g: Vec<f64>,
    h: Vec<f64>,
    row_lipschitz: Vec<f64>,
    lipschitz: f64,
}

impl ProblemInstance {
    /// Builds an instance from row-major `g` (`rows x dim`) and targets `h`.
    pub fn from_flat(rows: usize, dim: usize, g: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if rows < 1 {
            return Err(Error::Invalid("instance needs at least one row".into()));
        }
        if dim < 2 {
            return Err(Error::Dimension { dim, reason: "the simplex needs at least two coordinates" });
        }
        if g.len() != rows * dim {
            return Err(Error::DimensionMismatch { expected: rows * dim, got: g.len() });
        }
        if h.len() != rows {
            return Err(Error::DimensionMismatch { expected: rows, got: h.len() });
        }
        if g.iter().chain(&h).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("instance data must be finite".into()));
        }
        let row_lipschitz: Vec<f64> = g.chunks_exact(dim).map(norm2).collect();
        let lipschitz = row_lipschitz.iter().sum();
        Ok(ProblemInstance { rows, dim, g, h, row_lipschitz, lipschitz })
    }

    pub fn from_rows(g: Vec<Vec<f64>>, h: Vec<f64>) -> Result<Self> {
        let rows = g.len();
        let dim = g.first().map_or(0, Vec::len);
        if let Some(bad) = g.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        Self::from_flat(rows, dim, g.into_iter().flatten().collect(), h)
    }

    /// Entries of `G` then `h`, i.i.d. uniform on `[0, 1)`, drawn from a ChaCha8
    /// stream seeded with `seed`.
    pub fn generate(rows: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = Rng64::seed_from_u64(seed);
        let g: Vec<f64> = (0..rows * dim).map(|_| rng.random::<f64>()).collect();
        let h: Vec<f64> = (0..rows).map(|_| rng.random::<f64>()).collect();
        Self::from_flat(rows, dim, g, h)
    }

    /// Same data with every row replaced by copies of row `row`, `copies` times.
    pub fn replicate_row(&self, row: usize, copies: usize) -> Result<Self> {
        self.check_row(row)?;
        let g = self.row(row).repeat(copies);
        Self::from_flat(copies, self.dim, g, vec![self.h[row]; copies])
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.g[i * self.dim..(i + 1) * self.dim]
    }

    pub fn targets(&self) -> &[f64] {
        &self.h
    }

    /// `L = sum_i |g_i|_2`, a Lipschitz constant of `f` on all of `R^d`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `L_i = |g_i|_2`, the Lipschitz constant of the `i`-th term.
    pub fn row_lipschitz(&self, i: usize) -> f64 {
        self.row_lipschitz[i]
    }

    pub fn max_row_lipschitz(&self) -> f64 {
        self.row_lipschitz.iter().cloned().fold(0.0, f64::max)
    }

    /// Lipschitz constant of the partial objective over `rows`.
    pub fn block_lipschitz(&self, rows: Range<usize>) -> f64 {
        self.row_lipschitz[rows].iter().sum()
    }

    pub fn residual(&self, i: usize, x: &Point) -> f64 {
        dot(self.row(i), x.coords()) - self.h[i]
    }

    /// `f(x) = sum_i |<g_i, x> - h_i|`
    pub fn objective(&self, x: &Point) -> f64 {
        (0..self.rows).map(|i| self.residual(i, x).abs()).sum()
    }

    /// `sum_i sgn(r_i) g_i` with `sgn(0) = 0`.
    pub fn subgradient(&self, x: &Point) -> Vec<f64> {
        self.block_subgradient(0..self.rows, x)
    }

    /// Subgradient of the single term `|<g_i, x> - h_i|`.
    pub fn row_subgradient(&self, i: usize, x: &Point) -> Result<Vec<f64>> {
        self.check_row(i)?;
        let s = sign(self.residual(i, x));
        Ok(self.row(i).iter().map(|&gij| s * gij).collect())
    }

    /// Subgradient of the partial objective `sum_{i in rows} |<g_i, x> - h_i|`.
    pub fn block_subgradient(&self, rows: Range<usize>, x: &Point) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for i in rows {
            let s = sign(self.residual(i, x));
            if s != 0.0 {
                axpy(s, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn block_objective(&self, rows: Range<usize>, x: &Point) -> f64 {
        rows.map(|i| self.residual(i, x).abs()).sum()
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.rows {
            return Err(Error::Index { index: i, len: self.rows });
        }
        Ok(())
    }

    /// Plain-text form: `"N d"`, then `N` rows of `G`, then one row holding `h`.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.dim);
        for i in 0..self.rows {
            push_row(&mut s, self.row(i));
        }
        push_row(&mut s, &self.h);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty instance file".into() })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: hline, msg: format!("bad header: {e}") })?;
        let [rows, dim] = dims[..] else {
            return Err(Error::Parse { line: hline, msg: "header must be \"N d\"".into() });
        };
        let mut g = Vec::with_capacity(rows * dim);
        for _ in 0..rows {
            let (n, l) = lines.next().ok_or(Error::Parse { line: hline, msg: "missing G rows".into() })?;
            let row = parse_f64s(l, n)?;
            if row.len() != dim {
                return Err(Error::Parse { line: n, msg: format!("expected {dim} entries, found {}", row.len()) });
            }
            g.extend(row);
        }
        let (n, l) = lines.next().ok_or(Error::Parse { line: hline, msg: "missing h row".into() })?;
        let h = parse_f64s(l, n)?;
        if h.len() != rows {
            return Err(Error::Parse { line: n, msg: format!("expected {rows} targets, found {}", h.len()) });
        }
        if let Some((n, _)) = lines.next() {
            return Err(Error::Parse { line: n, msg: "trailing data after h".into() });
        }
        Self::from_flat(rows, dim, g, h)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn push_row(s: &mut String, row: &[f64]) {
    for (j, v) in row.iter().enumerate() {
        if j > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{}", fmt_f64(*v));
    }
    s.push('\n');
}

fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Best point found by the grid oracle, with its certified accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceOptimum {
    pub x_star: Point,
    pub f_star: f64,
    /// `f_star - min f <= accuracy`.
    pub accuracy: f64,
}

impl ReferenceOptimum {
    /// Wraps an externally known point, e.g. an exact fit.
    pub fn at(p: &ProblemInstance, x_star: Point) -> Self {
        let f_star = p.objective(&x_star);
        ReferenceOptimum { x_star, f_star, accuracy: 0.0 }
    }
}

/// Smallest local cell size reached by [`reference_optimum`].
pub const REFINE_CELL: f64 = 1e-7;

/// Exhaustive simplex grid search followed by shrinking local grids.
///
/// Exponential in `d`, so only `d <= 4` is accepted. `grid_step` must be at
/// most `1e-2`.
pub fn reference_optimum(p: &ProblemInstance, grid_step: f64) -> Result<ReferenceOptimum> {
    let d = p.dim();
    if d > 4 {
        return Err(Error::Dimension { dim: d, reason: "grid reference optimum supports d <= 4" });
    }
    if !(grid_step > 0.0 && grid_step <= 1e-2) {
        return Err(Error::Invalid(format!("grid_step must lie in (0, 1e-2], got {grid_step}")));
    }
    let m = (1.0 / grid_step).round() as usize;
    let mut best_f = f64::INFINITY;
    let mut best = vec![0.0; d];
    let mut counts = vec![0usize; d];
    let mut x = vec![0.0; d];
    for_each_composition(m, &mut counts, 0, &mut |c| {
        for (xj, &cj) in x.iter_mut().zip(c) {
            *xj = cj as f64 / m as f64;
        }
        let f = objective_raw(p, &x);
        if f < best_f {
            best_f = f;
            best.copy_from_slice(&x);
        }
    });

    // Local refinement in the coordinates x_0..x_{d-2}; the last coordinate
    // absorbs the remainder so candidates stay on the affine hull.
    const RADIUS: i64 = 2;
    let free = d - 1;
    let mut h = 1.0 / m as f64;
    let mut offset = vec![0i64; free];
    let mut cand = vec![0.0; d];
    loop {
        loop {
            let mut moved = false;
            let center = best.clone();
            offset.iter_mut().for_each(|o| *o = -RADIUS);
            loop {
                let mut rest = 1.0;
                for j in 0..free {
                    cand[j] = center[j] + h * offset[j] as f64;
                    rest -= cand[j];
                }
                cand[free] = rest;
                if cand.iter().all(|&c| c >= 0.0) {
                    let f = objective_raw(p, &cand);
                    if f < best_f {
                        best_f = f;
                        best.copy_from_slice(&cand);
                        moved = true;
                    }
                }
                if !next_offset(&mut offset, RADIUS) {
                    break;
                }
            }
            if !moved {
                break;
            }
        }
        if h < REFINE_CELL {
            break;
        }
        h *= 0.5;
    }
    let x_star = Point::on_simplex(best)?;
    let f_star = p.objective(&x_star);
    let diameter = h * RADIUS as f64 * (2.0 * free as f64).sqrt();
    Ok(ReferenceOptimum { x_star, f_star, accuracy: p.lipschitz() * diameter })
}

fn objective_raw(p: &ProblemInstance, x: &[f64]) -> f64 {
    (0..p.n_rows()).map(|i| (dot(p.row(i), x) - p.targets()[i]).abs()).sum()
}

fn for_each_composition(remaining: usize, counts: &mut [usize], at: usize, visit: &mut impl FnMut(&[usize])) {
    if at + 1 == counts.len() {
        counts[at] = remaining;
        visit(counts);
        return;
    }
    for c in 0..=remaining {
        counts[at] = c;
        for_each_composition(remaining - c, counts, at + 1, visit);
    }
}

fn next_offset(offset: &mut [i64], radius: i64) -> bool {
    for o in offset.iter_mut() {
        if *o < radius {
            *o += 1;
            return true;
        }
        *o = -radius;
    }
    false
}

/// Uniformly random simplex point drawn from its own seeded stream.
pub fn random_start(dim: usize, seed: u64) -> Point {
    let mut rng = Rng64::seed_from_u64(seed);
    Point::random_simplex(dim, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity2(h: [f64; 2]) -> ProblemInstance {
        ProblemInstance::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]], h.to_vec()).unwrap()
    }

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = ProblemInstance::generate(100, 10, 7).unwrap();
        let b = ProblemInstance::generate(100, 10, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n_rows(), a.dim()), (100, 10));
        assert!(a.g.iter().chain(&a.h).all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, ProblemInstance::generate(100, 10, 8).unwrap());
    }

    #[test]
    fn single_row_lipschitz() {
        let p = ProblemInstance::generate(1, 2, 3).unwrap();
        assert_eq!(p.lipschitz(), norm2(p.row(0)));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ProblemInstance::from_flat(0, 2, vec![], vec![]).is_err());
        assert!(ProblemInstance::from_flat(1, 1, vec![1.0], vec![0.0]).is_err());
        assert!(ProblemInstance::from_rows(vec![vec![1.0, 0.0], vec![1.0]], vec![0.0, 0.0]).is_err());
        assert!(ProblemInstance::from_flat(1, 2, vec![f64::NAN, 0.0], vec![0.0]).is_err());
    }

    #[test]
    fn objective_examples() {
        let x = pt(&[0.3, 0.7]);
        assert!((identity2([0.0, 0.0]).objective(&x) - 1.0).abs() < 1e-15);
        assert_eq!(identity2([0.3, 0.7]).objective(&x), 0.0);
        let p = ProblemInstance::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec![0.0, 1.0]).unwrap();
        assert_eq!(p.objective(&pt(&[0.5, 0.5])), 1.0);
    }

    #[test]
    fn subgradient_examples() {
        let x = pt(&[0.3, 0.7]);
        assert_eq!(identity2([0.0, 0.0]).subgradient(&x), vec![1.0, 1.0]);
        assert_eq!(identity2([0.3, 0.7]).subgradient(&x), vec![0.0, 0.0]);
        assert_eq!(identity2([1.0, 0.0]).subgradient(&x), vec![-1.0, 1.0]);
    }

    #[test]
    fn row_subgradient_examples() {
        let x = pt(&[0.3, 0.7]);
        let p = identity2([0.0, 0.0]);
        assert_eq!(p.row_subgradient(0, &x).unwrap(), vec![1.0, 0.0]);
        assert_eq!(identity2([0.3, 0.7]).row_subgradient(1, &x).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(p.row_subgradient(2, &x), Err(Error::Index { index: 2, len: 2 })));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let p = ProblemInstance::generate(7, 3, 11).unwrap();
        assert_eq!(ProblemInstance::from_text(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn text_errors_carry_line_numbers() {
        let err = ProblemInstance::from_text("2 2\n1 0\n0 x\n0 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = ProblemInstance::from_text("2 2\n1 0\n0 1\n0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        assert!(ProblemInstance::from_text("").is_err());
    }

    #[test]
    fn reference_optimum_closed_forms() {
        // f = x_1 + (1 - x_2) = 2 x_1 on the simplex.
        let r = reference_optimum(&identity2([0.0, 1.0]), 1e-3).unwrap();
        assert_eq!(r.x_star.coords(), &[0.0, 1.0]);
        assert_eq!(r.f_star, 0.0);
        let r = reference_optimum(&identity2([0.3, 0.7]), 1e-3).unwrap();
        assert!(r.f_star < 1e-6, "{}", r.f_star);
        assert!(r.x_star.distance(&pt(&[0.3, 0.7])) < 1e-6);
    }

    #[test]
    fn reference_optimum_rejects_large_dims() {
        let p = ProblemInstance::generate(3, 5, 1).unwrap();
        assert!(matches!(reference_optimum(&p, 1e-2), Err(Error::Dimension { dim: 5, .. })));
        let p = ProblemInstance::generate(3, 3, 1).unwrap();
        assert!(reference_optimum(&p, 0.1).is_err());
    }

    #[test]
    fn reference_optimum_dominates_random_probes() {
        let p = ProblemInstance::generate(20, 3, 5).unwrap();
        let r = reference_optimum(&p, 1e-2).unwrap();
        assert!((r.f_star - p.objective(&r.x_star)).abs() <= 1e-12);
        let mut rng = Rng64::seed_from_u64(99);
        for _ in 0..1000 {
            let z = Point::random_simplex(3, &mut rng);
            assert!(r.f_star <= p.objective(&z));
        }
    }

    fn instance_and_points() -> impl Strategy<Value = (ProblemInstance, Point, Point)> {
        (any::<u64>(), 1usize..30, 2usize..6).prop_flat_map(|(seed, n, d)| {
            let p = ProblemInstance::generate(n, d, seed).unwrap();
            (Just(p), any::<u64>(), any::<u64>())
                .prop_map(move |(p, a, b)| (p, random_start(d, a), random_start(d, b)))
        })
    }

    proptest! {
        #[test]
        fn subgradient_inequality((p, x, z) in instance_and_points()) {
            let g = p.subgradient(&x);
            let diff: Vec<f64> = z.coords().iter().zip(x.coords()).map(|(a, b)| a - b).collect();
            prop_assert!(p.objective(&z) >= p.objective(&x) + dot(&g, &diff) - 1e-10);
        }

        #[test]
        fn lipschitz_bounds((p, x, z) in instance_and_points()) {
            prop_assert!((p.objective(&x) - p.objective(&z)).abs() <= p.lipschitz() * x.distance(&z) + 1e-10);
            prop_assert!(norm2(&p.subgradient(&x)) <= p.lipschitz() + 1e-12);
        }

        #[test]
        fn row_subgradients_sum_to_full((p, x, _z) in instance_and_points()) {
            let mut sum = vec![0.0; p.dim()];
            for i in 0..p.n_rows() {
                let gi = p.row_subgradient(i, &x).unwrap();
                if gi.iter().any(|&c| c != 0.0) {
                    axpy(1.0, &gi, &mut sum);
                }
            }
            prop_assert_eq!(sum, p.subgradient(&x));
        }
    }
}
