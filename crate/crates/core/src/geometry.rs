//! Mirror maps, Bregman divergences and the mirror step over the unit simplex.
//!
//! Two geometries are supported:
//!
//! - [`MirrorMap::Euclidean`]: `psi(x) = 0.5 * |x|^2`. The mirror step is a
//!   subgradient step followed by Euclidean projection onto the simplex.
//! - [`MirrorMap::NegativeEntropy`]: `psi(x) = sum_j x_j log x_j`. The mirror
//!   step is the exponentiated-gradient update, which keeps iterates strictly
//!   inside the simplex.
//!
//! Both maps are 1-strongly convex in the Euclidean norm on the simplex. For
//! entropy this follows from Pinsker's inequality (`KL >= 0.5 |.|_1^2`) and
//! `|.|_2 <= |.|_1`.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};

/// Tolerance on `sum(x) == 1` for simplex membership.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Floor applied to initial points before running the entropic geometry.
pub const INTERIOR_FLOOR: f64 = 1e-15;

/// A dense coordinate vector in `R^d` with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    /// Wraps `coords` after checking that every entry is finite.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Invalid("point must have at least one coordinate".into()));
        }
        if let Some(j) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::Invalid(format!("coordinate {j} is not finite")));
        }
        Ok(Point(coords))
    }

    /// Wraps `coords` and additionally requires simplex membership.
    pub fn on_simplex(coords: Vec<f64>) -> Result<Self> {
        let p = Point::new(coords)?;
        if !p.is_feasible() {
            return Err(Error::Domain(format!(
                "point is not on the unit simplex (sum = {}, min = {})",
                p.0.iter().sum::<f64>(),
                p.0.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(p)
    }

    /// The barycenter `(1/d, ..., 1/d)`.
    pub fn uniform(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Point(vec![1.0 / dim as f64; dim])
    }

    /// A uniformly distributed point of the simplex (Dirichlet(1, ..., 1)).
    pub fn random_simplex<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        assert!(dim > 0, "dimension must be positive");
        let mut coords: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = coords.iter().sum();
        coords.iter_mut().for_each(|c| *c /= total);
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Nonnegative entries summing to one within [`SIMPLEX_TOL`].
    pub fn is_feasible(&self) -> bool {
        self.0.iter().all(|&c| c >= 0.0) && (self.0.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&c| c > 0.0)
    }

    /// Moves a simplex point into the interior: `max(x_j, 1e-15)` then renormalize.
    ///
    /// Points with every coordinate at least half the floor are returned
    /// unchanged, so clamping an already clamped point is a no-op.
    pub fn clamp_interior(&self) -> Point {
        if self.0.iter().all(|&c| c >= 0.5 * INTERIOR_FLOOR) {
            return self.clone();
        }
        let mut coords: Vec<f64> = self.0.iter().map(|&c| c.max(INTERIOR_FLOOR)).collect();
        let total: f64 = coords.iter().sum();
        coords.iter_mut().for_each(|c| *c /= total);
        Point(coords)
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Point) -> f64 {
        crate::linalg::dist2(&self.0, &other.0)
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Strongly convex generating function of a Bregman geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MirrorMap {
    Euclidean,
    NegativeEntropy,
}

impl MirrorMap {
    /// Strong-convexity modulus in the ambient 2-norm.
    pub fn mu(self) -> f64 {
        match self {
            MirrorMap::Euclidean => 1.0,
            MirrorMap::NegativeEntropy => 1.0,
        }
    }

    /// Whether iterates must stay strictly inside the simplex.
    pub fn needs_interior(self) -> bool {
        matches!(self, MirrorMap::NegativeEntropy)
    }

    /// Prepares a starting point for this geometry.
    pub fn admit(self, x: &Point) -> Point {
        match self {
            MirrorMap::Euclidean => x.clone(),
            MirrorMap::NegativeEntropy => x.clamp_interior(),
        }
    }

    /// `psi(x)`. Entropy uses the `0 log 0 = 0` convention.
    pub fn psi(self, x: &Point) -> Result<f64> {
        match self {
            MirrorMap::Euclidean => Ok(0.5 * dot(x.coords(), x.coords())),
            MirrorMap::NegativeEntropy => {
                check_nonnegative(x)?;
                Ok(x.coords().iter().map(|&c| xlogx(c)).sum())
            }
        }
    }

    /// `grad psi(x)`. Entropy requires every coordinate to be strictly positive.
    pub fn grad(self, x: &Point) -> Result<Vec<f64>> {
        match self {
            MirrorMap::Euclidean => Ok(x.coords().to_vec()),
            MirrorMap::NegativeEntropy => {
                check_interior(x)?;
                Ok(x.coords().iter().map(|&c| 1.0 + c.ln()).collect())
            }
        }
    }

    /// Bregman divergence `D(y, x) = psi(y) - psi(x) - <grad psi(x), y - x>`.
    ///
    /// Evaluated in closed form: `0.5 |y - x|^2` for the Euclidean map and the
    /// generalized relative entropy `sum y log(y/x) - y + x` for entropy.
    pub fn bregman(self, y: &Point, x: &Point) -> Result<f64> {
        check_dims(y, x)?;
        let d = match self {
            MirrorMap::Euclidean => {
                0.5 * y
                    .coords()
                    .iter()
                    .zip(x.coords())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            }
            MirrorMap::NegativeEntropy => {
                check_interior(x)?;
                check_nonnegative(y)?;
                y.coords()
                    .iter()
                    .zip(x.coords())
                    .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() - a + b } else { b })
                    .sum::<f64>()
            }
        };
        Ok(d.max(0.0))
    }

    /// One mirror step: `argmin_{z in simplex} <g, z - x> + D(z, x) / alpha`.
    pub fn step(self, x: &Point, g: &[f64], alpha: f64) -> Result<Point> {
        if g.len() != x.dim() {
            return Err(Error::DimensionMismatch { expected: x.dim(), got: g.len() });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Invalid(format!("step size must be positive, got {alpha}")));
        }
        if let Some(j) = g.iter().position(|c| !c.is_finite()) {
            return Err(Error::Invalid(format!("subgradient entry {j} is not finite")));
        }
        match self {
            MirrorMap::Euclidean => {
                let mut v = x.coords().to_vec();
                axpy(-alpha, g, &mut v);
                project_simplex(&v)
            }
            MirrorMap::NegativeEntropy => {
                check_interior(x)?;
                Ok(exponentiated_step(x.coords(), g, alpha))
            }
        }
    }
}

/// Entropic update `x_j exp(-alpha g_j) / sum_l x_l exp(-alpha g_l)`, evaluated
/// in the log domain with max-subtraction.
fn exponentiated_step(x: &[f64], g: &[f64], alpha: f64) -> Point {
    let logw: Vec<f64> = x.iter().zip(g).map(|(&xj, &gj)| xj.ln() - alpha * gj).collect();
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logw.iter().map(|&l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    for wj in w.iter_mut() {
        // Underflow would put the iterate on the boundary, where grad psi is undefined.
        *wj = (*wj / total).max(f64::MIN_POSITIVE);
    }
    Point(w)
}

/// Euclidean projection onto the unit simplex by sort-and-threshold.
///
/// Ties in the descending sort are broken by index. The output is renormalized
/// so that it sums to one up to rounding.
pub fn project_simplex(v: &[f64]) -> Result<Point> {
    if v.is_empty() {
        return Err(Error::Invalid("cannot project an empty vector".into()));
    }
    if let Some(j) = v.iter().position(|c| !c.is_finite()) {
        return Err(Error::Invalid(format!("coordinate {j} is not finite")));
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));

    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (rank, &j) in order.iter().enumerate() {
        cumsum += v[j];
        let candidate = (cumsum - 1.0) / (rank + 1) as f64;
        if v[j] - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    let mut z: Vec<f64> = v.iter().map(|&c| (c - tau).max(0.0)).collect();
    let total: f64 = z.iter().sum();
    z.iter_mut().for_each(|c| *c /= total);
    Ok(Point(z))
}

fn xlogx(c: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * c.ln()
    }
}

fn check_dims(a: &Point, b: &Point) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: b.dim(), got: a.dim() });
    }
    Ok(())
}

fn check_nonnegative(x: &Point) -> Result<()> {
    match x.coords().iter().position(|&c| c < 0.0) {
        Some(j) => Err(Error::Domain(format!("negative coordinate {j} outside the entropy domain"))),
        None => Ok(()),
    }
}

fn check_interior(x: &Point) -> Result<()> {
    match x.coords().iter().position(|&c| c <= 0.0) {
        Some(j) => Err(Error::Domain(format!(
            "coordinate {j} is on the boundary where the entropy gradient diverges"
        ))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    /// Brute-force projection: scan the 2-simplex (or 1-simplex) on a grid.
    fn grid_projection(v: &[f64], step: f64) -> Vec<f64> {
        let m = (1.0 / step).round() as usize;
        let mut best = (f64::INFINITY, vec![]);
        let mut consider = |z: Vec<f64>| {
            let d: f64 = z.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, z);
            }
        };
        match v.len() {
            2 => (0..=m).for_each(|i| {
                let a = i as f64 / m as f64;
                consider(vec![a, 1.0 - a]);
            }),
            3 => {
                for i in 0..=m {
                    for j in 0..=(m - i) {
                        let a = i as f64 / m as f64;
                        let b = j as f64 / m as f64;
                        consider(vec![a, b, (1.0 - a - b).max(0.0)]);
                    }
                }
            }
            _ => unreachable!(),
        }
        best.1
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn psi_values() {
        assert_eq!(MirrorMap::Euclidean.psi(&pt(&[1.0, 0.0])).unwrap(), 0.5);
        let h = MirrorMap::NegativeEntropy.psi(&pt(&[0.5, 0.5])).unwrap();
        assert!((h + LN2).abs() < 1e-15);
        assert_eq!(MirrorMap::NegativeEntropy.psi(&pt(&[1.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(
            MirrorMap::NegativeEntropy.psi(&pt(&[1.5, -0.5])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn psi_gradients() {
        assert_eq!(MirrorMap::Euclidean.grad(&pt(&[0.3, 0.7])).unwrap(), vec![0.3, 0.7]);
        let e = std::f64::consts::E;
        let g = MirrorMap::NegativeEntropy.grad(&pt(&[1.0 / e, 1.0 - 1.0 / e])).unwrap();
        assert!(g[0].abs() < 1e-15);
        let g = MirrorMap::NegativeEntropy.grad(&pt(&[0.5, 0.5])).unwrap();
        assert!(g.iter().all(|&c| (c - (1.0 - LN2)).abs() < 1e-15));
        assert!(matches!(
            MirrorMap::NegativeEntropy.grad(&pt(&[1.0, 0.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bregman_examples() {
        let x = pt(&[0.2, 0.3, 0.5]);
        for map in [MirrorMap::Euclidean, MirrorMap::NegativeEntropy] {
            assert_eq!(map.bregman(&x, &x).unwrap(), 0.0);
        }
        let d = MirrorMap::Euclidean.bregman(&pt(&[1.0, 0.0]), &pt(&[0.0, 1.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        // 0.25 log 0.5 + 0.75 log 1.5, evaluated to 20 digits separately.
        let kl = MirrorMap::NegativeEntropy.bregman(&pt(&[0.25, 0.75]), &pt(&[0.5, 0.5])).unwrap();
        assert!((kl - 0.130_812_035_941_136_96).abs() < 1e-15, "{kl}");
    }

    #[test]
    fn bregman_matches_definition() {
        let y = pt(&[0.1, 0.6, 0.3]);
        let x = pt(&[0.25, 0.25, 0.5]);
        for map in [MirrorMap::Euclidean, MirrorMap::NegativeEntropy] {
            let gx = map.grad(&x).unwrap();
            let diff: Vec<f64> = y.coords().iter().zip(x.coords()).map(|(a, b)| a - b).collect();
            let def = map.psi(&y).unwrap() - map.psi(&x).unwrap() - dot(&gx, &diff);
            assert!((map.bregman(&y, &x).unwrap() - def).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_examples() {
        let third = 1.0 / 3.0;
        let p = project_simplex(&[third, third, third]).unwrap();
        assert!(max_abs_diff(p.coords(), &[third; 3]) < 1e-15);
        let p = project_simplex(&[1.0, 0.2]).unwrap();
        assert!(max_abs_diff(p.coords(), &[0.9, 0.1]) < 1e-15);
        let p = project_simplex(&[-5.0, -5.0, -4.0]).unwrap();
        assert_eq!(p.coords(), &[0.0, 0.0, 1.0]);
        assert!(p.is_feasible());
        assert!(project_simplex(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn projection_examples_match_grid_oracle() {
        for v in [[1.0, 0.2].as_slice(), &[0.3, 0.5]] {
            let oracle = grid_projection(v, 1e-4);
            assert!(max_abs_diff(project_simplex(v).unwrap().coords(), &oracle) <= 1e-4);
        }
        let oracle = grid_projection(&[-5.0, -5.0, -4.0], 1e-3);
        assert!(max_abs_diff(&oracle, &[0.0, 0.0, 1.0]) < 1e-12);
    }

    #[test]
    fn tied_coordinates_project_symmetrically() {
        let p = project_simplex(&[2.0, 2.0, 2.0, -1.0]).unwrap();
        assert!(max_abs_diff(p.coords(), &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]) < 1e-15);
    }

    #[test]
    fn mirror_step_examples() {
        let x = pt(&[0.5, 0.5]);
        for map in [MirrorMap::Euclidean, MirrorMap::NegativeEntropy] {
            let z = map.step(&x, &[0.0, 0.0], 0.7).unwrap();
            assert!(max_abs_diff(z.coords(), x.coords()) < 1e-15);
        }
        let z = MirrorMap::NegativeEntropy.step(&x, &[LN2, 0.0], 1.0).unwrap();
        assert!(max_abs_diff(z.coords(), &[1.0 / 3.0, 2.0 / 3.0]) < 1e-15);
        let z = MirrorMap::Euclidean.step(&x, &[1.0, 0.0], 0.2).unwrap();
        assert!(max_abs_diff(z.coords(), &[0.4, 0.6]) < 1e-15);
        assert!(max_abs_diff(z.coords(), &grid_projection(&[0.3, 0.5], 1e-4)) <= 1e-4);
    }

    #[test]
    fn mirror_step_errors() {
        let edge = pt(&[1.0, 0.0]);
        assert!(matches!(
            MirrorMap::NegativeEntropy.step(&edge, &[1.0, 0.0], 0.1),
            Err(Error::Domain(_))
        ));
        assert!(MirrorMap::Euclidean.step(&edge, &[1.0, 0.0], 0.1).is_ok());
        assert!(MirrorMap::Euclidean.step(&edge, &[1.0], 0.1).is_err());
        assert!(MirrorMap::Euclidean.step(&edge, &[1.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn entropic_step_survives_huge_gradients() {
        let x = pt(&[0.25, 0.25, 0.5]);
        let z = MirrorMap::NegativeEntropy.step(&x, &[1e6, -1e6, 0.0], 1.0).unwrap();
        assert!(z.is_interior());
        assert!((z.coords()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clamp_interior_renormalizes() {
        let p = pt(&[1.0, 0.0, 0.0]).clamp_interior();
        assert!(p.is_interior() && p.is_feasible());
        assert_eq!(MirrorMap::NegativeEntropy.admit(&p), p);
        let q = pt(&[0.1, 0.2, 0.7]);
        assert_eq!(q.clamp_interior(), q);
    }

    fn simplex_point(dim: usize) -> impl Strategy<Value = Point> {
        proptest::collection::vec(1e-6f64..1.0, dim).prop_map(|mut v| {
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|c| *c /= s);
            Point(v)
        })
    }

    proptest! {
        #[test]
        fn step_minimizes_prox_objective(
            x in simplex_point(3),
            g in proptest::collection::vec(-5.0f64..5.0, 3),
            alpha in 0.01f64..2.0,
            probes in proptest::collection::vec(simplex_point(3), 50),
        ) {
            for map in [MirrorMap::Euclidean, MirrorMap::NegativeEntropy] {
                let objective = |z: &Point| {
                    let diff: Vec<f64> = z.coords().iter().zip(x.coords()).map(|(a, b)| a - b).collect();
                    dot(&g, &diff) + map.bregman(z, &x).unwrap() / alpha
                };
                let best = map.step(&x, &g, alpha).unwrap();
                prop_assert!(best.is_feasible());
                let at_best = objective(&best);
                for z in &probes {
                    prop_assert!(at_best <= objective(z) + 1e-8);
                }
            }
        }

        #[test]
        fn projection_is_idempotent(v in proptest::collection::vec(-3.0f64..3.0, 1..8)) {
            let p = project_simplex(&v).unwrap();
            prop_assert!(p.is_feasible());
            let q = project_simplex(p.coords()).unwrap();
            prop_assert!(max_abs_diff(p.coords(), q.coords()) < 1e-14);
        }
    }
}
