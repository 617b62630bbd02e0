//! Synchronous distributed mirror descent.
//!
//! Every round each agent first averages its neighbours' iterates,
//! `v_i = sum_j A_ij x_j`, using the previous round's values only, and then
//! takes a mirror step from `v_i` along a subgradient of its own term `f_i`
//! evaluated at `v_i`. Mixing acts as a barrier, so agent steps can run in
//! parallel without changing a single bit of the result.
//!
//! Monitors:
//!
//! - step bound: `|v_i - x_i^+| <= alpha L_i / mu` for every agent,
//! - contraction: `|P X_{k+1}|_2 <= sigma2 |P X_k|_2 + alpha N L / mu`,
//!   with `P = I - (1/N) 1 1^T` and `L = max_i L_i`.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{MirrorMap, Point};
use crate::linalg::{dist2, top_eigenvalue_psd, start_vector};
use crate::network::MixingMatrix;
use crate::problems::{ProblemInstance, ReferenceOptimum};
use crate::solver_central::{Decimation, StepSchedule};
use crate::trace::{render, DIST_HEADER};

pub const CONTRACTION_SLACK_TOL: f64 = -1e-9;
pub const STEP_BOUND_SLACK_TOL: f64 = -1e-10;

/// One agent's local iterate and its most recent mixed iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub x: Point,
    pub v: Point,
}

impl AsRef<[f64]> for AgentState {
    fn as_ref(&self) -> &[f64] {
        self.x.coords()
    }
}

/// Which data rows each agent owns.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Assignment {
    /// Agent `i` owns row `i`; requires as many agents as rows.
    #[default]
    OneRowPerAgent,
    /// Agent `i` owns the rows in `blocks[i]`; blocks must tile `0..rows` in order.
    Blocks(Vec<Range<usize>>),
}

impl Assignment {
    /// Splits `rows` into `agents` contiguous blocks whose sizes differ by at most one.
    pub fn contiguous(rows: usize, agents: usize) -> Result<Self> {
        if agents == 0 || agents > rows {
            return Err(Error::Invalid(format!("cannot split {rows} rows across {agents} agents")));
        }
        let base = rows / agents;
        let extra = rows % agents;
        let mut start = 0;
        let blocks = (0..agents)
            .map(|i| {
                let len = base + usize::from(i < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Ok(Assignment::Blocks(blocks))
    }

    fn resolve(&self, rows: usize, agents: usize) -> Result<Vec<Range<usize>>> {
        match self {
            Assignment::OneRowPerAgent => {
                if rows != agents {
                    return Err(Error::Invalid(format!(
                        "one row per agent needs {rows} agents, mixing matrix has {agents}"
                    )));
                }
                Ok((0..rows).map(|i| i..i + 1).collect())
            }
            Assignment::Blocks(blocks) => {
                if blocks.len() != agents {
                    return Err(Error::Invalid(format!("{} row blocks for {agents} agents", blocks.len())));
                }
                let mut next = 0;
                for b in blocks {
                    if b.start != next || b.end <= b.start {
                        return Err(Error::Invalid(format!("row blocks must tile 0..{rows} in order")));
                    }
                    next = b.end;
                }
                if next != rows {
                    return Err(Error::Invalid(format!("row blocks cover 0..{next}, instance has {rows} rows")));
                }
                Ok(blocks.clone())
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct DistOptions {
    pub monitor: bool,
    /// Run agent steps on the rayon pool. Results are identical either way.
    pub parallel: bool,
    pub decimation: Decimation,
    pub assignment: Assignment,
}

/// One recorded round; `NaN` marks quantities that need a reference or the monitor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistRecord {
    pub k: usize,
    pub alpha: f64,
    pub f_centroid: f64,
    pub f_gap: f64,
    pub consensus_error: f64,
    pub max_pairwise: f64,
    pub contraction_slack: f64,
}

#[derive(Clone, Debug)]
pub struct DistTrace {
    pub records: Vec<DistRecord>,
    pub rounds: usize,
    pub final_states: Vec<AgentState>,
    pub final_centroid: Point,
    pub final_f_centroid: f64,
    pub final_gap: f64,
    pub final_consensus_error: f64,
    pub final_max_pairwise: f64,
    pub contraction_violations: usize,
    pub min_contraction_slack: f64,
    pub step_bound_violations: usize,
    pub min_step_bound_slack: f64,
    /// Minimum over `K` of the right side minus the left side of
    /// `sum_i [D(z,x_i^{K+1}) - D(z,x_i^0)] + sum_k alpha_k (f(xbar_k) - f(z))
    ///  <= L sum_k alpha_k cons_k + N L^2/(2mu) sum_k alpha_k^2`.
    pub telescoped_min_slack: f64,
}

impl DistTrace {
    pub fn to_csv(&self) -> String {
        render(
            DIST_HEADER,
            self.records.iter().map(|r| {
                (r.k, vec![r.alpha, r.f_centroid, r.f_gap, r.consensus_error, r.max_pairwise, r.contraction_slack])
            }),
        )
    }

    pub fn monitor_violations(&self) -> usize {
        self.contraction_violations + self.step_bound_violations
    }
}

/// Arithmetic mean `sum_j (1/N) x_j`, accumulated in agent order.
pub fn centroid<P: AsRef<[f64]>>(points: &[P]) -> Vec<f64> {
    let w = 1.0 / points.len() as f64;
    let d = points[0].as_ref().len();
    let mut c = vec![0.0; d];
    for p in points {
        for (cj, xj) in c.iter_mut().zip(p.as_ref()) {
            *cj += w * xj;
        }
    }
    c
}

/// `sum_i |xbar - x_i|_2`
pub fn consensus_error<P: AsRef<[f64]>>(points: &[P]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let c = centroid(points);
    points.iter().map(|p| dist2(&c, p.as_ref())).sum()
}

/// `max_{i<j} |x_i - x_j|_2`
pub fn max_pairwise_distance<P: AsRef<[f64]>>(points: &[P]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(dist2(a.as_ref(), b.as_ref()));
        }
    }
    best
}

/// Spectral norm `|P X|_2` of the centered stacked iterates (rows = agents).
pub fn centered_spectral_norm<P: AsRef<[f64]>>(points: &[P]) -> Result<f64> {
    let c = centroid(points);
    let d = c.len();
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.as_ref().iter().zip(&c).map(|(a, b)| a - b).collect())
        .collect();
    let mut gram = vec![0.0; d * d];
    for row in &centered {
        for a in 0..d {
            for b in 0..d {
                gram[a * d + b] += row[a] * row[b];
            }
        }
    }
    let trace: f64 = (0..d).map(|a| gram[a * d + a]).sum();
    if trace == 0.0 {
        return Ok(0.0);
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        for a in 0..d {
            out[a] = (0..d).map(|b| gram[a * d + b] * v[b]).sum();
        }
    };
    let r = top_eigenvalue_psd(start_vector(d), apply, 1e-12 * trace, 100_000)?;
    Ok(r.sqrt())
}

/// Slack `sigma2 |P X_k| + alpha N L / mu - |P X_{k+1}|` of the consensus
/// contraction recursion; passes when at least [`CONTRACTION_SLACK_TOL`].
pub fn check_contraction<P: AsRef<[f64]>>(
    a: &MixingMatrix,
    x_k: &[P],
    x_k1: &[P],
    alpha: f64,
    lipschitz: f64,
    mu: f64,
) -> Result<f64> {
    let n = x_k.len() as f64;
    let rhs = a.sigma2() * centered_spectral_norm(x_k)? + alpha * n * lipschitz / mu;
    Ok(rhs - centered_spectral_norm(x_k1)?)
}

/// Slack `alpha L_i / mu - |v - x_next|` of the single-agent step bound; passes
/// when at least [`STEP_BOUND_SLACK_TOL`].
pub fn check_step_bound(map: MirrorMap, v: &Point, x_next: &Point, alpha: f64, lipschitz_i: f64) -> f64 {
    alpha * lipschitz_i / map.mu() - v.distance(x_next)
}

fn mix(a: &MixingMatrix, i: usize, xs: &[Point]) -> Point {
    let d = xs[0].dim();
    let mut v = vec![0.0; d];
    for &(j, w) in a.row(i) {
        for (vj, xj) in v.iter_mut().zip(xs[j].coords()) {
            *vj += w * xj;
        }
    }
    Point::new(v).expect("convex combination of finite points is finite")
}

struct AgentUpdate {
    v: Point,
    x: Point,
}

fn agent_round(
    p: &ProblemInstance,
    map: MirrorMap,
    a: &MixingMatrix,
    xs: &[Point],
    rows: &Range<usize>,
    i: usize,
    alpha: f64,
) -> Result<AgentUpdate> {
    let v = mix(a, i, xs);
    let g = p.block_subgradient(rows.clone(), &v);
    let x = map.step(&v, &g, alpha)?;
    Ok(AgentUpdate { v, x })
}

/// Distributed mirror descent for `rounds` synchronous rounds.
///
/// Fails before the first round if `a` does not pass
/// [`MixingMatrix::verify_assumptions`].
#[allow(clippy::too_many_arguments)]
pub fn run_dmd(
    p: &ProblemInstance,
    map: MirrorMap,
    sched: &StepSchedule,
    a: &MixingMatrix,
    x0: &[Point],
    rounds: usize,
    reference: Option<&ReferenceOptimum>,
    opts: &DistOptions,
) -> Result<DistTrace> {
    if rounds == 0 {
        return Err(Error::Invalid("round budget must be positive".into()));
    }
    let n = a.size();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    let blocks = opts.assignment.resolve(p.n_rows(), n)?;
    let report = a.verify_assumptions();
    if !report.all_pass() {
        return Err(Error::Assumptions(report.failures().join(", ")));
    }
    for x in x0 {
        if x.dim() != p.dim() {
            return Err(Error::DimensionMismatch { expected: p.dim(), got: x.dim() });
        }
        if !x.is_feasible() {
            return Err(Error::Domain("agent starting point is not on the simplex".into()));
        }
    }
    sched.validate(rounds)?;

    let agent_lipschitz: Vec<f64> = blocks.iter().map(|b| p.block_lipschitz(b.clone())).collect();
    let lipschitz = agent_lipschitz.iter().cloned().fold(0.0, f64::max);
    let mu = map.mu();
    let stride = opts.decimation.stride(rounds);

    let mut xs: Vec<Point> = x0.iter().map(|x| map.admit(x)).collect();
    let mut vs: Vec<Point> = xs.clone();
    let mut records = Vec::with_capacity(rounds.div_ceil(stride) + 1);

    let mut contraction_violations = 0;
    let mut min_contraction = f64::INFINITY;
    let mut step_violations = 0;
    let mut min_step = f64::INFINITY;

    let sum_div = |pts: &[Point], z: &Point| -> Result<f64> {
        pts.iter().map(|x| map.bregman(z, x)).sum::<Result<f64>>()
    };
    let d0 = match reference {
        Some(r) => sum_div(&xs, &r.x_star)?,
        None => f64::NAN,
    };
    let mut weighted_gap = 0.0;
    let mut weighted_consensus = 0.0;
    let mut alpha_sq = 0.0;
    let mut telescoped_min = f64::INFINITY;

    for k in 0..rounds {
        let alpha = sched.alpha(k);
        let center = Point::new(centroid(&xs))?;
        let f_centroid = p.objective(&center);
        let cons = consensus_error(&xs);

        let updates: Vec<AgentUpdate> = if opts.parallel {
            (0..n)
                .into_par_iter()
                .map(|i| agent_round(p, map, a, &xs, &blocks[i], i, alpha))
                .collect::<Result<_>>()?
        } else {
            (0..n)
                .map(|i| agent_round(p, map, a, &xs, &blocks[i], i, alpha))
                .collect::<Result<_>>()?
        };
        let (next_v, next_x): (Vec<Point>, Vec<Point>) = updates.into_iter().map(|u| (u.v, u.x)).unzip();

        let contraction_slack = if opts.monitor {
            for (i, (v, x)) in next_v.iter().zip(&next_x).enumerate() {
                let s = check_step_bound(map, v, x, alpha, agent_lipschitz[i]);
                if s < STEP_BOUND_SLACK_TOL {
                    step_violations += 1;
                }
                min_step = min_step.min(s);
            }
            let s = check_contraction(a, &xs, &next_x, alpha, lipschitz, mu)?;
            if s < CONTRACTION_SLACK_TOL {
                contraction_violations += 1;
            }
            min_contraction = min_contraction.min(s);
            s
        } else {
            f64::NAN
        };

        let mut f_gap = f64::NAN;
        if let Some(r) = reference {
            f_gap = f_centroid - r.f_star;
            weighted_gap += alpha * f_gap;
            weighted_consensus += alpha * cons;
            alpha_sq += alpha * alpha;
            let lhs = sum_div(&next_x, &r.x_star)? - d0 + weighted_gap;
            let rhs = lipschitz * weighted_consensus + n as f64 * lipschitz * lipschitz / (2.0 * mu) * alpha_sq;
            telescoped_min = telescoped_min.min(rhs - lhs);
        }

        if opts.decimation.keeps(k, rounds, stride) {
            records.push(DistRecord {
                k,
                alpha,
                f_centroid,
                f_gap,
                consensus_error: cons,
                max_pairwise: max_pairwise_distance(&xs),
                contraction_slack,
            });
        }
        xs = next_x;
        vs = next_v;
    }

    let final_centroid = Point::new(centroid(&xs))?;
    let final_f_centroid = p.objective(&final_centroid);
    let final_consensus_error = consensus_error(&xs);
    let final_max_pairwise = max_pairwise_distance(&xs);
    let final_states = xs
        .into_iter()
        .zip(vs)
        .enumerate()
        .map(|(id, (x, v))| AgentState { id, x, v })
        .collect();
    Ok(DistTrace {
        records,
        rounds,
        final_states,
        final_gap: reference.map_or(f64::NAN, |r| final_f_centroid - r.f_star),
        final_centroid,
        final_f_centroid,
        final_consensus_error,
        final_max_pairwise,
        contraction_violations,
        min_contraction_slack: min_contraction,
        step_bound_violations: step_violations,
        min_step_bound_slack: min_step,
        telescoped_min_slack: if reference.is_some() { telescoped_min } else { f64::NAN },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_graph, metropolis_weights, Graph};
    use crate::problems::random_start;
    use proptest::prelude::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn consensus_examples() {
        let same = vec![pt(&[0.2, 0.8]); 4];
        assert_eq!(consensus_error(&same), 0.0);
        let two = [pt(&[1.0, 0.0]), pt(&[0.0, 1.0])];
        assert!((consensus_error(&two) - 2f64.sqrt()).abs() < 1e-15);
        assert!((max_pairwise_distance(&two) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(consensus_error::<Point>(&[]), 0.0);
    }

    #[test]
    fn centered_norm_of_two_points() {
        // P X = [[0.5, -0.5], [-0.5, 0.5]] has spectral norm 1.
        let two = [pt(&[1.0, 0.0]), pt(&[0.0, 1.0])];
        assert!((centered_spectral_norm(&two).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(centered_spectral_norm(&vec![pt(&[0.5, 0.5]); 3]).unwrap(), 0.0);
    }

    #[test]
    fn contraction_trivial_cases() {
        let a = metropolis_weights(&Graph::path(3).unwrap()).unwrap();
        let same = vec![pt(&[0.3, 0.7]); 3];
        let s = check_contraction(&a, &same, &same, 0.1, 2.0, 1.0).unwrap();
        assert!((s - 0.1 * 3.0 * 2.0).abs() < 1e-15);

        let avg = MixingMatrix::averaging(3).unwrap();
        let xs = [pt(&[1.0, 0.0]), pt(&[0.0, 1.0]), pt(&[0.5, 0.5])];
        let mixed: Vec<Point> = (0..3).map(|i| mix(&avg, i, &xs)).collect();
        assert!(centered_spectral_norm(&mixed).unwrap() < 1e-15);
        assert!(check_contraction(&avg, &xs, &mixed, 0.0, 1.0, 1.0).unwrap() >= -1e-15);
    }

    #[test]
    fn step_bound_examples() {
        let v = pt(&[0.4, 0.6]);
        assert_eq!(check_step_bound(MirrorMap::Euclidean, &v, &v, 0.3, 2.0), 0.6);
        // Interior Euclidean step moves by exactly alpha |g| when g is orthogonal to 1.
        let g = [0.5, -0.5];
        let x = MirrorMap::Euclidean.step(&v, &g, 0.1).unwrap();
        let norm_g = 0.5f64.sqrt();
        assert!((v.distance(&x) - 0.1 * norm_g).abs() < 1e-15);
        assert!(check_step_bound(MirrorMap::Euclidean, &v, &x, 0.1, norm_g) >= -1e-15);
    }

    #[test]
    fn consensus_fixed_point() {
        let n = 4;
        let p = ProblemInstance::from_rows(vec![vec![1.0, 0.0]; n], vec![0.25; n]).unwrap();
        let a = MixingMatrix::averaging(n).unwrap();
        let x0 = vec![pt(&[0.25, 0.75]); n];
        for map in [MirrorMap::Euclidean, MirrorMap::NegativeEntropy] {
            let t = run_dmd(&p, map, &StepSchedule::harmonic(0.2), &a, &x0, 30, None, &Default::default()).unwrap();
            for s in &t.final_states {
                assert!(s.x.distance(&x0[0]) < 1e-15);
            }
            assert!(t.final_consensus_error < 1e-15);
        }
    }

    #[test]
    fn one_round_unrolls_by_hand() {
        let p = ProblemInstance::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.9, 0.1]).unwrap();
        let w = vec![0.75, 0.25, 0.25, 0.75];
        let a = MixingMatrix::from_dense(2, w).unwrap();
        let x0 = [pt(&[0.2, 0.8]), pt(&[0.6, 0.4])];
        let t = run_dmd(&p, MirrorMap::Euclidean, &StepSchedule::harmonic(0.1), &a, &x0, 1, None, &Default::default())
            .unwrap();
        // v_0 = (0.3, 0.7): residual 0.3 - 0.9 < 0, g_0 = (-1, 0), step -> (0.4, 0.7) -> project (0.35, 0.65).
        // v_1 = (0.5, 0.5): residual 0.5 - 0.1 > 0, g_1 = (0, 1), step -> (0.5, 0.4) -> project (0.55, 0.45).
        let x = |i: usize| t.final_states[i].x.coords().to_vec();
        assert!(dist2(&x(0), &[0.35, 0.65]) < 1e-15);
        assert!(dist2(&x(1), &[0.55, 0.45]) < 1e-15);
        assert!(dist2(t.final_states[0].v.coords(), &[0.3, 0.7]) < 1e-15);
    }

    #[test]
    fn rejects_failed_assumptions_before_round_zero() {
        let p = ProblemInstance::generate(3, 2, 1).unwrap();
        let mut w = vec![0.0; 9];
        (0..3).for_each(|i| w[i * 3 + i] = 1.0);
        let a = MixingMatrix::from_dense(3, w).unwrap();
        let x0 = vec![Point::uniform(2); 3];
        let err = run_dmd(&p, MirrorMap::Euclidean, &StepSchedule::harmonic(0.2), &a, &x0, 5, None, &Default::default())
            .unwrap_err();
        assert!(matches!(err, Error::Assumptions(ref s) if s.contains("irreducible")), "{err}");
    }

    #[test]
    fn agent_count_must_match_rows_or_blocks() {
        let p = ProblemInstance::generate(6, 3, 1).unwrap();
        let a = metropolis_weights(&Graph::path(3).unwrap()).unwrap();
        let x0 = vec![Point::uniform(3); 3];
        let sched = StepSchedule::harmonic(0.2);
        assert!(run_dmd(&p, MirrorMap::NegativeEntropy, &sched, &a, &x0, 5, None, &Default::default()).is_err());
        let opts = DistOptions { assignment: Assignment::contiguous(6, 3).unwrap(), ..Default::default() };
        assert!(run_dmd(&p, MirrorMap::NegativeEntropy, &sched, &a, &x0, 5, None, &opts).is_ok());
        let bad = DistOptions { assignment: Assignment::Blocks(vec![0..2, 3..4, 4..6]), ..Default::default() };
        assert!(run_dmd(&p, MirrorMap::NegativeEntropy, &sched, &a, &x0, 5, None, &bad).is_err());
    }

    #[test]
    fn contiguous_blocks() {
        assert_eq!(Assignment::contiguous(7, 3).unwrap(), Assignment::Blocks(vec![0..3, 3..5, 5..7]));
        assert!(Assignment::contiguous(2, 3).is_err());
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let p = ProblemInstance::generate(12, 4, 3).unwrap();
        let a = metropolis_weights(&generate_graph(12, 20, 5).unwrap()).unwrap();
        let x0: Vec<Point> = (0..12).map(|i| random_start(4, 100 + i)).collect();
        let sched = StepSchedule::harmonic(0.2);
        for map in [MirrorMap::Euclidean, MirrorMap::NegativeEntropy] {
            let seq = DistOptions { monitor: true, ..Default::default() };
            let par = DistOptions { monitor: true, parallel: true, ..Default::default() };
            let s = run_dmd(&p, map, &sched, &a, &x0, 200, None, &seq).unwrap();
            let q = run_dmd(&p, map, &sched, &a, &x0, 200, None, &par).unwrap();
            assert_eq!(s.to_csv(), q.to_csv());
            assert_eq!(s.final_states, q.final_states);
        }
    }

    #[test]
    fn monitored_run_has_no_violations() {
        let p = ProblemInstance::generate(5, 3, 21).unwrap();
        let a = metropolis_weights(&Graph::path(5).unwrap()).unwrap();
        let x0: Vec<Point> = (0..5).map(|i| random_start(3, i)).collect();
        let r = crate::problems::reference_optimum(&p, 1e-2).unwrap();
        for map in [MirrorMap::Euclidean, MirrorMap::NegativeEntropy] {
            let opts = DistOptions { monitor: true, ..Default::default() };
            let t = run_dmd(&p, map, &StepSchedule::harmonic(0.2), &a, &x0, 1000, Some(&r), &opts).unwrap();
            assert_eq!(t.monitor_violations(), 0, "{map:?}");
            assert!(t.min_contraction_slack >= CONTRACTION_SLACK_TOL);
            assert!(t.min_step_bound_slack >= STEP_BOUND_SLACK_TOL);
            assert!(t.telescoped_min_slack >= -1e-9, "{}", t.telescoped_min_slack);
        }
    }

    proptest! {
        #[test]
        fn consensus_bounded_by_centered_norm(
            n in 2usize..8,
            d in 2usize..6,
            seed in any::<u64>(),
        ) {
            let xs: Vec<Point> = (0..n as u64).map(|i| random_start(d, seed.wrapping_add(i))).collect();
            let n_prime = ((n * n.min(d)) as f64).sqrt();
            prop_assert!(consensus_error(&xs) <= n_prime * centered_spectral_norm(&xs).unwrap() + 1e-12);
        }

        #[test]
        fn entropic_step_bound_holds(seed in any::<u64>(), alpha in 1e-3f64..2.0) {
            let p = ProblemInstance::generate(4, 5, seed).unwrap();
            let v = random_start(5, seed ^ 0x5555);
            let g = p.block_subgradient(0..4, &v);
            let x = MirrorMap::NegativeEntropy.step(&v, &g, alpha).unwrap();
            prop_assert!(check_step_bound(MirrorMap::NegativeEntropy, &v, &x, alpha, p.block_lipschitz(0..4)) >= STEP_BOUND_SLACK_TOL);
        }
    }
}
