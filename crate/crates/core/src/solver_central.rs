//! Centralized mirror descent with a fixed iteration budget.
//!
//! Each iteration takes `x_{k+1} = argmin_z <g_k, z - x_k> + D(z, x_k) / alpha_k`
//! with `g_k` a subgradient of the objective at `x_k`. When monitoring is on,
//! every step is checked against
//!
//! ```text
//! D(z, x_{k+1}) - D(z, x_k) <= alpha_k <g_k, z - x_k> + alpha_k^2 L^2 / (2 mu)
//! ```
//!
//! which holds for every feasible `z` whenever `|g_k| <= L`.

use crate::error::{Error, Result};
use crate::geometry::{MirrorMap, Point};
use crate::linalg::dot;
use crate::problems::{ProblemInstance, ReferenceOptimum};
use crate::trace::{render, CENTRAL_HEADER};

/// Pass threshold for the per-step inequality.
pub const STEP_SLACK_TOL: f64 = -1e-9;

/// Runs longer than this are decimated under [`Decimation::Auto`].
pub const AUTO_TRACE_LIMIT: usize = 10_000;

/// Positive, nonincreasing step sizes `alpha_k`.
#[derive(Clone, Debug, PartialEq)]
pub enum StepSchedule {
    /// `a / (k + 1)`: square-summable and not summable.
    Harmonic { a: f64 },
    /// `a / sqrt(k + 1)`: not square-summable; outside the iterate-convergence regime.
    SqrtDecay { a: f64 },
    /// Explicit values. Only positivity and monotonicity are checked; summability
    /// is the caller's responsibility.
    Custom(Vec<f64>),
}

impl StepSchedule {
    pub fn harmonic(a: f64) -> Self {
        StepSchedule::Harmonic { a }
    }

    pub fn alpha(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Harmonic { a } => a / (k as f64 + 1.0),
            StepSchedule::SqrtDecay { a } => a / (k as f64 + 1.0).sqrt(),
            StepSchedule::Custom(v) => v[k],
        }
    }

    /// Checks positivity and monotonicity over the first `horizon` steps.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            StepSchedule::Harmonic { a } | StepSchedule::SqrtDecay { a } => {
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(Error::Schedule(format!("scale must be positive and finite, got {a}")));
                }
            }
            StepSchedule::Custom(v) => {
                if v.len() < horizon {
                    return Err(Error::Schedule(format!(
                        "custom schedule has {} entries, run needs {horizon}",
                        v.len()
                    )));
                }
                if let Some(k) = v[..horizon].iter().position(|&a| !(a > 0.0 && a.is_finite())) {
                    return Err(Error::Schedule(format!("alpha_{k} = {} is not positive", v[k])));
                }
                if let Some(k) = v[..horizon].windows(2).position(|w| w[1] > w[0]) {
                    return Err(Error::Schedule(format!("schedule increases at k = {}", k + 1)));
                }
            }
        }
        Ok(())
    }

    /// Whether the sequence is known to be square-summable but not summable.
    pub fn in_convergence_regime(&self) -> Option<bool> {
        match self {
            StepSchedule::Harmonic { .. } => Some(true),
            StepSchedule::SqrtDecay { .. } => Some(false),
            StepSchedule::Custom(_) => None,
        }
    }
}

/// How many iterations end up in the trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Decimation {
    /// Every iteration up to [`AUTO_TRACE_LIMIT`], else every `ceil(iters / limit)`-th.
    #[default]
    Auto,
    Every(usize),
}

impl Decimation {
    pub fn stride(self, iters: usize) -> usize {
        match self {
            Decimation::Auto if iters <= AUTO_TRACE_LIMIT => 1,
            Decimation::Auto => iters.div_ceil(AUTO_TRACE_LIMIT),
            Decimation::Every(s) => s.max(1),
        }
    }

    pub(crate) fn keeps(self, k: usize, iters: usize, stride: usize) -> bool {
        k.is_multiple_of(stride) || k + 1 == iters
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Evaluate the per-step inequality every iteration.
    pub monitor: bool,
    /// Comparison point for the monitor. Defaults to the reference optimum,
    /// then to the barycenter.
    pub monitor_point: Option<Point>,
    pub decimation: Decimation,
}

/// One recorded iteration. Quantities that need a reference optimum or the
/// monitor are `NaN` when those are absent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub alpha: f64,
    pub f: f64,
    pub f_gap: f64,
    pub dist_ref: f64,
    pub bregman_ref: f64,
    /// `|x_{k+1} - x_k|_2`
    pub step_norm: f64,
    pub monitor_slack: f64,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub iterations: usize,
    pub final_point: Point,
    pub final_f: f64,
    /// `final_f - f_star`, `NaN` without a reference.
    pub final_gap: f64,
    /// Monitor steps with slack below [`STEP_SLACK_TOL`].
    pub violations: usize,
    pub min_slack: f64,
    /// Minimum over `K` of the summed bound
    /// `D(z,x_0) + L^2/(2mu) sum alpha_k^2 - D(z,x_{K+1}) - sum alpha_k (f(x_k) - f(z))`,
    /// with `z` the reference point. `NaN` without a reference.
    pub telescoped_min_slack: f64,
    /// Largest `|x_{k+1} - x_k|` over the last 10% of iterations.
    pub tail_max_step: f64,
    /// `sup - inf` of `D(x*, x_k)` over the last 10% of iterations.
    pub tail_bregman_range: f64,
}

impl RunTrace {
    pub fn to_csv(&self) -> String {
        render(
            CENTRAL_HEADER,
            self.records.iter().map(|r| {
                (r.k, vec![r.alpha, r.f, r.f_gap, r.dist_ref, r.bregman_ref, r.step_norm, r.monitor_slack])
            }),
        )
    }
}

/// Slack of the per-step inequality for one mirror step `x_k -> x_k1` taken with
/// subgradient `g` of a function whose subgradients are bounded by `lipschitz`.
pub fn step_inequality_slack(
    map: MirrorMap,
    x_k: &Point,
    x_k1: &Point,
    z: &Point,
    g: &[f64],
    alpha: f64,
    lipschitz: f64,
) -> Result<f64> {
    let lhs = map.bregman(z, x_k1)? - map.bregman(z, x_k)?;
    let diff: Vec<f64> = z.coords().iter().zip(x_k.coords()).map(|(a, b)| a - b).collect();
    let rhs = alpha * dot(g, &diff) + alpha * alpha * lipschitz * lipschitz / (2.0 * map.mu());
    Ok(rhs - lhs)
}

/// Per-step inequality for the full objective of `p`; passes when the slack is
/// at least [`STEP_SLACK_TOL`].
pub fn check_step_inequality(
    map: MirrorMap,
    p: &ProblemInstance,
    x_k: &Point,
    x_k1: &Point,
    z: &Point,
    alpha: f64,
) -> Result<f64> {
    let g = p.subgradient(x_k);
    step_inequality_slack(map, x_k, x_k1, z, &g, alpha, p.lipschitz())
}

/// Centralized mirror descent for `iters` iterations from `x0`.
pub fn run_md(
    p: &ProblemInstance,
    map: MirrorMap,
    sched: &StepSchedule,
    x0: &Point,
    iters: usize,
    reference: Option<&ReferenceOptimum>,
    opts: &RunOptions,
) -> Result<RunTrace> {
    if iters == 0 {
        return Err(Error::Invalid("iteration budget must be positive".into()));
    }
    if x0.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: x0.dim() });
    }
    if !x0.is_feasible() {
        return Err(Error::Domain("starting point is not on the simplex".into()));
    }
    sched.validate(iters)?;

    let lipschitz = p.lipschitz();
    let stride = opts.decimation.stride(iters);
    let tail_start = iters - iters / 10;
    let monitor_point = opts
        .monitor_point
        .clone()
        .or_else(|| reference.map(|r| r.x_star.clone()))
        .unwrap_or_else(|| Point::uniform(p.dim()));

    let mut x = map.admit(x0);
    let mut records = Vec::with_capacity(iters.div_ceil(stride) + 1);
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;

    // Summed-bound bookkeeping against the reference point.
    let d0 = match reference {
        Some(r) => map.bregman(&r.x_star, &x)?,
        None => f64::NAN,
    };
    let mut weighted_gap = 0.0;
    let mut alpha_sq = 0.0;
    let mut telescoped_min = f64::INFINITY;

    let mut tail_max_step = 0.0f64;
    let mut tail_lo = f64::INFINITY;
    let mut tail_hi = f64::NEG_INFINITY;

    for k in 0..iters {
        let alpha = sched.alpha(k);
        let f = p.objective(&x);
        let g = p.subgradient(&x);
        let next = map.step(&x, &g, alpha)?;
        let step_norm = x.distance(&next);

        let slack = if opts.monitor {
            let s = step_inequality_slack(map, &x, &next, &monitor_point, &g, alpha, lipschitz)?;
            if s < STEP_SLACK_TOL {
                violations += 1;
            }
            min_slack = min_slack.min(s);
            s
        } else {
            f64::NAN
        };

        let keep = opts.decimation.keeps(k, iters, stride);
        let in_tail = k >= tail_start;
        let (mut f_gap, mut dist_ref, mut bregman_ref) = (f64::NAN, f64::NAN, f64::NAN);
        if let Some(r) = reference {
            f_gap = f - r.f_star;
            weighted_gap += alpha * f_gap;
            alpha_sq += alpha * alpha;
            let d_next = map.bregman(&r.x_star, &next)?;
            let bound = d0 + lipschitz * lipschitz / (2.0 * map.mu()) * alpha_sq;
            telescoped_min = telescoped_min.min(bound - d_next - weighted_gap);
            if keep || in_tail {
                bregman_ref = map.bregman(&r.x_star, &x)?;
                dist_ref = x.distance(&r.x_star);
            }
        }
        if in_tail {
            tail_max_step = tail_max_step.max(step_norm);
            if !bregman_ref.is_nan() {
                tail_lo = tail_lo.min(bregman_ref);
                tail_hi = tail_hi.max(bregman_ref);
            }
        }
        if keep {
            records.push(TraceRecord { k, alpha, f, f_gap, dist_ref, bregman_ref, step_norm, monitor_slack: slack });
        }
        x = next;
    }

    let final_f = p.objective(&x);
    Ok(RunTrace {
        records,
        iterations: iters,
        final_gap: reference.map_or(f64::NAN, |r| final_f - r.f_star),
        final_point: x,
        final_f,
        violations,
        min_slack,
        telescoped_min_slack: if reference.is_some() { telescoped_min } else { f64::NAN },
        tail_max_step,
        tail_bregman_range: if tail_hi >= tail_lo { tail_hi - tail_lo } else { f64::NAN },
    })
}
