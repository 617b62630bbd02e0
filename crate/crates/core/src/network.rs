//! Communication graphs and doubly stochastic mixing matrices.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::linalg::{start_vector, top_eigenvalue_psd};
use crate::textio::{fmt_f64, parse_f64s};
use crate::Rng64;

/// Tolerance for row/column sums and symmetry.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Eigen-residual tolerance of the deflated power iteration.
pub const SIGMA_TOL: f64 = 1e-10;
pub const SIGMA_MAX_ITER: usize = 100_000;

/// Simple undirected graph on nodes `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Validates and normalizes an edge list: endpoints in range, no self-loops,
    /// no duplicates. Edges are stored as `(min, max)` in sorted order.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid(format!("graph needs at least two nodes, got {n}")));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Index { index: a.max(b), len: n });
            }
            if a == b {
                return Err(Error::Invalid(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::Invalid(format!("duplicate edge ({a}, {b})")));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        adjacency.iter_mut().for_each(|nb| nb.sort_unstable());
        Ok(Graph { n, edges, adjacency })
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Edge list text: `"n m"` then one `"i j"` line per edge.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.edges.len());
        for (a, b) in &self.edges {
            let _ = writeln!(s, "{a} {b}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty graph file".into() })?;
        let [n, m] = parse_usize_pair(header, hl)?;
        let mut edges = Vec::with_capacity(m);
        for (line, l) in lines.by_ref().take(m) {
            edges.push(parse_usize_pair(l, line).map(|[a, b]| (a, b))?);
        }
        if edges.len() != m {
            return Err(Error::Parse { line: hl, msg: format!("header announces {m} edges, found {}", edges.len()) });
        }
        if let Some((line, _)) = lines.next() {
            return Err(Error::Parse { line, msg: "more edges than announced".into() });
        }
        Self::new(n, edges)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

fn parse_usize_pair(text: &str, line: usize) -> Result<[usize; 2]> {
    let v: Vec<usize> = text
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line, msg: format!("expected two integers: {e}") })?;
    v.try_into()
        .map_err(|_| Error::Parse { line, msg: "expected exactly two integers".into() })
}

/// Random connected graph with exactly `target_edges` edges.
///
/// A uniform spanning tree of `K_n` (decoded from a uniform Prüfer sequence) is
/// extended by non-edges sampled uniformly without replacement.
pub fn generate_graph(n: usize, target_edges: usize, seed: u64) -> Result<Graph> {
    if n < 2 || target_edges < n - 1 || target_edges > n * (n - 1) / 2 {
        return Err(Error::InfeasibleEdgeCount { nodes: n, edges: target_edges });
    }
    let mut rng = Rng64::seed_from_u64(seed);
    let prufer: Vec<usize> = (0..n.saturating_sub(2)).map(|_| rng.random_range(0..n)).collect();
    let tree = prufer_decode(n, &prufer);

    let present: BTreeSet<(usize, usize)> = tree.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let missing: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|e| !present.contains(e))
        .collect();
    let extra = target_edges - (n - 1);
    let picked = sample(&mut rng, missing.len(), extra);
    Graph::new(n, tree.into_iter().chain(picked.into_iter().map(|i| missing[i])))
}

fn prufer_decode(n: usize, seq: &[usize]) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = leaves.pop_first().expect("a tree always has a leaf");
        edges.push((leaf, s));
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.insert(s);
        }
    }
    let rest: Vec<usize> = leaves.into_iter().collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Row-stochastic weights used for consensus, with cached second singular value.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix {
    n: usize,
    weights: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    sigma2: f64,
}

impl MixingMatrix {
    /// Wraps a dense row-major `n x n` matrix and computes its second singular value.
    pub fn from_dense(n: usize, weights: Vec<f64>) -> Result<Self> {
        if n == 0 || weights.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invalid("mixing weights must be finite".into()));
        }
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|j| {
                        let w = weights[i * n + j];
                        (w != 0.0).then_some((j, w))
                    })
                    .collect()
            })
            .collect();
        let mut m = MixingMatrix { n, weights, rows, sigma2: f64::NAN };
        m.sigma2 = m.second_singular_value()?;
        Ok(m)
    }

    /// Exact averaging `(1/n) 1 1^T`.
    pub fn averaging(n: usize) -> Result<Self> {
        Self::from_dense(n, vec![1.0 / n as f64; n * n])
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cached second-largest singular value.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Nonzero entries of row `i` in ascending column order.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `y = A x`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.rows[i].iter().map(|&(j, w)| w * x[j]).sum();
        }
    }

    /// `y = A^T x`
    pub fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            for &(j, w) in &self.rows[i] {
                y[j] += w * xi;
            }
        }
    }

    /// Largest singular value of `A - (1/n) 1 1^T`, by power iteration on
    /// `B^T B`. For doubly stochastic `A` this is the second singular value of `A`.
    pub fn second_singular_value(&self) -> Result<f64> {
        let n = self.n;
        let mut bv = vec![0.0; n];
        let deflate = |x: &[f64], y: &mut [f64]| {
            let mean = x.iter().sum::<f64>() / n as f64;
            y.iter_mut().for_each(|c| *c -= mean);
        };
        let apply = |v: &[f64], out: &mut [f64]| {
            self.apply(v, &mut bv);
            let vmean = v.iter().sum::<f64>() / n as f64;
            bv.iter_mut().for_each(|c| *c -= vmean);
            self.apply_transpose(&bv, out);
            deflate(&bv, out);
        };
        let r = top_eigenvalue_psd(start_vector(n), apply, SIGMA_TOL, SIGMA_MAX_ITER)?;
        Ok(r.sqrt())
    }

    /// Checks the structural premises of the distributed convergence result.
    pub fn verify_assumptions(&self) -> AssumptionReport {
        let n = self.n;
        let nonnegative = self.weights.iter().all(|&w| w >= 0.0);
        let rows_ok = (0..n).all(|i| ((0..n).map(|j| self.get(i, j)).sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL);
        let cols_ok = (0..n).all(|j| ((0..n).map(|i| self.get(i, j)).sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL);
        let symmetric = (0..n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= STOCHASTIC_TOL));
        let aperiodic = (0..n).any(|i| self.get(i, i) > 0.0);
        AssumptionReport {
            doubly_stochastic: nonnegative && rows_ok && cols_ok,
            symmetric,
            irreducible: self.positive_pattern_connected(),
            aperiodic,
            sigma2: self.sigma2,
            sigma2_below_one: self.sigma2 < 1.0,
        }
    }

    fn positive_pattern_connected(&self) -> bool {
        let n = self.n;
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for (v, s) in seen.iter_mut().enumerate() {
                if !*s && (self.get(u, v) > 0.0 || self.get(v, u) > 0.0) {
                    *s = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// `n` lines of `n` numbers.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            let line: Vec<String> = (0..self.n).map(|j| fmt_f64(self.get(i, j))).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut weights = Vec::new();
        let mut n = None;
        let mut count = 0;
        for (i, l) in text.lines().enumerate() {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let row = parse_f64s(l, i + 1)?;
            let width = *n.get_or_insert(row.len());
            if row.len() != width {
                return Err(Error::Parse { line: i + 1, msg: format!("expected {width} entries, found {}", row.len()) });
            }
            weights.extend(row);
            count += 1;
        }
        let n = n.ok_or(Error::Parse { line: 1, msg: "empty matrix file".into() })?;
        if count != n {
            return Err(Error::Parse { line: 1, msg: format!("matrix has {count} rows but {n} columns") });
        }
        Self::from_dense(n, weights)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

/// Metropolis-Hastings weights: `A_ij = 1 / (1 + max(deg_i, deg_j))` on edges,
/// the diagonal absorbing the remainder of each row.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = g.node_count();
    let mut w = vec![0.0; n * n];
    for &(a, b) in g.edges() {
        let v = 1.0 / (1.0 + g.degree(a).max(g.degree(b)) as f64);
        w[a * n + b] = v;
        w[b * n + a] = v;
    }
    for i in 0..n {
        let denominators: Vec<u64> = g
            .neighbors(i)
            .iter()
            .map(|&j| 1 + g.degree(i).max(g.degree(j)) as u64)
            .collect();
        w[i * n + i] = one_minus_unit_fractions(&denominators);
    }
    MixingMatrix::from_dense(n, w)
}

/// `1 - sum_k 1/m_k`, correctly rounded whenever the common denominator stays
/// below 2^53; otherwise summed in floating point.
fn one_minus_unit_fractions(denominators: &[u64]) -> f64 {
    let gcd = |mut a: u64, mut b: u64| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    let lcm = denominators.iter().try_fold(1u64, |acc, &m| {
        let l = (acc / gcd(acc, m)).checked_mul(m)?;
        (l < 1 << 53).then_some(l)
    });
    match lcm {
        Some(l) => {
            let taken: u64 = denominators.iter().map(|&m| l / m).sum();
            (l - taken) as f64 / l as f64
        }
        None => 1.0 - denominators.iter().map(|&m| 1.0 / m as f64).sum::<f64>(),
    }
}

/// Outcome of [`MixingMatrix::verify_assumptions`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssumptionReport {
    pub doubly_stochastic: bool,
    pub symmetric: bool,
    pub irreducible: bool,
    /// Sufficient condition: some positive diagonal entry.
    pub aperiodic: bool,
    pub sigma2: f64,
    pub sigma2_below_one: bool,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.doubly_stochastic && self.symmetric && self.irreducible && self.aperiodic && self.sigma2_below_one
    }

    /// Names of the checks that failed.
    pub fn failures(&self) -> Vec<&'static str> {
        [
            (self.doubly_stochastic, "doubly stochastic"),
            (self.symmetric, "symmetric"),
            (self.irreducible, "irreducible"),
            (self.aperiodic, "aperiodic"),
            (self.sigma2_below_one, "sigma2 < 1"),
        ]
        .into_iter()
        .filter_map(|(ok, name)| (!ok).then_some(name))
        .collect()
    }
}
