//! Undirected weighted graphs, canonical generators, the (p-)Laplacian
//! operators and dense spectral summaries.
//!
//! Each undirected edge is stored once as `(i, j, w)` with `i < j` and `w > 0`;
//! every operator walks the edge list once and scatters `+f` to `i` and `-f`
//! to `j`, so symmetry and the mass-annihilation identity `1^T L h = 0` hold
//! by construction.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Largest graph the dense spectral routines accept.
pub const MAX_DENSE_NODES: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Connected, undirected, weighted graph without self-loops or multi-edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    degree: Vec<f64>,
}

impl Graph {
    /// Builds a graph from `(i, j, w)` triples. Endpoint order is normalized
    /// to `i < j`; self-loops, duplicate edges, nonpositive weights and
    /// disconnected inputs are rejected.
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(Error::InvalidArgument("graph needs at least one node".into()));
        }
        let mut seen = HashSet::new();
        let mut stored = Vec::new();
        let mut degree = vec![0.0; n];
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at node {a}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) has non-positive weight {w}"
                )));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((i, j)) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({i}, {j})")));
            }
            degree[i] += w;
            degree[j] += w;
            stored.push(Edge { i, j, w });
        }
        let g = Self {
            n,
            edges: stored,
            degree,
        };
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn max_degree(&self) -> f64 {
        self.degree.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).sum()
    }

    /// Same topology with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.n,
            self.edges.iter().map(|e| (e.i, e.j, e.w * factor)),
        )
    }

    fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// `L h = D h - W h`, evaluated edgewise.
    pub fn laplacian_apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, h.len())?;
        let mut out = vec![0.0; self.n];
        self.laplacian_apply_into(h, &mut out);
        Ok(out)
    }

    pub(crate) fn laplacian_apply_into(&self, h: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for e in &self.edges {
            let f = e.w * (h[e.i] - h[e.j]);
            out[e.i] += f;
            out[e.j] -= f;
        }
    }

    /// `(Δ_p h)_i = Σ_j W_ij |h_i - h_j|^{p-2} (h_i - h_j)`.
    pub fn p_laplacian_apply(&self, h: &[f64], p: f64) -> Result<Vec<f64>> {
        check_p(p)?;
        check_dim(self.n, h.len())?;
        let mut out = vec![0.0; self.n];
        self.p_laplacian_apply_into(h, p, &mut out);
        Ok(out)
    }

    pub(crate) fn p_laplacian_apply_into(&self, h: &[f64], p: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for e in &self.edges {
            let d = h[e.i] - h[e.j];
            let f = e.w * signed_pow(d, p - 1.0);
            out[e.i] += f;
            out[e.j] -= f;
        }
    }

    /// `Σ_{(i,j)∈E} W_ij |h_i - h_j|^p`.
    pub fn dirichlet_energy_p(&self, h: &[f64], p: f64) -> Result<f64> {
        check_p(p)?;
        check_dim(self.n, h.len())?;
        Ok(self.dirichlet_energy_unchecked(h, p))
    }

    pub(crate) fn dirichlet_energy_unchecked(&self, h: &[f64], p: f64) -> f64 {
        self.edges
            .iter()
            .map(|e| e.w * (h[e.i] - h[e.j]).abs().powf(p))
            .sum()
    }

    pub fn dense_laplacian(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            m[(e.i, e.i)] += e.w;
            m[(e.j, e.j)] += e.w;
            m[(e.i, e.j)] -= e.w;
            m[(e.j, e.i)] -= e.w;
        }
        m
    }

    /// λ₂, λ_max and a unit Fiedler vector from a dense symmetric eigensolve.
    pub fn spectral_summary(&self) -> Result<SpectralSummary> {
        if self.n < 2 {
            return Err(Error::DegenerateGraph(
                "spectral summary needs at least two nodes".into(),
            ));
        }
        if self.n > MAX_DENSE_NODES {
            return Err(Error::InvalidArgument(format!(
                "dense eigensolver limited to {MAX_DENSE_NODES} nodes, got {}",
                self.n
            )));
        }
        let eig = SymmetricEigen::new(self.dense_laplacian());
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let lambda2 = eig.eigenvalues[order[1]];
        let lambda_max = eig.eigenvalues[order[self.n - 1]];

        let mut v: Vec<f64> = eig.eigenvectors.column(order[1]).iter().copied().collect();
        crate::linalg::project_out_mean(&mut v);
        let norm = crate::linalg::norm2(&v);
        v.iter_mut().for_each(|x| *x /= norm);
        // Fix the sign: largest-magnitude entry positive.
        let pivot = v
            .iter()
            .copied()
            .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        Ok(SpectralSummary {
            lambda2,
            lambda_max,
            fiedler_vector: v,
        })
    }

    /// All Laplacian eigenvalues, ascending.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        crate::linalg::symmetric_eigenvalues(self.dense_laplacian())
    }

    /// Parses the text format: a header line `N m` followed by `m` lines `i j w`.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let mut fields = header.split_whitespace();
        let n: usize = parse_field(fields.next(), hline, "N")?;
        let m: usize = parse_field(fields.next(), hline, "m")?;
        let mut edges = Vec::with_capacity(m);
        for (line, l) in lines.by_ref().take(m) {
            let mut f = l.split_whitespace();
            let i: usize = parse_field(f.next(), line, "i")?;
            let j: usize = parse_field(f.next(), line, "j")?;
            let w: f64 = parse_field(f.next(), line, "w")?;
            edges.push((i, j, w));
        }
        if edges.len() != m {
            return Err(Error::Parse {
                line: hline,
                message: format!("header promises {m} edges, found {}", edges.len()),
            });
        }
        if let Some((line, _)) = lines.next() {
            return Err(Error::Parse {
                line,
                message: "unexpected content after edge list".into(),
            });
        }
        Self::new(n, edges)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.edges.len());
        for e in &self.edges {
            s.push_str(&format!("{} {} {}\n", e.i, e.j, e.w));
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_field<T: FromStr>(field: Option<&str>, line: usize, name: &str) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing field {name}"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad value {raw:?} for {name}"),
    })
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p >= 2.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "p-Laplacian requires p >= 2, got {p}"
        )))
    }
}

/// `|x|^{q-1} x` written as `sign(x) |x|^q`.
#[inline]
pub(crate) fn signed_pow(x: f64, q: f64) -> f64 {
    if q == 1.0 {
        x
    } else {
        x.signum() * x.abs().powf(q)
    }
}

/// λ₂, λ_max and the Fiedler vector of a connected graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub lambda2: f64,
    pub lambda_max: f64,
    pub fiedler_vector: Vec<f64>,
}

/// Canonical graph families. All generated graphs are unweighted (`w = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GraphFamily {
    Path { n: usize },
    Cycle { n: usize },
    Star { n: usize },
    Complete { n: usize },
    Grid { rows: usize, cols: usize },
    ErdosRenyi { n: usize, prob: f64, seed: u64 },
    Karate,
    /// Random `degree`-regular graph from the pairing model.
    RandomRegular { n: usize, degree: usize, seed: u64 },
}

const ER_RETRIES: u64 = 100;
const PAIRING_ATTEMPTS: usize = 10_000;

impl GraphFamily {
    pub fn generate(&self) -> Result<Graph> {
        match *self {
            Self::Path { n } => {
                min_size(n, 2)?;
                Graph::new(n, (0..n - 1).map(|i| (i, i + 1, 1.0)))
            }
            Self::Cycle { n } => {
                min_size(n, 3)?;
                Graph::new(n, (0..n).map(|i| (i, (i + 1) % n, 1.0)))
            }
            Self::Star { n } => {
                min_size(n, 2)?;
                Graph::new(n, (1..n).map(|i| (0, i, 1.0)))
            }
            Self::Complete { n } => {
                min_size(n, 2)?;
                Graph::new(
                    n,
                    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j, 1.0))),
                )
            }
            Self::Grid { rows, cols } => {
                if rows * cols < 2 || rows == 0 || cols == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "grid {rows}x{cols} needs at least two nodes"
                    )));
                }
                let idx = |r: usize, c: usize| r * cols + c;
                let mut edges = Vec::new();
                for r in 0..rows {
                    for c in 0..cols {
                        if c + 1 < cols {
                            edges.push((idx(r, c), idx(r, c + 1), 1.0));
                        }
                        if r + 1 < rows {
                            edges.push((idx(r, c), idx(r + 1, c), 1.0));
                        }
                    }
                }
                Graph::new(rows * cols, edges)
            }
            Self::ErdosRenyi { n, prob, seed } => erdos_renyi(n, prob, seed),
            Self::Karate => Graph::new(34, KARATE_EDGES.iter().map(|&(i, j)| (i, j, 1.0))),
            Self::RandomRegular { n, degree, seed } => random_regular(n, degree, seed),
        }
    }
}

fn min_size(n: usize, min: usize) -> Result<()> {
    if n >= min {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "graph size {n} below minimum {min}"
        )))
    }
}

fn erdos_renyi(n: usize, prob: f64, seed: u64) -> Result<Graph> {
    min_size(n, 2)?;
    if !(prob > 0.0 && prob <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "edge probability must lie in (0, 1], got {prob}"
        )));
    }
    for attempt in 0..ER_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < prob {
                    edges.push((i, j, 1.0));
                }
            }
        }
        match Graph::new(n, edges) {
            Ok(g) => return Ok(g),
            Err(Error::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(format!(
        "G({n}, {prob}) stayed disconnected for seeds {seed}..{}",
        seed.wrapping_add(ER_RETRIES - 1)
    )))
}

fn random_regular(n: usize, degree: usize, seed: u64) -> Result<Graph> {
    if degree == 0 || degree >= n || !(n * degree).is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "no simple {degree}-regular graph on {n} nodes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
    'attempt: for _ in 0..PAIRING_ATTEMPTS {
        stubs.shuffle(&mut rng);
        let mut seen = HashSet::new();
        let mut edges = Vec::with_capacity(stubs.len() / 2);
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !seen.insert((a, b)) {
                continue 'attempt;
            }
            edges.push((a, b, 1.0));
        }
        match Graph::new(n, edges) {
            Ok(g) => return Ok(g),
            Err(Error::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(format!(
        "pairing model found no simple connected {degree}-regular graph on {n} nodes"
    )))
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Path { n } => write!(f, "path:{n}"),
            Self::Cycle { n } => write!(f, "cycle:{n}"),
            Self::Star { n } => write!(f, "star:{n}"),
            Self::Complete { n } => write!(f, "complete:{n}"),
            Self::Grid { rows, cols } => write!(f, "grid:{rows}x{cols}"),
            Self::ErdosRenyi { n, prob, seed } => write!(f, "er:{n}:{prob}:{seed}"),
            Self::Karate => write!(f, "karate"),
            Self::RandomRegular { n, degree, seed } => write!(f, "regular:{n}:{degree}:{seed}"),
        }
    }
}

impl FromStr for GraphFamily {
    type Err = Error;

    /// Accepts `path:N`, `cycle:N`, `star:N`, `complete:N`, `grid:RxC`,
    /// `er:N:PROB[:SEED]`, `karate` and `regular:N:D[:SEED]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognized graph spec {s:?}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |k: usize| -> Result<usize> {
            parts.get(k).ok_or_else(bad)?.parse().map_err(|_| bad())
        };
        let seed = |k: usize| -> Result<u64> {
            parts.get(k).map_or(Ok(0), |v| v.parse().map_err(|_| bad()))
        };
        let family = match parts[0].to_ascii_lowercase().as_str() {
            "path" | "p" => Self::Path { n: num(1)? },
            "cycle" | "c" => Self::Cycle { n: num(1)? },
            "star" | "s" => Self::Star { n: num(1)? },
            "complete" | "k" => Self::Complete { n: num(1)? },
            "grid" => {
                let dims = parts.get(1).ok_or_else(bad)?;
                let (r, c) = dims.split_once(['x', 'X']).ok_or_else(bad)?;
                Self::Grid {
                    rows: r.parse().map_err(|_| bad())?,
                    cols: c.parse().map_err(|_| bad())?,
                }
            }
            "er" | "erdos_renyi" => Self::ErdosRenyi {
                n: num(1)?,
                prob: parts.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?,
                seed: seed(3)?,
            },
            "karate" => Self::Karate,
            "regular" => Self::RandomRegular {
                n: num(1)?,
                degree: num(2)?,
                seed: seed(3)?,
            },
            _ => return Err(bad()),
        };
        Ok(family)
    }
}

/// Zachary's karate club, 0-based.
const KARATE_EDGES: [(usize, usize); 78] = [
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10), (0, 11),
    (0, 12), (0, 13), (0, 17), (0, 19), (0, 21), (0, 31), (1, 2), (1, 3), (1, 7), (1, 13),
    (1, 17), (1, 19), (1, 21), (1, 30), (2, 3), (2, 7), (2, 8), (2, 9), (2, 13), (2, 27),
    (2, 28), (2, 32), (3, 7), (3, 12), (3, 13), (4, 6), (4, 10), (5, 6), (5, 10), (5, 16),
    (6, 16), (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (14, 32), (14, 33), (15, 32),
    (15, 33), (18, 32), (18, 33), (19, 33), (20, 32), (20, 33), (22, 32), (22, 33),
    (23, 25), (23, 27), (23, 29), (23, 32), (23, 33), (24, 25), (24, 27), (24, 31),
    (25, 31), (26, 29), (26, 33), (27, 33), (28, 31), (28, 33), (29, 32), (29, 33),
    (30, 32), (30, 33), (31, 32), (31, 33), (32, 33),
];
