//! Graph data model, on-disk formats and synthetic shift generators.
//!
//! On-disk layout of a graph directory:
//!
//! * `edges.txt`: one `i j` pair per line (0-based ids), optionally followed
//!   by a positive weight; `#` starts a comment line.
//! * `features.csv`: one comma-separated row of reals per node, no header.
//! * `labels.txt` (optional): one class index per line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::numcore::Matrix;
use crate::seeding;
use crate::train::RunMetrics;

pub const EDGE_FILE: &str = "edges.txt";
pub const FEATURE_FILE: &str = "features.csv";
pub const LABEL_FILE: &str = "labels.txt";

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: expected `i j [weight]`, got {content:?}", .path.display())]
    MalformedEdge { path: PathBuf, line: usize, content: String },
    #[error("{}:{line}: node id {node} out of range for {n} nodes", .path.display())]
    NodeOutOfRange { path: PathBuf, line: usize, node: usize, n: usize },
    #[error("{}:{line}: non-numeric feature value {value:?}", .path.display())]
    NonNumericFeature { path: PathBuf, line: usize, value: String },
    #[error("{}:{line}: expected {expected} feature columns, found {found}", .path.display())]
    RaggedFeatures { path: PathBuf, line: usize, expected: usize, found: usize },
    #[error("{}:{line}: invalid label {value:?}", .path.display())]
    BadLabel { path: PathBuf, line: usize, value: String },
    #[error("{}: label count mismatch: {found} labels for {expected} nodes (last line {line})", .path.display())]
    LabelCountMismatch { path: PathBuf, line: usize, expected: usize, found: usize },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("{}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GraphError + '_ {
    move |source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One domain's data: adjacency, node features and optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: Matrix,
    features: Matrix,
    labels: Option<Vec<usize>>,
    num_classes: usize,
}

impl Graph {
    /// Validates and builds a graph. `num_classes` must exceed every label.
    pub fn new(
        adjacency: Matrix,
        features: Matrix,
        labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self, GraphError> {
        let n = adjacency.rows();
        if adjacency.cols() != n {
            return Err(GraphError::Invalid(format!(
                "adjacency is {}x{}, not square",
                n,
                adjacency.cols()
            )));
        }
        if !adjacency.is_symmetric(SYMMETRY_TOL) {
            return Err(GraphError::Invalid("adjacency is not symmetric".into()));
        }
        if (0..n).any(|i| adjacency.get(i, i) != 0.0) {
            return Err(GraphError::Invalid("adjacency has a non-zero diagonal".into()));
        }
        if adjacency.as_slice().iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(GraphError::Invalid("adjacency has negative or non-finite weights".into()));
        }
        if features.rows() != n {
            return Err(GraphError::Invalid(format!(
                "{} feature rows for {n} nodes",
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(GraphError::Invalid("features contain non-finite values".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(GraphError::Invalid(format!("{} labels for {n} nodes", labels.len())));
            }
            if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
                return Err(GraphError::Invalid(format!(
                    "label {bad} not below class count {num_classes}"
                )));
            }
        }
        Ok(Graph {
            adjacency,
            features,
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        let n = self.num_nodes();
        (0..n)
            .map(|i| ((i + 1)..n).filter(|&j| self.adjacency.get(i, j) != 0.0).count())
            .sum()
    }

    pub fn with_labels(mut self, labels: Option<Vec<usize>>) -> Result<Self, GraphError> {
        let c = labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|m| m + 1))
            .unwrap_or(0)
            .max(self.num_classes);
        self.num_classes = c;
        Graph::new(self.adjacency, self.features, labels, c)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    fn widen_classes(&mut self, c: usize) {
        self.num_classes = self.num_classes.max(c);
    }
}

/// A labeled source graph and a target graph sharing one attribute space.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainPair {
    pub source: Graph,
    pub target: Graph,
}

impl DomainPair {
    /// Both graphs end up with the larger of the two class counts.
    pub fn new(mut source: Graph, mut target: Graph) -> Result<Self, GraphError> {
        if source.labels.is_none() {
            return Err(GraphError::Invalid("source graph must be labeled".into()));
        }
        if source.feature_dim() != target.feature_dim() {
            return Err(GraphError::Invalid(format!(
                "feature dimensions differ: source {}, target {}",
                source.feature_dim(),
                target.feature_dim()
            )));
        }
        let c = source.num_classes.max(target.num_classes);
        source.widen_classes(c);
        target.widen_classes(c);
        Ok(DomainPair { source, target })
    }

    pub fn num_classes(&self) -> usize {
        self.source.num_classes
    }
}

// ── loading ──────────────────────────────────────────────────────────

fn read(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn parse_features(path: &Path) -> Result<Matrix, GraphError> {
    let text = read(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| GraphError::NonNumericFeature {
                path: path.to_path_buf(),
                line: line_no,
                value: field.to_string(),
            })?;
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(GraphError::RaggedFeatures {
                    path: path.to_path_buf(),
                    line: line_no,
                    expected: c,
                    found: count,
                })
            }
            _ => {}
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data).map_err(|e| GraphError::Invalid(e.to_string()))
}

fn parse_edges(path: &Path, n: usize) -> Result<Matrix, GraphError> {
    let text = read(path)?;
    let mut adjacency = Matrix::zeros(n, n);
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = || GraphError::MalformedEdge {
            path: path.to_path_buf(),
            line: line_no,
            content: raw.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(malformed());
        }
        let i: usize = fields[0].parse().map_err(|_| malformed())?;
        let j: usize = fields[1].parse().map_err(|_| malformed())?;
        let w: f64 = match fields.get(2) {
            Some(s) => s.parse().map_err(|_| malformed())?,
            None => 1.0,
        };
        if !(w > 0.0) || !w.is_finite() {
            return Err(malformed());
        }
        for node in [i, j] {
            if node >= n {
                return Err(GraphError::NodeOutOfRange {
                    path: path.to_path_buf(),
                    line: line_no,
                    node,
                    n,
                });
            }
        }
        if i == j {
            continue;
        }
        adjacency.set(i, j, w);
        adjacency.set(j, i, w);
    }
    Ok(adjacency)
}

fn parse_labels(path: &Path, n: usize) -> Result<Vec<usize>, GraphError> {
    let text = read(path)?;
    let mut labels = Vec::with_capacity(n);
    let mut last_line = 0;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        last_line = idx + 1;
        let y = line.parse().map_err(|_| GraphError::BadLabel {
            path: path.to_path_buf(),
            line: last_line,
            value: line.to_string(),
        })?;
        labels.push(y);
    }
    if labels.len() != n {
        return Err(GraphError::LabelCountMismatch {
            path: path.to_path_buf(),
            line: last_line,
            expected: n,
            found: labels.len(),
        });
    }
    Ok(labels)
}

/// Loads a graph. The node count is the feature row count; edges are
/// symmetrized, duplicates collapse and self-loops are dropped.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<Graph, GraphError> {
    let features = parse_features(feature_path)?;
    let n = features.rows();
    let adjacency = parse_edges(edge_path, n)?;
    let labels = label_path.map(|p| parse_labels(p, n)).transpose()?;
    let c = labels
        .as_ref()
        .and_then(|l| l.iter().max().map(|m| m + 1))
        .unwrap_or(0);
    Graph::new(adjacency, features, labels, c)
}

/// Loads `edges.txt`, `features.csv` and, when present, `labels.txt` from `dir`.
pub fn load_graph_dir(dir: &Path) -> Result<Graph, GraphError> {
    let labels = dir.join(LABEL_FILE);
    load_graph(
        &dir.join(EDGE_FILE),
        &dir.join(FEATURE_FILE),
        labels.exists().then_some(labels.as_path()),
    )
}

pub fn save_graph_dir(graph: &Graph, dir: &Path) -> Result<(), GraphError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let path = dir.join(EDGE_FILE);
    let mut out = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
    let n = graph.num_nodes();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = graph.adjacency.get(i, j);
            if w == 0.0 {
                continue;
            }
            if w == 1.0 {
                writeln!(out, "{i} {j}")
            } else {
                writeln!(out, "{i} {j} {w}")
            }
            .map_err(io_err(&path))?;
        }
    }
    out.flush().map_err(io_err(&path))?;

    let path = dir.join(FEATURE_FILE);
    let mut out = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
    for i in 0..n {
        let row: Vec<String> = graph.features.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(",")).map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))?;

    if let Some(labels) = &graph.labels {
        let path = dir.join(LABEL_FILE);
        let mut out = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
        for y in labels {
            writeln!(out, "{y}").map_err(io_err(&path))?;
        }
        out.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

// ── metrics ──────────────────────────────────────────────────────────

pub fn save_metrics(metrics: &RunMetrics, path: &Path) -> Result<(), GraphError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut text = serde_json::to_string_pretty(metrics).map_err(|source| GraphError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn load_metrics(path: &Path) -> Result<RunMetrics, GraphError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|source| GraphError::Json {
        path: path.to_path_buf(),
        source,
    })
}

// ── synthetic generators ─────────────────────────────────────────────

/// Two balanced classes: the first `ceil(n/2)` nodes are class 0.
fn two_block_labels(n: usize) -> Vec<usize> {
    let first = n.div_ceil(2);
    (0..n).map(|i| usize::from(i >= first)).collect()
}

/// Parameters of the attribute-shift family. Adjacency and class centers
/// depend only on `topology_seed`; the Gaussian noise only on `noise_seed`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttributeShift {
    pub n: usize,
    pub d: usize,
    pub edge_prob: f64,
    pub topology_seed: u64,
    pub noise_seed: u64,
}

impl AttributeShift {
    pub fn new(topology_seed: u64) -> Self {
        AttributeShift {
            n: 100,
            d: 10,
            edge_prob: 0.3,
            topology_seed,
            noise_seed: topology_seed,
        }
    }

    pub fn adjacency(&self) -> Matrix {
        let mut rng = seeding::stream(self.topology_seed, "attribute-shift/topology");
        let n = self.n;
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < self.edge_prob {
                    a.set(i, j, 1.0);
                    a.set(j, i, 1.0);
                }
            }
        }
        a
    }

    /// Two class centers drawn uniformly from `[-10, 10]^d`.
    pub fn centers(&self) -> Matrix {
        let mut rng = seeding::stream(self.topology_seed, "attribute-shift/centers");
        Matrix::from_fn(2, self.d, |_, _| rng.random_range(-10.0..=10.0))
    }

    pub fn generate(&self, cluster_std: f64) -> Result<Graph, GraphError> {
        if !(cluster_std >= 0.0) || !cluster_std.is_finite() {
            return Err(GraphError::Invalid(format!("cluster_std {cluster_std} must be >= 0")));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(GraphError::Invalid(format!("edge_prob {} outside [0,1]", self.edge_prob)));
        }
        let labels = two_block_labels(self.n);
        let centers = self.centers();
        let mut rng = seeding::stream(self.noise_seed, "attribute-shift/noise");
        let mut features = Matrix::zeros(self.n, self.d);
        for (i, &y) in labels.iter().enumerate() {
            for j in 0..self.d {
                let eps: f64 = rng.sample(StandardNormal);
                features.set(i, j, centers.get(y, j) + cluster_std * eps);
            }
        }
        Graph::new(self.adjacency(), features, Some(labels), 2)
    }
}

/// Attribute-shift graph whose topology, centers and noise all derive from `seed`.
pub fn gen_attribute_shift(
    cluster_std: f64,
    seed: u64,
    n: usize,
    d: usize,
    edge_prob: f64,
) -> Result<Graph, GraphError> {
    AttributeShift {
        n,
        d,
        edge_prob,
        topology_seed: seed,
        noise_seed: seed,
    }
    .generate(cluster_std)
}

/// Source and target share adjacency and class centers; their noise streams
/// are independent.
pub fn attribute_shift_pair(
    source_std: f64,
    target_std: f64,
    seed: u64,
    n: usize,
    d: usize,
    edge_prob: f64,
) -> Result<DomainPair, GraphError> {
    let base = AttributeShift {
        n,
        d,
        edge_prob,
        topology_seed: seed,
        noise_seed: 0,
    };
    let source = AttributeShift {
        noise_seed: seeding::derive_seed(seed, "pair/source"),
        ..base
    }
    .generate(source_std)?;
    let target = AttributeShift {
        noise_seed: seeding::derive_seed(seed, "pair/target"),
        ..base
    }
    .generate(target_std)?;
    DomainPair::new(source, target)
}

/// Two-community stochastic block model with Uniform(0,1] edge weights and
/// all-ones features. Intra-block edge probability `p`, inter-block `p/10`.
pub fn gen_sbm(seed: u64, n: usize, p: f64, d: usize) -> Result<Graph, GraphError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(GraphError::Invalid(format!("SBM probability {p} outside (0,1]")));
    }
    let first = n / 2;
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= first)).collect();
    let mut rng = seeding::stream(seed, "sbm");
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = if labels[i] == labels[j] { p } else { p / 10.0 };
            if rng.random::<f64>() < prob {
                let w = 1.0 - rng.random::<f64>();
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    let c = if n > first && first > 0 { 2 } else { 1 };
    Graph::new(a, Matrix::ones(n, d), Some(labels), c)
}
