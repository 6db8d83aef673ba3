//! The dual-view network: per-view GCN encoders, attention-based attribute
//! embeddings, cross-view refinement, the shared label head and the
//! gradient-reversed domain discriminator.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featgraph::{FeatGraphError, ViewMatrices};
use crate::graphio::Graph;
use crate::numcore::{Matrix, NumError, Tape, TensorId};
use crate::seeding;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    FeatGraph(#[from] FeatGraphError),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("graph has {found} feature columns, model expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("graph has no labels")]
    MissingLabels,
}

/// Model family; the ablations drop pieces of the full method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "GAA")]
    Gaa,
    /// No cross-view refinement.
    #[serde(rename = "GAA1")]
    Gaa1,
    /// No alignment loss.
    #[serde(rename = "GAA2")]
    Gaa2,
    /// No alignment loss and no feature-graph channel.
    #[serde(rename = "GAA3")]
    Gaa3,
    /// Source-only GCN on the topology view.
    #[serde(rename = "GCN")]
    Gcn,
    /// Source-only GCN on the kNN feature graph.
    #[serde(rename = "KNN_GCN")]
    KnnGcn,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Gaa,
        Variant::Gaa1,
        Variant::Gaa2,
        Variant::Gaa3,
        Variant::Gcn,
        Variant::KnnGcn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gaa => "GAA",
            Variant::Gaa1 => "GAA1",
            Variant::Gaa2 => "GAA2",
            Variant::Gaa3 => "GAA3",
            Variant::Gcn => "GCN",
            Variant::KnnGcn => "KNN_GCN",
        }
    }

    pub fn uses_topology(self) -> bool {
        self != Variant::KnnGcn
    }

    pub fn uses_feature_channel(self) -> bool {
        matches!(self, Variant::Gaa | Variant::Gaa1 | Variant::Gaa2 | Variant::KnnGcn)
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, Variant::Gaa | Variant::Gaa1 | Variant::Gaa2)
    }

    pub fn refines(self) -> bool {
        matches!(self, Variant::Gaa | Variant::Gaa2)
    }

    pub fn aligns(self) -> bool {
        matches!(self, Variant::Gaa | Variant::Gaa1)
    }

    /// Uses the target graph during training (domain and entropy losses).
    pub fn adapts(self) -> bool {
        !matches!(self, Variant::Gcn | Variant::KnnGcn)
    }

    /// Which view's embedding feeds the label head.
    pub fn classifier_view(self) -> View {
        if self == Variant::KnnGcn {
            View::Feature
        } else {
            View::Topology
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        match norm.as_str() {
            "GAA" => Ok(Variant::Gaa),
            "GAA1" => Ok(Variant::Gaa1),
            "GAA2" => Ok(Variant::Gaa2),
            "GAA3" => Ok(Variant::Gaa3),
            "GCN" => Ok(Variant::Gcn),
            "KNNGCN" => Ok(Variant::KnnGcn),
            _ => Err(format!(
                "unknown variant {s:?} (expected GAA, GAA1, GAA2, GAA3, GCN or KNN_GCN)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    Topology,
    Feature,
}

/// Architecture hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub hidden: usize,
    pub embed: usize,
    /// Dropout on the hidden GCN activation.
    pub dropout: f64,
    /// Dropout on the input of every GCN layer.
    pub layer_dropout: f64,
    pub grl_lambda: f64,
    /// Apply ReLU to the second (embedding) GCN layer too.
    pub relu_last: bool,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            hidden: 128,
            embed: 16,
            dropout: 0.5,
            layer_dropout: 0.0,
            grl_lambda: 1.0,
            relu_last: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnWeights {
    pub w1: Matrix,
    pub w2: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// All trainable tensors. Absent channels are `None` for the ablations that
/// drop them.
#[derive(Clone, Debug, PartialEq)]
pub struct GaaModel {
    pub variant: Variant,
    pub hyper: Hyper,
    pub input_dim: usize,
    pub num_classes: usize,
    pub knn_k: usize,
    pub topo: Option<GcnWeights>,
    pub feat: Option<GcnWeights>,
    pub attention: Option<AttentionWeights>,
    pub classifier: Linear,
    pub discriminator: Option<Linear>,
}

fn glorot(rows: usize, cols: usize, seed: u64, name: &str) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = seeding::stream(seed, &format!("init/{name}"));
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..=limit))
}

impl GaaModel {
    /// Glorot-uniform weights, zero biases. Every tensor draws from its own
    /// named stream, so dropping a channel leaves the others unchanged.
    pub fn init(
        variant: Variant,
        hyper: Hyper,
        input_dim: usize,
        num_classes: usize,
        knn_k: usize,
        seed: u64,
    ) -> Self {
        let (d, h, e, c) = (input_dim, hyper.hidden, hyper.embed, num_classes);
        let gcn = |tag: &str| GcnWeights {
            w1: glorot(d, h, seed, &format!("w1_{tag}")),
            w2: glorot(h, e, seed, &format!("w2_{tag}")),
        };
        GaaModel {
            variant,
            hyper,
            input_dim,
            num_classes,
            knn_k,
            topo: variant.uses_topology().then(|| gcn("topo")),
            feat: variant.uses_feature_channel().then(|| gcn("feat")),
            attention: variant.uses_attention().then(|| AttentionWeights {
                wq: glorot(e, e, seed, "wq"),
                wk: glorot(e, e, seed, "wk"),
                wv: glorot(e, e, seed, "wv"),
            }),
            classifier: Linear {
                weight: glorot(e, c, seed, "wc"),
                bias: Matrix::zeros(1, c),
            },
            discriminator: variant.adapts().then(|| Linear {
                weight: glorot(e, 1, seed, "wd"),
                bias: Matrix::zeros(1, 1),
            }),
        }
    }

    /// Parameters in declared order.
    pub fn named_params(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v = Vec::with_capacity(11);
        if let Some(g) = &self.topo {
            v.push(("w1_topo", &g.w1));
            v.push(("w2_topo", &g.w2));
        }
        if let Some(g) = &self.feat {
            v.push(("w1_feat", &g.w1));
            v.push(("w2_feat", &g.w2));
        }
        if let Some(a) = &self.attention {
            v.push(("wq", &a.wq));
            v.push(("wk", &a.wk));
            v.push(("wv", &a.wv));
        }
        v.push(("wc", &self.classifier.weight));
        v.push(("bc", &self.classifier.bias));
        if let Some(l) = &self.discriminator {
            v.push(("wd", &l.weight));
            v.push(("bd", &l.bias));
        }
        v
    }

    /// Same order as [`GaaModel::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = Vec::with_capacity(11);
        if let Some(g) = &mut self.topo {
            v.push(&mut g.w1);
            v.push(&mut g.w2);
        }
        if let Some(g) = &mut self.feat {
            v.push(&mut g.w1);
            v.push(&mut g.w2);
        }
        if let Some(a) = &mut self.attention {
            v.push(&mut a.wq);
            v.push(&mut a.wk);
            v.push(&mut a.wv);
        }
        v.push(&mut self.classifier.weight);
        v.push(&mut self.classifier.bias);
        if let Some(l) = &mut self.discriminator {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v
    }

    pub fn num_parameters(&self) -> usize {
        self.named_params().iter().map(|(_, m)| m.len()).sum()
    }

    /// Registers every parameter as a gradient-tracking leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let mut gcn = |g: &Option<GcnWeights>| {
            g.as_ref()
                .map(|g| (tape.param(g.w1.clone()), tape.param(g.w2.clone())))
        };
        let topo = gcn(&self.topo);
        let feat = gcn(&self.feat);
        let attention = self.attention.as_ref().map(|a| {
            (
                tape.param(a.wq.clone()),
                tape.param(a.wk.clone()),
                tape.param(a.wv.clone()),
            )
        });
        let classifier = (
            tape.param(self.classifier.weight.clone()),
            tape.param(self.classifier.bias.clone()),
        );
        let discriminator = self
            .discriminator
            .as_ref()
            .map(|l| (tape.param(l.weight.clone()), tape.param(l.bias.clone())));
        BoundParams {
            topo,
            feat,
            attention,
            classifier,
            discriminator,
        }
    }
}

/// Tape handles of a model's parameters for one forward/backward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundParams {
    pub topo: Option<(TensorId, TensorId)>,
    pub feat: Option<(TensorId, TensorId)>,
    pub attention: Option<(TensorId, TensorId, TensorId)>,
    pub classifier: (TensorId, TensorId),
    pub discriminator: Option<(TensorId, TensorId)>,
}

impl BoundParams {
    /// Handles in the same order as [`GaaModel::named_params`].
    pub fn ids(&self) -> Vec<TensorId> {
        let mut v = Vec::with_capacity(11);
        if let Some((a, b)) = self.topo {
            v.extend([a, b]);
        }
        if let Some((a, b)) = self.feat {
            v.extend([a, b]);
        }
        if let Some((q, k, w)) = self.attention {
            v.extend([q, k, w]);
        }
        v.extend([self.classifier.0, self.classifier.1]);
        if let Some((a, b)) = self.discriminator {
            v.extend([a, b]);
        }
        v
    }

    pub fn grads(&self, tape: &Tape) -> Vec<Matrix> {
        self.ids()
            .into_iter()
            .map(|id| tape.grad(id).expect("parameters track gradients").clone())
            .collect()
    }
}

// ── building blocks ──────────────────────────────────────────────────

/// Dropout settings shared by both GCN layers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodeOptions {
    pub dropout: f64,
    pub layer_dropout: f64,
    pub relu_last: bool,
    pub training: bool,
}

impl EncodeOptions {
    pub fn from_hyper(hyper: &Hyper, training: bool) -> Self {
        EncodeOptions {
            dropout: hyper.dropout,
            layer_dropout: hyper.layer_dropout,
            relu_last: hyper.relu_last,
            training,
        }
    }
}

/// Two-layer GCN: `Z = Norm · drop(ReLU(Norm · X · W1)) · W2`.
pub fn gcn_encode(
    tape: &mut Tape,
    norm: TensorId,
    x: TensorId,
    w1: TensorId,
    w2: TensorId,
    opts: EncodeOptions,
    rng: &mut ChaCha8Rng,
) -> Result<TensorId, NumError> {
    let x = tape.dropout(x, opts.layer_dropout, rng, opts.training)?;
    let nx = tape.matmul(norm, x)?;
    let pre = tape.matmul(nx, w1)?;
    let hidden = tape.relu(pre);
    let hidden = tape.dropout(hidden, opts.dropout, rng, opts.training)?;
    let hidden = tape.dropout(hidden, opts.layer_dropout, rng, opts.training)?;
    let hw = tape.matmul(hidden, w2)?;
    let z = tape.matmul(norm, hw)?;
    Ok(if opts.relu_last { tape.relu(z) } else { z })
}

/// `softmax(KᵀQ / √e) Mᵀ` with `Q = Wq Zᵀ`, `K = Wk Zᵀ`, `M = Wv Zᵀ`.
pub fn attention_embed(
    tape: &mut Tape,
    z: TensorId,
    wq: TensorId,
    wk: TensorId,
    wv: TensorId,
) -> Result<TensorId, NumError> {
    let e = tape.shape(z).1;
    let zt = tape.transpose(z);
    let q = tape.matmul(wq, zt)?;
    let k = tape.matmul(wk, zt)?;
    let m = tape.matmul(wv, zt)?;
    let kt = tape.transpose(k);
    let raw = tape.matmul(kt, q)?;
    let scores = tape.scale(raw, 1.0 / (e as f64).sqrt());
    let weights = tape.row_softmax(scores)?;
    let mt = tape.transpose(m);
    tape.matmul(weights, mt)
}

/// Per-node agreement between the two views, `(1 + cos) / 2`, as an n x 1 gate.
pub fn cross_view_scores(tape: &mut Tape, z_feat: TensorId, z_topo: TensorId) -> Result<TensorId, NumError> {
    tape.row_cosine_gate(z_feat, z_topo)
}

/// Scales row i of `att` by `s[i]`.
pub fn refine(tape: &mut Tape, att: TensorId, s: TensorId) -> Result<TensorId, NumError> {
    let (n, _) = tape.shape(att);
    if tape.shape(s) != (n, 1) {
        return Err(NumError::Shape {
            op: "refine",
            left: tape.shape(att),
            right: tape.shape(s),
        });
    }
    tape.hadamard(att, s)
}

pub fn classify(tape: &mut Tape, z: TensorId, wc: TensorId, bias: TensorId) -> Result<TensorId, NumError> {
    let logits = tape.matmul(z, wc)?;
    let logits = tape.add(logits, bias)?;
    tape.row_softmax(logits)
}

/// Probability that each node comes from the source domain.
pub fn domain_discriminate(
    tape: &mut Tape,
    z: TensorId,
    grl_lambda: f64,
    wd: TensorId,
    bias: TensorId,
) -> Result<TensorId, NumError> {
    let reversed = tape.grad_reverse(z, grl_lambda);
    let logits = tape.matmul(reversed, wd)?;
    let logits = tape.add(logits, bias)?;
    Ok(tape.sigmoid(logits))
}

// ── full forward pass ────────────────────────────────────────────────

/// One domain's inputs: its propagation matrices and node features.
#[derive(Clone, Copy, Debug)]
pub struct DomainInput<'a> {
    pub views: &'a ViewMatrices,
    pub features: &'a Matrix,
}

/// Independent dropout streams per (view, domain).
#[derive(Clone, Debug)]
pub struct DropoutStreams {
    pub topo_source: ChaCha8Rng,
    pub topo_target: ChaCha8Rng,
    pub feat_source: ChaCha8Rng,
    pub feat_target: ChaCha8Rng,
}

impl DropoutStreams {
    pub fn new(seed: u64) -> Self {
        DropoutStreams {
            topo_source: seeding::stream(seed, "dropout/topo/source"),
            topo_target: seeding::stream(seed, "dropout/topo/target"),
            feat_source: seeding::stream(seed, "dropout/feat/source"),
            feat_target: seeding::stream(seed, "dropout/feat/target"),
        }
    }
}

/// Handles of every intermediate the losses consume. Pieces a variant does
/// not compute are `None`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOutputs {
    pub z_s: Option<TensorId>,
    pub z_t: Option<TensorId>,
    pub zf_s: Option<TensorId>,
    pub zf_t: Option<TensorId>,
    pub att_s: Option<TensorId>,
    pub att_t: Option<TensorId>,
    pub att_fs: Option<TensorId>,
    pub att_ft: Option<TensorId>,
    pub probs_s: Option<TensorId>,
    pub probs_t: Option<TensorId>,
    pub dom_s: Option<TensorId>,
    pub dom_t: Option<TensorId>,
}

struct Encoded {
    topo: Option<TensorId>,
    feat: Option<TensorId>,
}

fn encode_domain(
    tape: &mut Tape,
    bound: &BoundParams,
    input: DomainInput<'_>,
    opts: EncodeOptions,
    topo_rng: &mut ChaCha8Rng,
    feat_rng: &mut ChaCha8Rng,
) -> Result<Encoded, NumError> {
    let x = tape.constant(input.features.clone());
    let topo = match bound.topo {
        Some((w1, w2)) => {
            let norm = tape.constant(input.views.topo_norm.clone());
            Some(gcn_encode(tape, norm, x, w1, w2, opts, topo_rng)?)
        }
        None => None,
    };
    let feat = match bound.feat {
        Some((w1, w2)) => {
            let norm = tape.constant(input.views.feat_norm.clone());
            Some(gcn_encode(tape, norm, x, w1, w2, opts, feat_rng)?)
        }
        None => None,
    };
    Ok(Encoded { topo, feat })
}

/// Runs one full forward pass over a domain pair. Source and target share
/// the parameter handles in `bound`.
pub fn forward_all(
    tape: &mut Tape,
    model: &GaaModel,
    bound: &BoundParams,
    source: DomainInput<'_>,
    target: DomainInput<'_>,
    training: bool,
    streams: &mut DropoutStreams,
) -> Result<ForwardOutputs, NumError> {
    let variant = model.variant;
    let opts = EncodeOptions::from_hyper(&model.hyper, training);
    let mut out = ForwardOutputs::default();

    let src = encode_domain(
        tape,
        bound,
        source,
        opts,
        &mut streams.topo_source,
        &mut streams.feat_source,
    )?;
    out.z_s = src.topo;
    out.zf_s = src.feat;
    if variant.adapts() {
        let tgt = encode_domain(
            tape,
            bound,
            target,
            opts,
            &mut streams.topo_target,
            &mut streams.feat_target,
        )?;
        out.z_t = tgt.topo;
        out.zf_t = tgt.feat;
    }

    if let Some((wq, wk, wv)) = bound.attention {
        let mut att_pair = |z: TensorId, zf: TensorId| -> Result<(TensorId, TensorId), NumError> {
            let att = attention_embed(tape, z, wq, wk, wv)?;
            let att_f = attention_embed(tape, zf, wq, wk, wv)?;
            if !variant.refines() {
                return Ok((att, att_f));
            }
            let s = cross_view_scores(tape, zf, z)?;
            Ok((refine(tape, att, s)?, refine(tape, att_f, s)?))
        };
        if let (Some(z), Some(zf)) = (out.z_s, out.zf_s) {
            let (a, af) = att_pair(z, zf)?;
            out.att_s = Some(a);
            out.att_fs = Some(af);
        }
        if let (Some(z), Some(zf)) = (out.z_t, out.zf_t) {
            let (a, af) = att_pair(z, zf)?;
            out.att_t = Some(a);
            out.att_ft = Some(af);
        }
    }

    let (wc, bc) = bound.classifier;
    let (head_s, head_t) = match variant.classifier_view() {
        View::Topology => (out.z_s, out.z_t),
        View::Feature => (out.zf_s, out.zf_t),
    };
    if let Some(z) = head_s {
        out.probs_s = Some(classify(tape, z, wc, bc)?);
    }
    if let Some(z) = head_t {
        out.probs_t = Some(classify(tape, z, wc, bc)?);
    }

    if let Some((wd, bd)) = bound.discriminator {
        let lambda = model.hyper.grl_lambda;
        if let Some(z) = out.z_s {
            out.dom_s = Some(domain_discriminate(tape, z, lambda, wd, bd)?);
        }
        if let Some(z) = out.z_t {
            out.dom_t = Some(domain_discriminate(tape, z, lambda, wd, bd)?);
        }
    }
    Ok(out)
}

/// Class probabilities for every node of `graph` with dropout disabled.
pub fn predict_probs(model: &GaaModel, graph: &Graph) -> Result<Matrix, ModelError> {
    if graph.feature_dim() != model.input_dim {
        return Err(ModelError::InputDim {
            expected: model.input_dim,
            found: graph.feature_dim(),
        });
    }
    let norm = match model.variant.classifier_view() {
        View::Topology => crate::featgraph::sym_normalize(graph.adjacency(), true)?,
        View::Feature => {
            let knn = crate::featgraph::feature_graph(graph.features(), model.knn_k)?;
            crate::featgraph::sym_normalize(&knn, true)?
        }
    };
    let (w1, w2) = match model.variant.classifier_view() {
        View::Topology => model.topo.as_ref(),
        View::Feature => model.feat.as_ref(),
    }
    .map(|g| (&g.w1, &g.w2))
    .ok_or_else(|| ModelError::Checkpoint("encoder for the classifier view is missing".into()))?;

    let mut tape = Tape::new();
    let norm = tape.constant(norm);
    let x = tape.constant(graph.features().clone());
    let w1 = tape.constant(w1.clone());
    let w2 = tape.constant(w2.clone());
    let opts = EncodeOptions::from_hyper(&model.hyper, false);
    // eval mode never draws from the stream
    let mut rng = seeding::stream(0, "eval");
    let z = gcn_encode(&mut tape, norm, x, w1, w2, opts, &mut rng)?;
    let wc = tape.constant(model.classifier.weight.clone());
    let bc = tape.constant(model.classifier.bias.clone());
    let probs = classify(&mut tape, z, wc, bc)?;
    Ok(tape.value(probs).clone())
}

// ── checkpoint ───────────────────────────────────────────────────────

const CHECKPOINT_MAGIC: &[u8; 8] = b"GAACKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    variant: Variant,
    hyper: Hyper,
    input_dim: usize,
    num_classes: usize,
    knn_k: usize,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

/// Layout: 8-byte magic, u64 LE header length, JSON header, then every
/// tensor's row-major f64 LE payload in declared order.
pub fn save_checkpoint(model: &GaaModel, path: &Path) -> Result<(), ModelError> {
    let io = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    let params = model.named_params();
    let header = CheckpointHeader {
        variant: model.variant,
        hyper: model.hyper,
        input_dim: model.input_dim,
        num_classes: model.num_classes,
        knn_k: model.knn_k,
        tensors: params
            .iter()
            .map(|(name, m)| TensorEntry {
                name: (*name).to_string(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * model.num_parameters());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, m) in &params {
        for v in m.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)?;
    f.flush().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<GaaModel, ModelError> {
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |msg: &str| ModelError::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| bad(&format!("header: {e}")))?;

    let mut model = GaaModel::init(
        header.variant,
        header.hyper,
        header.input_dim,
        header.num_classes,
        header.knn_k,
        0,
    );
    let expected: Vec<(String, (usize, usize))> = model
        .named_params()
        .iter()
        .map(|(n, m)| ((*n).to_string(), m.shape()))
        .collect();
    let found: Vec<(String, (usize, usize))> = header
        .tensors
        .iter()
        .map(|t| (t.name.clone(), (t.rows, t.cols)))
        .collect();
    if expected != found {
        return Err(bad("tensor table does not match the declared architecture"));
    }
    let mut offset = 16 + hlen;
    for param in model.params_mut() {
        for v in param.as_mut_slice() {
            let chunk = bytes.get(offset..offset + 8).ok_or_else(|| bad("truncated payload"))?;
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            offset += 8;
        }
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(model)
}
