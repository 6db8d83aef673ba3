//! Shared helpers for the integration tests: random instances, a central
//! finite-difference harness and brute-force loop oracles written
//! independently of the library code paths.
#![allow(dead_code)]

use gaa::featgraph::ViewMatrices;
use gaa::graphio::{DomainPair, Graph};
use gaa::model::{self, DomainInput, DropoutStreams, GaaModel, Hyper, Variant};
use gaa::numcore::{Matrix, Tape, TensorId};
use gaa::train::compose_loss;
use gaa::losses::LossWeights;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Below this absolute gap two derivatives count as equal regardless of scale.
pub const FD_ABS_FLOOR: f64 = 1e-7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Uniform entries in `[lo, hi)` whose magnitude is at least `gap` away from
/// every point in `avoid` (keeps finite differences off kinks).
pub fn rand_matrix_avoiding(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
    avoid: &[f64],
    gap: f64,
) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| loop {
        let v = rng.random_range(lo..hi);
        if avoid.iter().all(|a| (v - a).abs() > gap) {
            break v;
        }
    })
}

/// Random symmetric non-negative adjacency with zero diagonal.
pub fn rand_adjacency(rng: &mut ChaCha8Rng, n: usize, density: f64, weighted: bool) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < density {
                let w = if weighted { rng.random_range(0.1..2.0) } else { 1.0 };
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    a
}

pub fn rand_graph(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> Graph {
    let adjacency = rand_adjacency(rng, n, 0.4, true);
    let features = rand_matrix(rng, n, d, -2.0, 2.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Graph::new(adjacency, features, Some(labels), classes).unwrap()
}

/// Relative gap with the denominator floored at `FD_ABS_FLOOR / FD_REL_TOL`,
/// so `rel_err <= FD_REL_TOL` means "relative error within tolerance, or
/// absolute gap below the floor".
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_ABS_FLOOR / FD_REL_TOL)
}

/// Worst relative error between reverse-mode gradients and central finite
/// differences of `build` with respect to each input. `factor` multiplies
/// the numeric side (use `-lambda` across a gradient-reversal layer).
pub fn fd_check_scaled<F>(inputs: &[Matrix], factor: f64, build: F) -> f64
where
    F: Fn(&mut Tape, &[TensorId]) -> TensorId,
{
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).unwrap();
    let analytic: Vec<Matrix> = ids
        .iter()
        .zip(inputs)
        .map(|(&id, m)| tape.grad(id).cloned().unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect();

    let eval = |ms: &[Matrix]| -> f64 {
        let mut t = Tape::new();
        let ids: Vec<TensorId> = ms.iter().map(|m| t.param(m.clone())).collect();
        let l = build(&mut t, &ids);
        t.scalar(l)
    };
    let mut worst = 0.0f64;
    let mut work: Vec<Matrix> = inputs.to_vec();
    for k in 0..inputs.len() {
        for idx in 0..inputs[k].len() {
            let orig = inputs[k].as_slice()[idx];
            work[k].as_mut_slice()[idx] = orig + FD_STEP;
            let up = eval(&work);
            work[k].as_mut_slice()[idx] = orig - FD_STEP;
            let down = eval(&work);
            work[k].as_mut_slice()[idx] = orig;
            let numeric = factor * (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[k].as_slice()[idx], numeric));
        }
    }
    worst
}

pub fn fd_check<F>(inputs: &[Matrix], build: F) -> f64
where
    F: Fn(&mut Tape, &[TensorId]) -> TensorId,
{
    fd_check_scaled(inputs, 1.0, build)
}

/// `Σ y ⊙ R` for a fixed random `R`, turning any tensor into a scalar whose
/// gradient exercises every entry with a distinct weight.
pub fn weighted_sum(tape: &mut Tape, y: TensorId, r: &Matrix) -> TensorId {
    let w = tape.constant(r.clone());
    let h = tape.hadamard(y, w).unwrap();
    tape.sum(h).unwrap()
}

// ── per-op gradient suite ────────────────────────────────────────────

/// Runs every differentiable op once on a random instance derived from
/// `seed` and returns `(op name, worst relative error)`.
pub fn op_gradient_suite(seed: u64) -> Vec<(&'static str, f64)> {
    let mut g = rng(seed);
    let r = g.random_range(1..=8usize);
    let c = g.random_range(1..=6usize);
    let m = g.random_range(1..=6usize);
    let x = rand_matrix(&mut g, r, c, -2.0, 2.0);
    let y = rand_matrix(&mut g, r, c, -2.0, 2.0);
    let row = rand_matrix(&mut g, 1, c, -2.0, 2.0);
    let col = rand_matrix(&mut g, r, 1, -2.0, 2.0);
    let b = rand_matrix(&mut g, c, m, -2.0, 2.0);
    let w_rc = rand_matrix(&mut g, r, c, -1.0, 1.0);
    let w_rm = rand_matrix(&mut g, r, m, -1.0, 1.0);
    let w_cr = rand_matrix(&mut g, c, r, -1.0, 1.0);
    let w_1c = rand_matrix(&mut g, 1, c, -1.0, 1.0);
    let w_r1 = rand_matrix(&mut g, r, 1, -1.0, 1.0);
    let kinked = rand_matrix_avoiding(&mut g, r, c, -2.0, 2.0, &[0.0], 1e-3);
    let clamp_in = rand_matrix_avoiding(&mut g, r, c, -2.0, 2.0, &[-1.0, 1.0], 1e-3);
    let positive = rand_matrix(&mut g, r, c, 0.1, 2.0);
    let scale_c = g.random_range(-3.0..3.0);
    let lambda = g.random_range(0.1..3.0);
    let mask_seed: u64 = g.random();

    let mut out = Vec::new();
    out.push(("matmul", fd_check(&[x.clone(), b.clone()], |t, ids| {
        let p = t.matmul(ids[0], ids[1]).unwrap();
        weighted_sum(t, p, &w_rm)
    })));
    out.push(("transpose", fd_check(&[x.clone()], |t, ids| {
        let p = t.transpose(ids[0]);
        weighted_sum(t, p, &w_cr)
    })));
    for (name, other) in [("full", &y), ("row", &row), ("col", &col)] {
        let tag: &'static str = match name {
            "full" => "add",
            "row" => "add/row-broadcast",
            _ => "add/col-broadcast",
        };
        out.push((tag, fd_check(&[x.clone(), other.clone()], |t, ids| {
            let p = t.add(ids[0], ids[1]).unwrap();
            weighted_sum(t, p, &w_rc)
        })));
        let tag: &'static str = match name {
            "full" => "sub",
            "row" => "sub/row-broadcast",
            _ => "sub/col-broadcast",
        };
        out.push((tag, fd_check(&[x.clone(), other.clone()], |t, ids| {
            let p = t.sub(ids[0], ids[1]).unwrap();
            weighted_sum(t, p, &w_rc)
        })));
        let tag: &'static str = match name {
            "full" => "hadamard",
            "row" => "hadamard/row-broadcast",
            _ => "hadamard/col-broadcast",
        };
        out.push((tag, fd_check(&[x.clone(), other.clone()], |t, ids| {
            let p = t.hadamard(ids[0], ids[1]).unwrap();
            weighted_sum(t, p, &w_rc)
        })));
    }
    out.push(("scale", fd_check(&[x.clone()], |t, ids| {
        let p = t.scale(ids[0], scale_c);
        weighted_sum(t, p, &w_rc)
    })));
    out.push(("relu", fd_check(&[kinked.clone()], |t, ids| {
        let p = t.relu(ids[0]);
        weighted_sum(t, p, &w_rc)
    })));
    out.push(("exp", fd_check(&[x.clone()], |t, ids| {
        let p = t.exp(ids[0]);
        weighted_sum(t, p, &w_rc)
    })));
    out.push(("log", fd_check(&[positive.clone()], |t, ids| {
        let p = t.log(ids[0]).unwrap();
        weighted_sum(t, p, &w_rc)
    })));
    out.push(("neg", fd_check(&[x.clone()], |t, ids| {
        let p = t.neg(ids[0]);
        weighted_sum(t, p, &w_rc)
    })));
    out.push(("sigmoid", fd_check(&[x.clone()], |t, ids| {
        let p = t.sigmoid(ids[0]);
        weighted_sum(t, p, &w_rc)
    })));
    out.push(("clamp", fd_check(&[clamp_in.clone()], |t, ids| {
        let p = t.clamp(ids[0], -1.0, 1.0);
        weighted_sum(t, p, &w_rc)
    })));
    out.push(("row_softmax", fd_check(&[x.clone()], |t, ids| {
        let p = t.row_softmax(ids[0]).unwrap();
        weighted_sum(t, p, &w_rc)
    })));
    out.push(("sum", fd_check(&[x.clone()], |t, ids| {
        let p = t.sum(ids[0]).unwrap();
        t.scale(p, 0.7)
    })));
    out.push(("mean_rows", fd_check(&[x.clone()], |t, ids| {
        let p = t.mean_rows(ids[0]).unwrap();
        weighted_sum(t, p, &w_1c)
    })));
    out.push(("sq_l2", fd_check(&[x.clone()], |t, ids| t.sq_l2(ids[0]).unwrap())));
    out.push(("dropout", fd_check(&[x.clone()], |t, ids| {
        let mut mask_rng = rng(mask_seed);
        let p = t.dropout(ids[0], 0.3, &mut mask_rng, true).unwrap();
        weighted_sum(t, p, &w_rc)
    })));
    out.push(("row_cosine_gate", fd_check(&[x.clone(), y.clone()], |t, ids| {
        let p = t.row_cosine_gate(ids[0], ids[1]).unwrap();
        weighted_sum(t, p, &w_r1)
    })));
    // forward is the identity, so the reversed gradient is -lambda times the
    // finite difference of the same expression
    out.push(("grad_reverse", fd_check_scaled(&[x.clone()], -lambda, |t, ids| {
        let p = t.grad_reverse(ids[0], lambda);
        let q = t.sigmoid(p);
        weighted_sum(t, q, &w_rc)
    })));
    out
}

// ── full-model gradient check ────────────────────────────────────────

pub struct TinyProblem {
    pub pair: DomainPair,
    pub source_views: ViewMatrices,
    pub target_views: ViewMatrices,
    pub model: GaaModel,
    pub dropout_seed: u64,
    pub weights: LossWeights,
}

/// Random domain pair (≤ 8 nodes, ≤ 6 features) and a small model around it.
pub fn tiny_problem(seed: u64, variant: Variant) -> TinyProblem {
    let mut g = rng(seed);
    let d = g.random_range(2..=6usize);
    let classes = g.random_range(2..=3usize);
    let ns = g.random_range(3..=8usize);
    let nt = g.random_range(3..=8usize);
    let source = rand_graph(&mut g, ns, d, classes);
    let target = rand_graph(&mut g, nt, d, classes);
    let k = g.random_range(1..=2usize);
    let hyper = Hyper {
        hidden: g.random_range(2..=5usize),
        embed: g.random_range(2..=4usize),
        dropout: 0.3,
        layer_dropout: 0.0,
        grl_lambda: 1.0,
        relu_last: false,
    };
    let model = GaaModel::init(variant, hyper, d, classes, k, g.random());
    let weights = LossWeights {
        alpha: g.random_range(0.1..2.0),
        beta: g.random_range(0.1..2.0),
        tau: g.random_range(0.1..2.0),
    };
    TinyProblem {
        source_views: ViewMatrices::build(&source, k).unwrap(),
        target_views: ViewMatrices::build(&target, k).unwrap(),
        pair: DomainPair::new(source, target).unwrap(),
        model,
        dropout_seed: g.random(),
        weights,
    }
}

impl TinyProblem {
    /// Training-mode total loss with fresh dropout streams, so repeated calls
    /// see identical masks.
    pub fn total_loss(&self, model: &GaaModel, tape: &mut Tape) -> (TensorId, model::BoundParams) {
        let bound = model.bind(tape);
        let mut streams = DropoutStreams::new(self.dropout_seed);
        let out = model::forward_all(
            tape,
            model,
            &bound,
            DomainInput {
                views: &self.source_views,
                features: self.pair.source.features(),
            },
            DomainInput {
                views: &self.target_views,
                features: self.pair.target.features(),
            },
            true,
            &mut streams,
        )
        .unwrap();
        let labels = self.pair.source.labels().unwrap();
        let (total, _) = compose_loss(tape, model.variant, &out, labels, self.weights).unwrap();
        (total, bound)
    }

    pub fn loss_value(&self, model: &GaaModel) -> f64 {
        let mut tape = Tape::new();
        let (total, _) = self.total_loss(model, &mut tape);
        tape.scalar(total)
    }

    /// Worst relative error over every parameter entry of the composed loss.
    ///
    /// A gradient-reversal layer makes the reverse sweep deliberately
    /// disagree with the forward function, so the check flips it to
    /// `lambda = -1`, an exact pass-through in both directions. The
    /// reversal itself is covered by the per-op suite.
    pub fn full_loss_fd(&self) -> f64 {
        let mut model = self.model.clone();
        model.hyper.grl_lambda = -1.0;
        let mut tape = Tape::new();
        let (total, bound) = self.total_loss(&model, &mut tape);
        tape.backward(total).unwrap();
        let analytic = bound.grads(&tape);

        let mut worst = 0.0f64;
        let n_params = analytic.len();
        for p in 0..n_params {
            let len = analytic[p].len();
            for idx in 0..len {
                let orig = model.params_mut()[p].as_slice()[idx];
                model.params_mut()[p].as_mut_slice()[idx] = orig + FD_STEP;
                let up = self.loss_value(&model);
                model.params_mut()[p].as_mut_slice()[idx] = orig - FD_STEP;
                let down = self.loss_value(&model);
                model.params_mut()[p].as_mut_slice()[idx] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                worst = worst.max(rel_err(analytic[p].as_slice()[idx], numeric));
            }
        }
        worst
    }
}

// ── brute-force oracles ──────────────────────────────────────────────

pub fn oracle_cosine(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut dot = 0.0;
            let mut ni = 0.0;
            let mut nj = 0.0;
            for k in 0..x.cols() {
                dot += x.get(i, k) * x.get(j, k);
                ni += x.get(i, k) * x.get(i, k);
                nj += x.get(j, k) * x.get(j, k);
            }
            if ni > 0.0 && nj > 0.0 {
                out.set(i, j, dot / (ni.sqrt() * nj.sqrt()));
            }
        }
    }
    out
}

/// Selection by repeated arg-max scans: the best remaining candidate, lower
/// index first on equal similarity.
pub fn oracle_knn(sm: &Matrix, k: usize) -> Matrix {
    let n = sm.rows();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        let mut taken = vec![false; n];
        taken[i] = true;
        for _ in 0..k {
            let mut best: Option<usize> = None;
            for j in 0..n {
                if taken[j] {
                    continue;
                }
                best = match best {
                    None => Some(j),
                    Some(b) if sm.get(i, j) > sm.get(i, b) => Some(j),
                    other => other,
                };
            }
            let j = best.unwrap();
            taken[j] = true;
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
    }
    a
}

pub fn oracle_sym_normalize(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut deg = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            deg[i] += a.get(i, j) + if i == j { 1.0 } else { 0.0 };
        }
    }
    Matrix::from_fn(n, n, |i, j| {
        let v = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
        v / (deg[i].sqrt() * deg[j].sqrt())
    })
}

fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
    })
}

/// Explicit double loop over node pairs and features: (topo, attr), both
/// divided by `norm`.
pub fn oracle_bound(gs: &Graph, gt: &Graph, norm: usize) -> (f64, f64) {
    let ps = naive_matmul(gs.adjacency(), gs.features());
    let pt = naive_matmul(gt.adjacency(), gt.features());
    let (mut topo, mut attr) = (0.0, 0.0);
    for i in 0..gs.num_nodes() {
        for j in 0..gt.num_nodes() {
            for k in 0..gs.feature_dim() {
                topo += (ps.get(i, k) - pt.get(j, k)).powi(2);
                attr += (gs.features().get(i, k) - gt.features().get(j, k)).powi(2);
            }
        }
    }
    (topo / norm as f64, attr / norm as f64)
}

pub fn oracle_avg_abs(a: &Matrix, x: &Matrix) -> f64 {
    let f = naive_matmul(a, x);
    let mut s = 0.0;
    for i in 0..f.rows() {
        for j in 0..f.cols() {
            s += f.get(i, j).abs();
        }
    }
    s / (f.rows() * f.cols()) as f64
}

pub fn oracle_margin(scores: &Matrix, labels: &[usize], gamma: f64) -> f64 {
    let mut fails = 0;
    for (i, &y) in labels.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for c in 0..scores.cols() {
            if c != y && scores.get(i, c) > best {
                best = scores.get(i, c);
            }
        }
        if scores.get(i, y) <= gamma + best {
            fails += 1;
        }
    }
    fails as f64 / labels.len() as f64
}

pub fn oracle_ce(p: &Matrix, labels: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        s -= p.get(i, y).max(1e-12).ln();
    }
    s / labels.len() as f64
}

pub fn oracle_bce(ps: &Matrix, pt: &Matrix) -> f64 {
    let mut s = 0.0;
    for i in 0..ps.rows() {
        s -= ps.get(i, 0).clamp(1e-12, 1.0 - 1e-12).ln();
    }
    for i in 0..pt.rows() {
        s -= (1.0 - pt.get(i, 0).clamp(1e-12, 1.0 - 1e-12)).ln();
    }
    s / (ps.rows() + pt.rows()) as f64
}

pub fn oracle_entropy(p: &Matrix) -> f64 {
    let mut s = 0.0;
    for i in 0..p.rows() {
        for c in 0..p.cols() {
            let v = p.get(i, c);
            s -= v * v.max(1e-12).ln();
        }
    }
    s / p.rows() as f64
}

pub fn oracle_attention(z: &Matrix, wq: &Matrix, wk: &Matrix, wv: &Matrix) -> Matrix {
    let (n, e) = (z.rows(), z.cols());
    // per-node projections: q_i = Wq z_i
    let project = |w: &Matrix| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..e).map(|a| (0..e).map(|b| w.get(a, b) * z.get(i, b)).sum()).collect())
            .collect()
    };
    let (q, k, v) = (project(wq), project(wk), project(wv));
    let mut out = Matrix::zeros(n, e);
    for i in 0..n {
        let scores: Vec<f64> = (0..n)
            .map(|j| (0..e).map(|a| k[i][a] * q[j][a]).sum::<f64>() / (e as f64).sqrt())
            .collect();
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let tot: f64 = ex.iter().sum();
        for a in 0..e {
            out.set(i, a, (0..n).map(|j| ex[j] / tot * v[j][a]).sum());
        }
    }
    out
}

pub fn oracle_gate(zf: &Matrix, z: &Matrix) -> Vec<f64> {
    (0..z.rows())
        .map(|i| {
            let dot: f64 = (0..z.cols()).map(|k| zf.get(i, k) * z.get(i, k)).sum();
            let a: f64 = (0..z.cols()).map(|k| zf.get(i, k).powi(2)).sum::<f64>().sqrt();
            let b: f64 = (0..z.cols()).map(|k| z.get(i, k).powi(2)).sum::<f64>().sqrt();
            if a == 0.0 || b == 0.0 {
                0.5
            } else {
                (1.0 + dot / (a * b)) / 2.0
            }
        })
        .collect()
}

pub fn oracle_alignment(s: &Matrix, t: &Matrix, fs: &Matrix, ft: &Matrix) -> f64 {
    let mean = |m: &Matrix, k: usize| (0..m.rows()).map(|i| m.get(i, k)).sum::<f64>() / m.rows() as f64;
    let mut total = 0.0;
    for k in 0..s.cols() {
        total += (mean(s, k) - mean(t, k)).powi(2);
        total += (mean(fs, k) - mean(ft, k)).powi(2);
    }
    total
}

pub fn oracle_accuracy(probs: &Matrix, labels: &[usize]) -> f64 {
    let mut hits = 0;
    for (i, &y) in labels.iter().enumerate() {
        let mut best = 0;
        for c in 1..probs.cols() {
            if probs.get(i, c) > probs.get(i, best) {
                best = c;
            }
        }
        if best == y {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

pub fn rand_probs(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Matrix {
    let mut p = rand_matrix(rng, n, c, 0.0, 1.0);
    for i in 0..n {
        let s: f64 = p.row(i).iter().sum();
        p.row_mut(i).iter_mut().for_each(|v| *v /= s);
    }
    p
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Criterion-style sweep: each listed operation against its loop oracle on
/// `instances` random inputs. Returns `(name, all matched, worst gap)`.
pub fn oracle_equivalence(instances: u64) -> Vec<(&'static str, bool, f64)> {
    use gaa::analysis;
    use gaa::featgraph;
    use gaa::losses;

    let mut worst = [0.0f64; 7];
    let mut ok = [true; 7];
    let mut note = |slot: usize, gap: f64, tol: f64| {
        worst[slot] = worst[slot].max(gap);
        ok[slot] &= gap <= tol;
    };
    for seed in 0..instances {
        let mut g = rng(10_000 + seed);
        let n = g.random_range(2..=10usize);
        let d = g.random_range(1..=6usize);

        let x = rand_matrix(&mut g, n, d, -2.0, 2.0);
        let sm = featgraph::cosine_similarity_matrix(&x);
        note(0, sm.max_abs_diff(&oracle_cosine(&x)), 1e-12);

        let coarse = Matrix::from_fn(n, d, |_, _| f64::from(g.random_range(-2i32..=2)));
        let csm = featgraph::cosine_similarity_matrix(&coarse);
        let k = g.random_range(1..n);
        let knn = featgraph::knn_graph(&csm, k).unwrap();
        note(1, knn.max_abs_diff(&oracle_knn(&csm, k)), 0.0);

        let (ns, nt) = (g.random_range(1..=8usize), g.random_range(1..=8usize));
        let gs = rand_graph(&mut g, ns, d, 2);
        let gt = rand_graph(&mut g, nt, d, 2);
        let r = analysis::proposition1_bound(&gs, &gt, nt).unwrap();
        let (topo, attr) = oracle_bound(&gs, &gt, nt);
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        note(2, rel(r.topo_term, topo).max(rel(r.attr_term, attr)), 1e-9);

        let c = g.random_range(2..=4usize);
        let scores = rand_matrix(&mut g, n, c, 0.0, 1.0);
        let labels: Vec<usize> = (0..n).map(|_| g.random_range(0..c)).collect();
        let gamma = [0.0, 0.1, 0.3][seed as usize % 3];
        let m = analysis::empirical_margin_loss(&scores, &labels, gamma).unwrap();
        note(3, (m - oracle_margin(&scores, &labels, gamma)).abs(), 0.0);

        let p = rand_probs(&mut g, n, c);
        let mut t = Tape::new();
        let pid = t.constant(p.clone());
        let ce = losses::source_ce(&mut t, pid, &labels).unwrap();
        note(4, rel(t.scalar(ce), oracle_ce(&p, &labels)), 1e-12);
        let ps = rand_matrix(&mut g, ns, 1, 0.0, 1.0);
        let pt = rand_matrix(&mut g, nt, 1, 0.0, 1.0);
        let (a, b) = (t.constant(ps.clone()), t.constant(pt.clone()));
        let bce = losses::domain_bce(&mut t, a, b).unwrap();
        note(5, rel(t.scalar(bce), oracle_bce(&ps, &pt)), 1e-12);
        let ent = losses::target_entropy(&mut t, pid).unwrap();
        note(6, rel(t.scalar(ent), oracle_entropy(&p)), 1e-12);
    }
    let names = [
        "cosine_similarity_matrix",
        "knn_graph",
        "proposition1_bound",
        "empirical_margin_loss",
        "source_ce",
        "domain_bce",
        "target_entropy",
    ];
    names.into_iter().zip(ok).zip(worst).map(|((n, o), w)| (n, o, w)).collect()
}
