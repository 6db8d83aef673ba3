//! Source cross-entropy, cross-domain alignment, adversarial domain loss,
//! target entropy and their weighted total. Every loss is a 1x1 tensor on
//! the caller's tape.

use serde::{Deserialize, Serialize};

use crate::numcore::{Matrix, NumError, Tape, TensorId};

/// Probabilities are clamped to at least this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 5.0,
            beta: 0.1,
            tau: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("tau", self.tau)] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// `-(1/n) Σ_i log p[i, y_i]`.
pub fn source_ce(tape: &mut Tape, probs: TensorId, labels: &[usize]) -> Result<TensorId, NumError> {
    let (n, c) = tape.shape(probs);
    if labels.len() != n {
        return Err(NumError::domain(
            "source_ce",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(NumError::domain("source_ce", format!("label {bad} >= class count {c}")));
    }
    let mut onehot = Matrix::zeros(n, c);
    for (i, &y) in labels.iter().enumerate() {
        onehot.set(i, y, 1.0);
    }
    let onehot = tape.constant(onehot);
    let clamped = tape.clamp(probs, PROB_FLOOR, 1.0);
    let logp = tape.log(clamped)?;
    let picked = tape.hadamard(onehot, logp)?;
    let total = tape.sum(picked)?;
    Ok(tape.scale(total, -1.0 / n as f64))
}

/// Squared distance between per-domain mean embeddings, summed over the
/// topology and attribute views.
pub fn alignment_loss(
    tape: &mut Tape,
    att_s: TensorId,
    att_t: TensorId,
    att_fs: TensorId,
    att_ft: TensorId,
) -> Result<TensorId, NumError> {
    let e = tape.shape(att_s).1;
    for id in [att_t, att_fs, att_ft] {
        if tape.shape(id).1 != e {
            return Err(NumError::Shape {
                op: "alignment_loss",
                left: tape.shape(att_s),
                right: tape.shape(id),
            });
        }
    }
    let mut view_gap = |a: TensorId, b: TensorId| -> Result<TensorId, NumError> {
        let ma = tape.mean_rows(a)?;
        let mb = tape.mean_rows(b)?;
        let diff = tape.sub(ma, mb)?;
        tape.sq_l2(diff)
    };
    let topo = view_gap(att_s, att_t)?;
    let attr = view_gap(att_fs, att_ft)?;
    tape.add(topo, attr)
}

/// Binary cross-entropy with label 1 for source rows and 0 for target rows,
/// averaged over all rows.
pub fn domain_bce(tape: &mut Tape, dom_s: TensorId, dom_t: TensorId) -> Result<TensorId, NumError> {
    for id in [dom_s, dom_t] {
        if tape.shape(id).1 != 1 {
            return Err(NumError::domain("domain_bce", "domain predictions must be n x 1"));
        }
    }
    let total_rows = (tape.shape(dom_s).0 + tape.shape(dom_t).0) as f64;
    let ps = tape.clamp(dom_s, PROB_FLOOR, 1.0 - PROB_FLOOR);
    let log_ps = tape.log(ps)?;
    let sum_s = tape.sum(log_ps)?;

    let pt = tape.clamp(dom_t, PROB_FLOOR, 1.0 - PROB_FLOOR);
    let ones = tape.constant(Matrix::ones(tape.shape(dom_t).0, 1));
    let one_minus = tape.sub(ones, pt)?;
    let log_qt = tape.log(one_minus)?;
    let sum_t = tape.sum(log_qt)?;

    let both = tape.add(sum_s, sum_t)?;
    Ok(tape.scale(both, -1.0 / total_rows))
}

/// Mean prediction entropy (nats) over target rows.
pub fn target_entropy(tape: &mut Tape, probs: TensorId) -> Result<TensorId, NumError> {
    let n = tape.shape(probs).0;
    let clamped = tape.clamp(probs, PROB_FLOOR, 1.0);
    let logp = tape.log(clamped)?;
    let plogp = tape.hadamard(probs, logp)?;
    let total = tape.sum(plogp)?;
    Ok(tape.scale(total, -1.0 / n as f64))
}

/// Loss handles feeding the total. Absent terms count as zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossTerms {
    pub align: Option<TensorId>,
    pub source: Option<TensorId>,
    pub domain: Option<TensorId>,
    pub entropy: Option<TensorId>,
}

/// `L_A + α L_S + β L_D + τ L_T`. The gradient-reversal layer inside `L_D`
/// realizes the adversarial game, so `L_D` enters with a plus sign.
pub fn total_loss(tape: &mut Tape, terms: LossTerms, w: LossWeights) -> Result<TensorId, NumError> {
    let mut acc = tape.constant(Matrix::zeros(1, 1));
    for (term, weight) in [
        (terms.align, 1.0),
        (terms.source, w.alpha),
        (terms.domain, w.beta),
        (terms.entropy, w.tau),
    ] {
        if let Some(t) = term {
            let scaled = tape.scale(t, weight);
            acc = tape.add(acc, scaled)?;
        }
    }
    Ok(acc)
}
