use crate::numcore::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let m: Vec<Matrix> = params
            .into_iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        AdamState {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Weight decay is folded into the gradient
/// (`g += weight_decay * p`) before the moment updates. Gradients are zeroed
/// afterwards.
///
/// Panics if the parameter, gradient and state lists disagree in length or shape.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &mut [Matrix],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient count drift");
    assert_eq!(params.len(), state.m.len(), "parameter/state count drift");
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads.iter_mut())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        assert_eq!(p.shape(), g.shape(), "gradient shape drift");
        assert_eq!(p.shape(), m.shape(), "moment shape drift");
        let p = p.as_mut_slice();
        let g = g.as_mut_slice();
        for (((w, gi), mi), vi) in p
            .iter_mut()
            .zip(g.iter_mut())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            let grad = *gi + weight_decay * *w;
            *mi = BETA1 * *mi + (1.0 - BETA1) * grad;
            *vi = BETA2 * *vi + (1.0 - BETA2) * grad * grad;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + EPS);
            *gi = 0.0;
        }
    }
}
