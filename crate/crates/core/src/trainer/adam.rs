//! Bias-corrected Adam with lazy row-sparse updates for embedding tables.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros_like(params: &[&Tensor<T>]) -> Self {
        Self {
            step: 0,
            first: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            second: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
        }
    }
}

/// One Adam step over `params`.
///
/// Tensors flagged in `row_sparse` are updated only on rows with at least
/// one nonzero gradient entry; their other rows keep both parameters and
/// moments untouched. Other tensors are updated densely, with a missing
/// gradient treated as zero.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Option<Tensor<T>>],
    row_sparse: &[bool],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len()
        || params.len() != row_sparse.len()
        || params.len() != state.first.len()
    {
        return Err(Error::Contract(format!(
            "adam_step: {} params, {} grads, {} flags, {} moment buffers",
            params.len(),
            grads.len(),
            row_sparse.len(),
            state.first.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(BETA1), T::of(BETA2));
    let bias1 = T::one() - b1.powi(t);
    let bias2 = T::one() - b2.powi(t);
    let lr = T::of(lr);
    let eps = T::of(EPSILON);

    for (idx, param) in params.iter_mut().enumerate() {
        let Some(grad) = &grads[idx] else {
            if row_sparse[idx] {
                continue;
            }
            // Dense parameter without gradient: moments still decay.
            let zero = Tensor::zeros(param.rows(), param.cols());
            update_rows(param, &zero, &mut state.first[idx], &mut state.second[idx], 0..param.rows(), [b1, b2, bias1, bias2, lr, eps]);
            continue;
        };
        if grad.shape() != param.shape() || state.first[idx].shape() != param.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                left: param.shape(),
                right: grad.shape(),
            });
        }
        let consts = [b1, b2, bias1, bias2, lr, eps];
        if row_sparse[idx] {
            let touched: Vec<usize> = (0..grad.rows())
                .filter(|&r| grad.row(r).iter().any(|&g| g != T::zero()))
                .collect();
            update_rows(param, grad, &mut state.first[idx], &mut state.second[idx], touched, consts);
        } else {
            update_rows(param, grad, &mut state.first[idx], &mut state.second[idx], 0..param.rows(), consts);
        }
    }
    Ok(())
}

fn update_rows<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    m: &mut Tensor<T>,
    v: &mut Tensor<T>,
    rows: impl IntoIterator<Item = usize>,
    [b1, b2, bias1, bias2, lr, eps]: [T; 6],
) {
    for r in rows {
        let (p, g) = (param.row_mut(r), grad.row(r));
        let (mr, vr) = (m.row_mut(r), v.row_mut(r));
        for c in 0..p.len() {
            mr[c] = b1 * mr[c] + (T::one() - b1) * g[c];
            vr[c] = b2 * vr[c] + (T::one() - b2) * g[c] * g[c];
            let m_hat = mr[c] / bias1;
            let v_hat = vr[c] / bias2;
            p[c] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
