//! Epoch-based momentum SGD on a labelled set, shared by expert training and
//! from-scratch evaluation.

use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{self, MlpSpec, ParamVector};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Apply the spec's dropout rate during training passes.
    pub dropout: bool,
}

/// Runs `opts.epochs` epochs of shuffled mini-batch momentum SGD, calling
/// `after_epoch(epoch, params)` with 1-based epoch numbers.
pub fn train_epochs<F>(
    spec: &MlpSpec,
    mut params: ParamVector,
    inputs: &Matrix,
    labels: &[f64],
    opts: &TrainOptions,
    rng: &mut dyn RngCore,
    mut after_epoch: F,
) -> Result<ParamVector>
where
    F: FnMut(usize, &ParamVector) -> Result<()>,
{
    crate::error::check_dim("parameter vector", spec.param_count(), params.len())?;
    crate::error::check_dim("input width", spec.input_dim(), inputs.cols())?;
    crate::error::check_dim("labels", inputs.rows(), labels.len())?;
    let n = inputs.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot train on an empty set".into()));
    }
    let batch_size = opts.batch_size.max(1);
    let mut velocity = alloc::vec![0.0; params.len()];
    for epoch in 1..=opts.epochs {
        let order = rng::shuffled(rng, n);
        for chunk in order.chunks(batch_size) {
            let x = inputs.select_rows(chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = if opts.dropout && spec.dropout_rate > 0.0 {
                net::loss_and_grad_unchecked(spec, &params, &x, &y, Some(&mut *rng))
            } else {
                net::loss_and_grad_unchecked(spec, &params, &x, &y, None)
            };
            if !loss.is_finite() || !crate::vector::all_finite(&grad) {
                return Err(Error::Diverged { epoch });
            }
            net::sgd_step_in_place(&mut params, &grad, opts.lr, &mut velocity, opts.momentum);
        }
        if !crate::vector::all_finite(&params) {
            return Err(Error::Diverged { epoch });
        }
        after_epoch(epoch, &params)?;
    }
    Ok(params)
}
