//! Adversarial losses and the gradient-based regularizers.
//!
//! The regularizers take the critic or generator as a closure so they can be
//! exercised on hand-built networks as well as the real ones.

use rand::Rng;
use rand_distr::StandardNormal;

use super::GanError;
use crate::autograd::{Graph, Tensor, Var};

/// Non-saturating logistic critic loss:
/// `mean softplus(fake) + mean softplus(-real)`.
pub fn loss_critic(g: &mut Graph, real_logits: Var, fake_logits: Var) -> Result<Var, GanError> {
    let f = g.softplus(fake_logits);
    let f = g.mean(f);
    let nr = g.neg(real_logits);
    let r = g.softplus(nr);
    let r = g.mean(r);
    Ok(g.add(f, r)?)
}

/// Non-saturating generator loss: `mean softplus(-fake)`.
pub fn loss_generator(g: &mut Graph, fake_logits: Var) -> Result<Var, GanError> {
    let n = g.neg(fake_logits);
    let s = g.softplus(n);
    Ok(g.mean(s))
}

/// Makes sure gradients with respect to `x` are tracked.
fn tracked(g: &mut Graph, x: Var) -> Var {
    if g.requires_grad(x) {
        x
    } else {
        let t = g.value(x).clone();
        g.param(t)
    }
}

/// Per-sample input gradients of the critic, same shape as `x`.
fn critic_input_grad<F>(g: &mut Graph, critic: &mut F, x: Var) -> Result<Var, GanError>
where
    F: FnMut(&mut Graph, Var) -> Result<Var, GanError>,
{
    let x = tracked(g, x);
    let logits = critic(g, x)?;
    let total = g.sum(logits);
    // Samples are independent, so the gradient of the batch sum holds each
    // sample's own input gradient.
    Ok(g.grad_of(total, &[x])?[0])
}

/// R1: `(gamma / 2) * mean_n |grad_x D(x_n)|^2` over real samples.
pub fn r1_penalty<F>(g: &mut Graph, mut critic: F, real: Var, gamma: f64) -> Result<Var, GanError>
where
    F: FnMut(&mut Graph, Var) -> Result<Var, GanError>,
{
    let grad = critic_input_grad(g, &mut critic, real)?;
    let sq = g.square(grad);
    let per = g.sum_per_sample(sq)?;
    let m = g.mean(per);
    Ok(g.scale(m, 0.5 * gamma))
}

/// L1 Lipschitz penalty: mean over real and fake samples of `| |grad_x D(x)| - 1 |`.
pub fn lipschitz_l1_penalty<F>(g: &mut Graph, mut critic: F, real: Var, fake: Var) -> Result<Var, GanError>
where
    F: FnMut(&mut Graph, Var) -> Result<Var, GanError>,
{
    let mut total = None;
    let mut count = 0usize;
    for x in [real, fake] {
        let grad = critic_input_grad(g, &mut critic, x)?;
        let norms = g.l2_norm_per_sample(grad)?;
        count += g.shape(norms)[0];
        let dev = g.add_scalar(norms, -1.0);
        let dev = g.abs(dev);
        let s = g.sum(dev);
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    let total = total.expect("two batches");
    Ok(g.scale(total, 1.0 / count as f64))
}

/// Output of [`ppl_penalty`].
#[derive(Clone, Copy, Debug)]
pub struct PplTerm {
    /// `mean (len - a)^2` against the running mean `a` passed in.
    pub penalty: Var,
    /// Batch mean of the path lengths `|J_w^T y|`.
    pub mean_length: f64,
    /// Running mean after folding in this batch.
    pub updated_running_mean: f64,
}

/// Image-shaped standard normal noise scaled by `1 / image_size`.
pub fn ppl_noise(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let side = *shape.last().unwrap_or(&1) as f64;
    Tensor::from_fn(shape, |_| rng.sample::<f64, _>(StandardNormal) / side)
}

/// Path-length regularizer on styles `w [n, d]`.
///
/// Each sample's length is `|J_w^T y|` for the generator Jacobian `J_w` and
/// the fixed noise image `y`; the penalty is the mean squared deviation
/// from `running_mean`, which is then moved towards the batch mean by `decay`.
pub fn ppl_penalty<G>(
    g: &mut Graph,
    mut generator: G,
    w: Var,
    noise: &Tensor,
    running_mean: f64,
    decay: f64,
) -> Result<PplTerm, GanError>
where
    G: FnMut(&mut Graph, Var) -> Result<Var, GanError>,
{
    let w = tracked(g, w);
    let img = generator(g, w)?;
    if g.shape(img) != noise.shape() {
        return Err(GanError::Shape(format!(
            "ppl noise {:?} does not match images {:?}",
            noise.shape(),
            g.shape(img)
        )));
    }
    let y = g.constant(noise.clone());
    let prod = g.mul(img, y)?;
    let s = g.sum(prod);
    let jw = g.grad_of(s, &[w])?[0];
    let lengths = g.l2_norm_per_sample(jw)?;
    let mean_length = g.value(lengths).data().iter().sum::<f64>() / g.value(lengths).numel() as f64;
    let dev = g.add_scalar(lengths, -running_mean);
    let sq = g.square(dev);
    let penalty = g.mean(sq);
    Ok(PplTerm {
        penalty,
        mean_length,
        updated_running_mean: running_mean + decay * (mean_length - running_mean),
    })
}
