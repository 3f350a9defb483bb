//! Seeded finite-difference checks of every differentiable op, including
//! second-order compositions.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{grad_check, AutogradError, GradCheckReport, Graph, Resample, Tensor, Var};
use crate::rng;

pub const SUITE_EPS: f64 = 1e-5;
/// Relative error bound for single ops.
pub const OP_TOL: f64 = 1e-4;

pub type OpFn = Box<dyn Fn(&mut Graph, Var) -> Result<Var, AutogradError>>;

/// One op under test: a scalar function of `input`.
pub struct OpCase {
    pub name: &'static str,
    pub input: Tensor,
    pub f: OpFn,
    /// Bound on the reported relative error.
    pub tol: f64,
}

impl OpCase {
    pub fn check(&self) -> Result<GradCheckReport, AutogradError> {
        grad_check(&self.f, &self.input, SUITE_EPS)
    }

    /// Runs the check and compares with `tol`.
    pub fn passes(&self) -> Result<(bool, GradCheckReport), AutogradError> {
        let rep = self.check()?;
        Ok((rep.checked > 0 && rep.max_rel_error < self.tol, rep))
    }
}

pub(crate) fn randn(r: &mut impl Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| r.sample::<f64, _>(StandardNormal))
}

/// Reduces `y` to a scalar through fixed random weights, so every output
/// coordinate contributes.
fn probe(g: &mut Graph, y: Var, w: &Tensor) -> Result<Var, AutogradError> {
    let wv = g.constant(w.clone());
    let p = g.mul(y, wv)?;
    Ok(g.sum(p))
}

fn case<F>(name: &'static str, input: Tensor, out_shape: &[usize], r: &mut impl Rng, f: F) -> OpCase
where
    F: Fn(&mut Graph, Var) -> Result<Var, AutogradError> + 'static,
{
    let w = randn(r, out_shape);
    OpCase {
        name,
        input,
        tol: OP_TOL,
        f: Box::new(move |g, x| {
            let y = f(g, x)?;
            probe(g, y, &w)
        }),
    }
}

/// The suite for one seed; shapes and values vary with the seed.
pub fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut r = rng::stream(seed, &[rng::tag("op-suite")]);
    let n = r.random_range(1..=2);
    let c = r.random_range(1..=3);
    let o = r.random_range(1..=3);
    let h = 2 * r.random_range(1..=3);
    let w = 2 * r.random_range(1..=3);
    let img = [n, c, h, w];
    let mut cases = Vec::new();

    let other = randn(&mut r, &[1, c, 1, w]);
    cases.push(case("add", randn(&mut r, &img), &img, &mut r, move |g, x| {
        let b = g.constant(other.clone());
        g.add(x, b)
    }));
    let other = randn(&mut r, &img);
    cases.push(case("sub", randn(&mut r, &img), &img, &mut r, move |g, x| {
        let b = g.constant(other.clone());
        g.sub(b, x)
    }));
    let other = randn(&mut r, &[n, 1, h, 1]);
    cases.push(case("mul", randn(&mut r, &img), &img, &mut r, move |g, x| {
        let b = g.constant(other.clone());
        g.mul(x, b)
    }));
    cases.push(case("mul_self", randn(&mut r, &img), &img, &mut r, |g, x| g.mul(x, x)));
    cases.push(case("scale_shift_neg", randn(&mut r, &img), &img, &mut r, |g, x| {
        let y = g.scale(x, -1.7);
        let y = g.add_scalar(y, 0.3);
        Ok(g.neg(y))
    }));
    cases.push(case("leaky_relu", randn(&mut r, &img), &img, &mut r, |g, x| Ok(g.leaky_relu(x, 0.2))));
    cases.push(case("abs", randn(&mut r, &img), &img, &mut r, |g, x| Ok(g.abs(x))));
    cases.push(case("softplus", randn(&mut r, &img), &img, &mut r, |g, x| Ok(g.softplus(x))));
    cases.push(case("sigmoid", randn(&mut r, &img), &img, &mut r, |g, x| Ok(g.sigmoid(x))));
    cases.push(case("sqrt", randn(&mut r, &img), &img, &mut r, |g, x| {
        let s = g.square(x);
        let s = g.add_scalar(s, 0.5);
        Ok(g.sqrt(s))
    }));
    cases.push(case("recip", randn(&mut r, &img), &img, &mut r, |g, x| {
        let s = g.square(x);
        let s = g.add_scalar(s, 1.0);
        Ok(g.recip(s))
    }));
    cases.push(case("expand", randn(&mut r, &[1, c, 1, w]), &img, &mut r, move |g, x| g.expand(x, &img)));
    cases.push(case("sum_to", randn(&mut r, &img), &[1, c, 1, 1], &mut r, move |g, x| g.sum_to(x, &[1, c, 1, 1])));
    cases.push(case("mean", randn(&mut r, &img), &[], &mut r, |g, x| Ok(g.mean(x))));
    cases.push(case("sum_per_sample", randn(&mut r, &img), &[n], &mut r, |g, x| g.sum_per_sample(x)));
    cases.push(case("reshape", randn(&mut r, &img), &[n, c * h * w], &mut r, move |g, x| {
        g.reshape(x, &[n, c * h * w])
    }));
    let m = randn(&mut r, &[w, o]);
    cases.push(case("matmul", randn(&mut r, &[h, w]), &[h, o], &mut r, move |g, x| {
        let b = g.constant(m.clone());
        g.matmul(x, b)
    }));
    cases.push(case("transpose", randn(&mut r, &[h, w]), &[w, h], &mut r, |g, x| g.transpose(x)));
    let (lw, lb) = (randn(&mut r, &[o, w]), randn(&mut r, &[o]));
    cases.push(case("linear", randn(&mut r, &[h, w]), &[h, o], &mut r, move |g, x| {
        let a = g.constant(lw.clone());
        let b = g.constant(lb.clone());
        g.linear(x, a, Some(b))
    }));
    let k = randn(&mut r, &[o, c, 3, 3]);
    cases.push(case("conv2d_same", randn(&mut r, &img), &[n, o, h, w], &mut r, move |g, x| {
        let kv = g.constant(k.clone());
        g.conv2d(x, kv, 1)
    }));
    let xin = randn(&mut r, &img);
    cases.push(case("conv2d_weight", randn(&mut r, &[o, c, 3, 3]), &[n, o, h, w], &mut r, move |g, k| {
        let xv = g.constant(xin.clone());
        g.conv2d(xv, k, 1)
    }));
    let k1 = randn(&mut r, &[o, c, 1, 1]);
    cases.push(case("conv2d_1x1", randn(&mut r, &img), &[n, o, h, w], &mut r, move |g, x| {
        let kv = g.constant(k1.clone());
        g.conv2d(x, kv, 0)
    }));
    let kv3 = randn(&mut r, &[o, c, 2, 2]);
    cases.push(case("conv2d_valid", randn(&mut r, &img), &[n, o, h - 1, w - 1], &mut r, move |g, x| {
        let kv = g.constant(kv3.clone());
        g.conv2d(x, kv, 0)
    }));
    cases.push(case("upsample2x", randn(&mut r, &img), &[n, c, 2 * h, 2 * w], &mut r, |g, x| g.upsample2x(x)));
    cases.push(case("downsample2x", randn(&mut r, &img), &[n, c, h / 2, w / 2], &mut r, |g, x| {
        g.downsample2x(x)
    }));
    cases.push(case("resample_up_adjoint", randn(&mut r, &[n, c, 2 * h, 2 * w]), &img, &mut r, |g, x| {
        g.resample(x, Resample::UpAdjoint)
    }));
    cases.push(case("l2_norm_per_sample", randn(&mut r, &img), &[n], &mut r, |g, x| g.l2_norm_per_sample(x)));

    // Second order: gradient of the input-gradient norm of a small conv net,
    // the composition the R1 and path-length terms rely on.
    let (k1, k2) = (randn(&mut r, &[o, c, 3, 3]), randn(&mut r, &[1, o, 3, 3]));
    let xin = randn(&mut r, &img);
    cases.push(case("double_backward_conv_weight", k1.clone(), &[], &mut r, move |g, kv| {
        let x = g.param(xin.clone());
        let k2v = g.constant(k2.clone());
        let y = g.conv2d(x, kv, 1)?;
        let y = g.leaky_relu(y, 0.2);
        let y = g.conv2d(y, k2v, 1)?;
        let y = g.softplus(y);
        let s = g.sum(y);
        let gx = g.grad_of(s, &[x])?[0];
        let sq = g.square(gx);
        Ok(g.sum(sq))
    }));
    let (k1, k2) = (randn(&mut r, &[o, c, 3, 3]), randn(&mut r, &[1, o, 3, 3]));
    cases.push(case("double_backward_conv_input", randn(&mut r, &img), &[], &mut r, move |g, x| {
        let k1v = g.constant(k1.clone());
        let k2v = g.constant(k2.clone());
        let y = g.conv2d(x, k1v, 1)?;
        let y = g.sigmoid(y);
        let y = g.upsample2x(y)?;
        let y = g.conv2d(y, k2v, 1)?;
        let s = g.sum(y);
        let gx = g.grad_of(s, &[x])?[0];
        let norms = g.l2_norm_per_sample(gx)?;
        Ok(g.sum(norms))
    }));
    cases
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_for_one_seed() {
        for c in op_cases(0) {
            let (ok, rep) = c.passes().unwrap();
            assert!(ok, "{}: {:?}", c.name, rep);
        }
    }
}
