use super::params::ParamSet;
use super::GanError;

pub const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update of `params` in place.
///
/// `t` is the 1-based update count used for bias correction.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    m: &mut ParamSet,
    v: &mut ParamSet,
    lr: f64,
    betas: [f64; 2],
    t: u64,
) -> Result<(), GanError> {
    if !params.same_layout(grads) || !params.same_layout(m) || !params.same_layout(v) {
        return Err(GanError::Shape("optimizer state does not match parameters".into()));
    }
    let [b1, b2] = betas;
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    let iter = params.iter_mut().zip(grads.iter()).zip(m.iter_mut().zip(v.iter_mut()));
    for (((_, p), (_, g)), ((_, m), (_, v))) in iter {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p: ParamSet = [("x".to_string(), Tensor::new(vec![2], vec![1.0, 1.0]).unwrap())]
            .into_iter()
            .collect();
        let g: ParamSet = [("x".to_string(), Tensor::new(vec![2], vec![3.0, -0.5]).unwrap())]
            .into_iter()
            .collect();
        let (mut m, mut v) = (p.zeros_like(), p.zeros_like());
        adam_step(&mut p, &g, &mut m, &mut v, 0.1, [0.9, 0.999], 1).unwrap();
        let d = p.get("x").unwrap().data();
        assert!((d[0] - 0.9).abs() < 1e-7);
        assert!((d[1] - 1.1).abs() < 1e-7);
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut p: ParamSet = [("x".to_string(), Tensor::full(&[3], 2.0))].into_iter().collect();
        let g: ParamSet = [("x".to_string(), Tensor::full(&[3], 5.0))].into_iter().collect();
        let (mut m, mut v) = (p.zeros_like(), p.zeros_like());
        let before = p.clone();
        adam_step(&mut p, &g, &mut m, &mut v, 0.0, [0.0, 0.99], 1).unwrap();
        assert_eq!(p, before);
    }
}
