use super::params::ParamSet;
use super::GanError;

/// `ema <- beta * ema + (1 - beta) * params`, elementwise.
pub fn ema_update(params: &ParamSet, ema: &mut ParamSet, beta: f64) -> Result<(), GanError> {
    if !params.same_layout(ema) {
        return Err(GanError::Shape("EMA parameters do not mirror the generator".into()));
    }
    for ((_, p), (_, e)) in params.iter().zip(ema.iter_mut()) {
        for (ev, pv) in e.data_mut().iter_mut().zip(p.data()) {
            *ev = beta * *ev + (1.0 - beta) * pv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;

    fn set(v: f64) -> ParamSet {
        [("a".to_string(), Tensor::full(&[2, 2], v)), ("b".to_string(), Tensor::full(&[3], v))]
            .into_iter()
            .collect()
    }

    #[test]
    fn beta_zero_copies() {
        let p = set(1.5);
        let mut e = set(-3.0);
        ema_update(&p, &mut e, 0.0).unwrap();
        assert_eq!(e, p);
    }

    #[test]
    fn beta_one_freezes() {
        let p = set(1.5);
        let mut e = set(-3.0);
        ema_update(&p, &mut e, 1.0).unwrap();
        assert_eq!(e, set(-3.0));
    }

    #[test]
    fn geometric_series() {
        let p = set(1.0);
        let mut e = set(0.0);
        for k in 1..=50 {
            ema_update(&p, &mut e, 0.99).unwrap();
            let want = 1.0 - 0.99f64.powi(k);
            for (_, t) in e.iter() {
                assert!(t.data().iter().all(|v| (v - want).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn layout_mismatch_rejected() {
        let p = set(1.0);
        let mut e: ParamSet = [("a".to_string(), Tensor::zeros(&[4]))].into_iter().collect();
        assert!(ema_update(&p, &mut e, 0.5).is_err());
    }
}
