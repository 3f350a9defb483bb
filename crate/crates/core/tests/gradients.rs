//! Finite-difference checks over many seeds, plus closed-form identities of
//! the regularizers and the parameter average.

mod common;

use std::time::{Duration, Instant};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssrl_core::autograd::suite::op_cases;
use ssrl_core::autograd::{Graph, Tensor, Var};
use ssrl_core::gan::regcheck::{regularizer_cases, tiny_config};
use ssrl_core::gan::{
    critic_features, critic_forward, critic_head, ema_update, init_critic, lipschitz_l1_penalty, r1_penalty, GanError,
    ParamSet,
};

#[test]
fn every_case_passes_over_seeds() {
    let start = Instant::now();
    let mut total = 0;
    let mut failures = Vec::new();
    for seed in 0..3 {
        for case in op_cases(seed).into_iter().chain(regularizer_cases(seed)) {
            let (ok, rep) = case.passes().unwrap();
            total += 1;
            if !ok {
                failures.push(format!("seed {seed} {}: {rep:?}", case.name));
            }
        }
    }
    assert!(total >= 100, "only {total} cases");
    assert!(failures.is_empty(), "{failures:#?}");
    assert!(start.elapsed() < Duration::from_secs(120), "{:?}", start.elapsed());
}

fn grad_at(x: &Tensor, f: impl Fn(&mut Graph, Var) -> Var) -> Tensor {
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let out = f(&mut g, v);
    g.backward(out).unwrap();
    g.grad(v).unwrap().clone()
}

fn weighted(g: &mut Graph, y: Var, w: &[f64]) -> Var {
    let shape = g.shape(y).to_vec();
    let wv = g.constant(Tensor::new(shape, w.to_vec()).unwrap());
    let p = g.mul(y, wv).unwrap();
    g.sum(p)
}

proptest! {
    #![proptest_config(common::config(64))]

    #[test]
    fn gradient_of_sum_is_sum_of_gradients(
        xs in prop::collection::vec(-3.0f64..3.0, 6),
        a in prop::collection::vec(-2.0f64..2.0, 6),
        b in prop::collection::vec(-2.0f64..2.0, 6),
    ) {
        let x = Tensor::new(vec![2, 3], xs).unwrap();
        let f = |g: &mut Graph, v: Var| {
            let s = g.softplus(v);
            weighted(g, s, &a)
        };
        let h = |g: &mut Graph, v: Var| {
            let s = g.square(v);
            let s = g.sigmoid(s);
            weighted(g, s, &b)
        };
        let both = grad_at(&x, |g, v| {
            let p = f(g, v);
            let q = h(g, v);
            g.add(p, q).unwrap()
        });
        let gf = grad_at(&x, f);
        let gh = grad_at(&x, h);
        for ((s, p), q) in both.data().iter().zip(gf.data()).zip(gh.data()) {
            prop_assert!((s - (p + q)).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }
}

#[test]
fn forward_and_backward_are_bit_identical() {
    let run = || {
        op_cases(11)
            .iter()
            .map(|case| {
                let mut g = Graph::new();
                let v = g.param(case.input.clone());
                let out = (case.f)(&mut g, v).unwrap();
                let value = g.value(out).item();
                g.backward(out).unwrap();
                (value.to_bits(), g.grad(v).unwrap().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

/// `D(x) = <v, x>` on `[n, 1, 2, 2]` images.
fn linear_critic(v: Vec<f64>) -> impl FnMut(&mut Graph, Var) -> Result<Var, GanError> {
    move |g: &mut Graph, x: Var| {
        let n = g.shape(x)[0];
        let vv = g.constant(Tensor::new(vec![1, 1, 2, 2], v.clone()).unwrap());
        let p = g.mul(x, vv)?;
        let s = g.sum_per_sample(p)?;
        Ok(g.reshape(s, &[n, 1])?)
    }
}

fn images(values: &[f64]) -> Tensor {
    Tensor::new(vec![values.len() / 4, 1, 2, 2], values.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(common::config(64))]

    #[test]
    fn r1_on_linear_critic_is_half_gamma_norm_sq(
        v in prop::collection::vec(-3.0f64..3.0, 4),
        x in prop::collection::vec(-1.0f64..1.0, 12),
        gamma in 0.0f64..20.0,
    ) {
        let mut g = Graph::new();
        let real = g.constant(images(&x));
        let r1 = r1_penalty(&mut g, linear_critic(v.clone()), real, gamma).unwrap();
        let want = 0.5 * gamma * v.iter().map(|a| a * a).sum::<f64>();
        prop_assert!((g.value(r1).item() - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn lipschitz_on_linear_critic_is_norm_deviation(
        v in prop::collection::vec(-3.0f64..3.0, 4),
        real in prop::collection::vec(-1.0f64..1.0, 8),
        fake in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let mut g = Graph::new();
        let r = g.constant(images(&real));
        let f = g.constant(images(&fake));
        let p = lipschitz_l1_penalty(&mut g, linear_critic(v.clone()), r, f).unwrap();
        let want = (v.iter().map(|a| a * a).sum::<f64>().sqrt() - 1.0).abs();
        prop_assert!((g.value(p).item() - want).abs() <= 1e-12);
    }

    #[test]
    fn ema_follows_the_geometric_series(
        theta in -5.0f64..5.0,
        start in -5.0f64..5.0,
        beta in 0.5f64..0.9999,
        k in 1i32..200,
    ) {
        let set = |v: f64| -> ParamSet { [("w".to_string(), Tensor::full(&[3], v))].into_iter().collect() };
        let p = set(theta);
        let mut e = set(start);
        for _ in 0..k {
            ema_update(&p, &mut e, beta).unwrap();
        }
        let bk = beta.powi(k);
        let want = bk * start + (1.0 - bk) * theta;
        for x in e.get("w").unwrap().data() {
            prop_assert!((x - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn ema_from_zero_is_one_minus_beta_power() {
    let p: ParamSet = [("w".to_string(), Tensor::full(&[2], 1.7))].into_iter().collect();
    let mut e = p.zeros_like();
    for k in 1..=500 {
        ema_update(&p, &mut e, 0.999).unwrap();
        let want = (1.0 - 0.999f64.powi(k)) * 1.7;
        assert!(e.get("w").unwrap().data().iter().all(|x| (x - want).abs() < 1e-12));
    }
}

#[test]
fn critic_is_head_of_features() {
    for seed in 0..4 {
        let cfg = tiny_config(seed);
        let params = init_critic(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let x = Tensor::from_fn(&[3, cfg.channels, cfg.image_size, cfg.image_size], |i| {
            ((i as f64 + seed as f64) * 0.37).sin()
        });
        let mut g = Graph::new();
        let bound = params.bind(&mut g, false);
        let xv = g.constant(x);
        let logits = critic_forward(&mut g, &bound, &cfg, xv).unwrap();
        let feats = critic_features(&mut g, &bound, &cfg, xv).unwrap();
        let head = critic_head(&mut g, &bound, feats).unwrap();
        for (a, b) in g.value(logits).data().iter().zip(g.value(head).data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
