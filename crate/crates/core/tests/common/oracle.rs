//! Independent solver for the SVM primal: accelerated projected gradient on
//! the dual box QP, certified by its duality gap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Primal `0.5 (|w|^2 + b^2) + C sum hinge` at an augmented `(w, b)`.
pub fn primal(xs: &[Vec<f64>], ys: &[i8], wb: &[f64], c: f64) -> f64 {
    let d = wb.len() - 1;
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let f: f64 = x.iter().zip(&wb[..d]).map(|(a, b)| a * b).sum::<f64>() + wb[d];
            (1.0 - f64::from(y) * f).max(0.0)
        })
        .sum();
    0.5 * wb.iter().map(|v| v * v).sum::<f64>() + c * hinge
}

/// `w(alpha) = sum alpha_i y_i [x_i; 1]`.
pub fn weights(xs: &[Vec<f64>], ys: &[i8], alpha: &[f64]) -> Vec<f64> {
    let d = xs[0].len();
    let mut w = vec![0.0; d + 1];
    for ((x, &y), a) in xs.iter().zip(ys).zip(alpha) {
        let s = a * f64::from(y);
        for (wj, xj) in w.iter_mut().zip(x) {
            *wj += s * xj;
        }
        w[d] += s;
    }
    w
}

pub fn dual(xs: &[Vec<f64>], ys: &[i8], alpha: &[f64]) -> f64 {
    let w = weights(xs, ys, alpha);
    alpha.iter().sum::<f64>() - 0.5 * w.iter().map(|v| v * v).sum::<f64>()
}

pub struct Oracle {
    pub primal: f64,
    pub gap: f64,
}

/// FISTA with restarts on `max_{0 <= alpha <= C} 1'alpha - 0.5 |Z alpha|^2`.
pub fn oracle(xs: &[Vec<f64>], ys: &[i8], c: f64) -> Oracle {
    let n = xs.len();
    // Lipschitz constant of the gradient: largest eigenvalue of Z'Z, bounded
    // by its trace.
    let lip: f64 = xs.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>() + 1.0).sum();
    let step = 1.0 / lip;
    let mut alpha = vec![0.0; n];
    let mut yv = alpha.clone();
    let mut t = 1.0f64;
    let mut best = (f64::NEG_INFINITY, alpha.clone());
    for it in 0..200_000 {
        let w = weights(xs, ys, &yv);
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let zi: f64 = xs[i].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[xs[i].len()];
                let grad = 1.0 - f64::from(ys[i]) * zi;
                (yv[i] + step * grad).clamp(0.0, c)
            })
            .collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        let d_next = dual(xs, ys, &next);
        if d_next < dual(xs, ys, &alpha) {
            // Restart on loss of monotonicity.
            t = 1.0;
            yv = alpha.clone();
            continue;
        }
        yv = next.iter().zip(&alpha).map(|(a, o)| (a + momentum * (a - o)).clamp(0.0, c)).collect();
        alpha = next;
        t = t_next;
        if d_next > best.0 {
            best = (d_next, alpha.clone());
        }
        if it % 100 == 0 {
            let wb = weights(xs, ys, &best.1);
            let p = primal(xs, ys, &wb, c);
            if p - best.0 <= 1e-11 * p.abs().max(1.0) {
                break;
            }
        }
    }
    let wb = weights(xs, ys, &best.1);
    let p = primal(xs, ys, &wb, c);
    Oracle { primal: p, gap: p - best.0 }
}

pub fn instance(seed: u64) -> (Vec<Vec<f64>>, Vec<i8>, f64) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = r.random_range(4..=40);
    let d = r.random_range(1..=8);
    let shift: f64 = r.random_range(0.0..2.0);
    let c = [0.01, 0.1, 1.0, 10.0][r.random_range(0..4)];
    let mut ys: Vec<i8> = (0..n).map(|_| if r.random_bool(0.5) { 1 } else { -1 }).collect();
    ys[0] = 1;
    ys[1] = -1;
    let xs = ys
        .iter()
        .map(|&y| (0..d).map(|_| r.sample::<f64, _>(StandardNormal) + shift * f64::from(y)).collect())
        .collect();
    (xs, ys, c)
}

