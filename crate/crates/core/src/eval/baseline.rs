//! Statistics baseline: per-channel mean, variance and quantiles, then a
//! fixed random projection.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::autograd::Tensor;
use crate::rng;

pub const QUANTILES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

/// Linearly interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, variance and [`QUANTILES`] of each channel, concatenated.
pub fn channel_statistics(image: &Tensor) -> Vec<f64> {
    let c = image.shape()[0];
    let plane = image.numel() / c;
    let mut out = Vec::with_capacity(c * (2 + QUANTILES.len()));
    for ch in image.data().chunks_exact(plane) {
        let n = ch.len() as f64;
        let mean = ch.iter().sum::<f64>() / n;
        let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = ch.to_vec();
        sorted.sort_by(f64::total_cmp);
        out.push(mean);
        out.push(var);
        out.extend(QUANTILES.iter().map(|&q| quantile(&sorted, q)));
    }
    out
}

fn projection(seed: u64, rows: usize, cols: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, &[rng::tag("baseline"), rows as u64, cols as u64]);
    let s = 1.0 / (cols as f64).sqrt();
    (0..rows * cols).map(|_| r.sample::<f64, _>(StandardNormal) * s).collect()
}

/// Embedding of one `[c, h, w]` image.
pub fn baseline_featurizer(image: &Tensor, seed: u64, feature_dim: usize) -> Vec<f64> {
    let stats = channel_statistics(image);
    let p = projection(seed, feature_dim, stats.len());
    p.chunks_exact(stats.len())
        .map(|row| row.iter().zip(&stats).map(|(a, b)| a * b).sum())
        .collect()
}

/// [`baseline_featurizer`] over many images, in parallel.
pub fn baseline_features(images: &[Tensor], seed: u64, feature_dim: usize) -> Vec<Vec<f64>> {
    let Some(first) = images.first() else {
        return Vec::new();
    };
    let cols = first.shape()[0] * (2 + QUANTILES.len());
    let p = projection(seed, feature_dim, cols);
    images
        .par_iter()
        .map(|img| {
            let stats = channel_statistics(img);
            p.chunks_exact(cols)
                .map(|row| row.iter().zip(&stats).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_image_gives_zero() {
        let f = baseline_featurizer(&Tensor::zeros(&[3, 4, 4]), 1, 8);
        assert_eq!(f, vec![0.0; 8]);
    }

    #[test]
    fn statistics_of_ramp() {
        let img = Tensor::from_fn(&[1, 1, 11], |i| i as f64);
        let s = channel_statistics(&img);
        assert_eq!(s[0], 5.0);
        assert_eq!(s[1], 10.0);
        assert_eq!(&s[2..], &[1.0, 2.5, 5.0, 7.5, 9.0]);
    }

    #[test]
    fn batch_matches_single() {
        let imgs: Vec<Tensor> = (0..3).map(|k| Tensor::from_fn(&[2, 3, 3], |i| ((i + k) % 4) as f64 / 4.0)).collect();
        let b = baseline_features(&imgs, 9, 5);
        for (img, f) in imgs.iter().zip(&b) {
            assert_eq!(&baseline_featurizer(img, 9, 5), f);
        }
        assert_eq!(b[0], baseline_featurizer(&imgs[0].clone(), 9, 5));
    }
}
