use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::adam_step;
use super::ema::ema_update;
use super::losses::{lipschitz_l1_penalty, loss_critic, loss_generator, ppl_noise, ppl_penalty, r1_penalty};
use super::network::{critic_features, critic_forward, generate, mapping_forward};
use super::params::{init_critic, init_generator, Bound, ParamSet};
use super::{GanConfig, GanError};
use crate::autograd::{Graph, Tensor, Var};
use crate::rng;

const STREAM_INIT: u64 = 1;
const STREAM_STEP: u64 = 2;
const STREAM_EPOCH: u64 = 3;

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: GanConfig,
    pub generator: ParamSet,
    pub critic: ParamSet,
    pub ema_generator: ParamSet,
    pub ppl_running_mean: f64,
    pub step: u64,
    /// Adam first moments, keyed `generator/<name>` and `critic/<name>`.
    pub adam_m: ParamSet,
    pub adam_v: ParamSet,
}

/// Loss terms of one training step. Regularizers are `None` on steps where
/// the lazy schedule skips them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub loss_critic: f64,
    pub loss_generator: f64,
    pub r1: Option<f64>,
    pub lipschitz_l1: Option<f64>,
    pub ppl: Option<f64>,
    pub ppl_running_mean: f64,
}

fn prefixed(set: &ParamSet, prefix: &str) -> ParamSet {
    set.iter().map(|(k, t)| (format!("{prefix}/{k}"), t.clone())).collect()
}

fn strip(set: &ParamSet, prefix: &str) -> ParamSet {
    let p = format!("{prefix}/");
    set.iter()
        .filter_map(|(k, t)| k.strip_prefix(&p).map(|s| (s.to_string(), t.clone())))
        .collect()
}

impl ModelState {
    /// Seeded initial state.
    pub fn init(config: GanConfig) -> Result<Self, GanError> {
        config.validate()?;
        let mut r = rng::stream(config.seed, &[STREAM_INIT]);
        let generator = init_generator(&config, &mut r);
        let critic = init_critic(&config, &mut r);
        let moments: ParamSet = prefixed(&generator, "generator")
            .zeros_like()
            .iter()
            .chain(prefixed(&critic, "critic").zeros_like().iter())
            .map(|(k, t)| (k.clone(), t.clone()))
            .collect();
        Ok(Self {
            ema_generator: generator.clone(),
            generator,
            critic,
            ppl_running_mean: 0.0,
            step: 0,
            adam_m: moments.clone(),
            adam_v: moments,
            config,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.generator.is_finite() && self.critic.is_finite() && self.ema_generator.is_finite()
    }

    /// Checks that derived parts of the state agree with each other.
    pub fn validate(&self) -> Result<(), GanError> {
        self.config.validate()?;
        let cfg = &self.config;
        let fresh = |set: &ParamSet, init: ParamSet, what: &str| {
            if set.same_layout(&init) {
                Ok(())
            } else {
                Err(GanError::Checkpoint(format!("{what} parameters do not match the config")))
            }
        };
        let mut r = rng::stream(0, &[]);
        fresh(&self.generator, init_generator(cfg, &mut r), "generator")?;
        fresh(&self.critic, init_critic(cfg, &mut r), "critic")?;
        fresh(&self.ema_generator, self.generator.clone(), "ema")?;
        for (name, set) in [("adam_m", &self.adam_m), ("adam_v", &self.adam_v)] {
            fresh(&strip(set, "generator"), self.generator.clone(), name)?;
            fresh(&strip(set, "critic"), self.critic.clone(), name)?;
            if set.len() != self.generator.len() + self.critic.len() {
                return Err(GanError::Checkpoint(format!("{name} has stray entries")));
            }
        }
        if !(self.ppl_running_mean >= 0.0) {
            return Err(GanError::Checkpoint("negative ppl running mean".into()));
        }
        Ok(())
    }

    fn optimizer_update(&mut self, which: &str, grads: &ParamSet) -> Result<(), GanError> {
        let mut m = strip(&self.adam_m, which);
        let mut v = strip(&self.adam_v, which);
        let cfg = &self.config;
        let params = if which == "generator" { &mut self.generator } else { &mut self.critic };
        adam_step(params, grads, &mut m, &mut v, cfg.learning_rate, cfg.adam_betas, self.step + 1)?;
        for (k, t) in prefixed(&m, which).iter() {
            self.adam_m.insert(k.clone(), t.clone());
        }
        for (k, t) in prefixed(&v, which).iter() {
            self.adam_v.insert(k.clone(), t.clone());
        }
        Ok(())
    }

    /// One alternating critic / generator update followed by the EMA update.
    ///
    /// `real` holds a batch of images scaled to `[-1, 1]`, shape
    /// `[n, channels, image_size, image_size]`. Randomness is drawn from a
    /// stream fixed by `(seed, step)`.
    pub fn train_step(&mut self, real: &Tensor) -> Result<StepMetrics, GanError> {
        let cfg = self.config.clone();
        let s = cfg.image_size;
        let n = real.shape().first().copied().unwrap_or(0);
        if real.shape() != [n, cfg.channels, s, s] || n == 0 {
            return Err(GanError::Shape(format!(
                "real batch {:?} does not match [n, {}, {s}, {s}]",
                real.shape(),
                cfg.channels
            )));
        }
        let step = self.step;
        let mut r = rng::stream(cfg.seed, &[STREAM_STEP, step]);
        let interval = cfg.lazy_reg_interval as u64;
        let lazy = step.is_multiple_of(interval);
        let lazy_scale = interval as f64;
        let check = |v: f64, term: &'static str| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(GanError::NonFinite { step, term })
            }
        };

        // Critic update.
        let (loss_d, r1_val, lip_val) = {
            let mut g = Graph::new();
            let gp = self.generator.bind(&mut g, false);
            let dp = self.critic.bind(&mut g, true);
            let z = g.constant(latents(&mut r, n, cfg.style_dim));
            let w = mapping_forward(&mut g, &gp, &cfg, z)?;
            let fake = generate(&mut g, &gp, &cfg, w)?;
            let real_v = g.constant(real.clone());
            let lr_ = critic_forward(&mut g, &dp, &cfg, real_v)?;
            let lf = critic_forward(&mut g, &dp, &cfg, fake)?;
            let loss = loss_critic(&mut g, lr_, lf)?;
            let loss_val = check(g.value(loss).item(), "loss_critic")?;
            let mut total = loss;
            let mut r1_val = None;
            let mut lip_val = None;
            if lazy && cfg.r1_gamma > 0.0 {
                let r1 = r1_penalty(&mut g, |g, x| critic_forward(g, &dp, &cfg, x), real_v, cfg.r1_gamma)?;
                r1_val = Some(check(g.value(r1).item(), "r1")?);
                let scaled = g.scale(r1, lazy_scale);
                total = g.add(total, scaled)?;
            }
            if lazy && cfg.lipschitz_l1_weight > 0.0 {
                let lip = lipschitz_l1_penalty(&mut g, |g, x| critic_forward(g, &dp, &cfg, x), real_v, fake)?;
                lip_val = Some(check(g.value(lip).item(), "lipschitz_l1")?);
                let scaled = g.scale(lip, cfg.lipschitz_l1_weight * lazy_scale);
                total = g.add(total, scaled)?;
            }
            let grads = collect_grads(&mut g, total, &dp)?;
            if !grads.is_finite() {
                return Err(GanError::NonFinite { step, term: "critic gradient" });
            }
            self.optimizer_update("critic", &grads)?;
            (loss_val, r1_val, lip_val)
        };

        // Generator update.
        let (loss_g, ppl_val, new_mean) = {
            let mut g = Graph::new();
            let gp = self.generator.bind(&mut g, true);
            let dp = self.critic.bind(&mut g, false);
            let z = g.constant(latents(&mut r, n, cfg.style_dim));
            let w = mapping_forward(&mut g, &gp, &cfg, z)?;
            let fake = generate(&mut g, &gp, &cfg, w)?;
            let lf = critic_forward(&mut g, &dp, &cfg, fake)?;
            let loss = loss_generator(&mut g, lf)?;
            let loss_val = check(g.value(loss).item(), "loss_generator")?;
            let mut total = loss;
            let mut ppl_val = None;
            let mut new_mean = self.ppl_running_mean;
            if lazy && cfg.ppl_weight > 0.0 {
                let np = (n / 2).max(1);
                let zp = g.constant(latents(&mut r, np, cfg.style_dim));
                let wp = mapping_forward(&mut g, &gp, &cfg, zp)?;
                let noise = ppl_noise(&mut r, &[np, cfg.channels, s, s]);
                let term = ppl_penalty(
                    &mut g,
                    |g, w| generate(g, &gp, &cfg, w),
                    wp,
                    &noise,
                    self.ppl_running_mean,
                    cfg.ppl_decay,
                )?;
                ppl_val = Some(check(g.value(term.penalty).item(), "ppl")?);
                new_mean = check(term.updated_running_mean, "ppl running mean")?;
                let scaled = g.scale(term.penalty, cfg.ppl_weight * lazy_scale);
                total = g.add(total, scaled)?;
            }
            let grads = collect_grads(&mut g, total, &gp)?;
            if !grads.is_finite() {
                return Err(GanError::NonFinite { step, term: "generator gradient" });
            }
            self.optimizer_update("generator", &grads)?;
            (loss_val, ppl_val, new_mean)
        };

        self.ppl_running_mean = new_mean;
        ema_update(&self.generator, &mut self.ema_generator, cfg.ema_beta)?;
        self.step += 1;
        Ok(StepMetrics {
            step,
            loss_critic: loss_d,
            loss_generator: loss_g,
            r1: r1_val,
            lipschitz_l1: lip_val,
            ppl: ppl_val,
            ppl_running_mean: self.ppl_running_mean,
        })
    }

    /// Embeddings of `images` (pixel values in `[0, 1]`) under the current critic.
    pub fn embed(&self, images: &[Tensor]) -> Result<Vec<Vec<f64>>, GanError> {
        extract_features(&self.config, &self.critic, images)
    }
}

fn latents(r: &mut impl Rng, n: usize, d: usize) -> Tensor {
    Tensor::from_fn(&[n, d], |_| r.sample::<f64, _>(StandardNormal))
}

fn collect_grads(g: &mut Graph, loss: Var, params: &Bound) -> Result<ParamSet, GanError> {
    let vars = params.vars();
    let grads = g.grad_of(loss, &vars)?;
    Ok(params
        .iter()
        .zip(grads)
        .map(|((name, _), gv)| (name.clone(), g.value(gv).clone()))
        .collect())
}

/// Training images held in memory, pixel values in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Dataset {
    images: Vec<Tensor>,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>) -> Result<Self, GanError> {
        let Some(first) = images.first() else {
            return Err(GanError::Data("dataset is empty".into()));
        };
        let shape = first.shape().to_vec();
        if shape.len() != 3 {
            return Err(GanError::Data(format!("images must be [c, h, w], got {shape:?}")));
        }
        if let Some((i, t)) = images.iter().enumerate().find(|(_, t)| t.shape() != shape) {
            return Err(GanError::Data(format!("image {i} has shape {:?}, expected {shape:?}", t.shape())));
        }
        Ok(Self { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    /// Batch used at `step`: epochs are seeded permutations, batches are
    /// consecutive slices, and a trailing partial batch is dropped.
    /// Pixels are rescaled to `[-1, 1]`.
    pub fn batch_for_step(&self, cfg: &GanConfig, step: u64) -> Result<Tensor, GanError> {
        let bs = cfg.batch_size;
        if self.images.len() < bs {
            return Err(GanError::Data(format!(
                "dataset has {} images, fewer than batch_size {bs}",
                self.images.len()
            )));
        }
        let per_epoch = (self.images.len() / bs) as u64;
        let (epoch, b) = (step / per_epoch, (step % per_epoch) as usize);
        let mut order: Vec<usize> = (0..self.images.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[STREAM_EPOCH, epoch]));
        let picked = &order[b * bs..(b + 1) * bs];
        let img_shape = self.images[0].shape();
        let mut data = Vec::with_capacity(bs * self.images[0].numel());
        for &i in picked {
            data.extend(self.images[i].data().iter().map(|v| 2.0 * v - 1.0));
        }
        let mut shape = vec![bs];
        shape.extend_from_slice(img_shape);
        Ok(Tensor::new(shape, data)?)
    }
}

/// Runs `train_step` until `state.step == until`, calling `on_step` after each.
pub fn train_until(
    state: &mut ModelState,
    data: &Dataset,
    until: u64,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<(), GanError> {
    while state.step < until {
        let batch = data.batch_for_step(&state.config, state.step)?;
        let m = state.train_step(&batch)?;
        on_step(&m);
    }
    Ok(())
}

/// Critic features for each image (pixels in `[0, 1]`), extracted in
/// parallel chunks with read-only parameters.
pub fn extract_features(cfg: &GanConfig, critic: &ParamSet, images: &[Tensor]) -> Result<Vec<Vec<f64>>, GanError> {
    const CHUNK: usize = 16;
    let s = cfg.image_size;
    let want = [cfg.channels, s, s];
    if let Some((i, t)) = images.iter().enumerate().find(|(_, t)| t.shape() != want) {
        return Err(GanError::Shape(format!(
            "image {i} has shape {:?}, critic expects {want:?}",
            t.shape()
        )));
    }
    let chunks: Vec<Result<Vec<Vec<f64>>, GanError>> = images
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut data = Vec::with_capacity(chunk.len() * chunk[0].numel());
            for t in chunk {
                data.extend(t.data().iter().map(|v| 2.0 * v - 1.0));
            }
            let batch = Tensor::new(vec![chunk.len(), want[0], s, s], data)?;
            let mut g = Graph::new();
            let p = critic.bind(&mut g, false);
            let x = g.constant(batch);
            let f = critic_features(&mut g, &p, cfg, x)?;
            Ok(g.value(f).data().chunks(cfg.feature_dim).map(<[f64]>::to_vec).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(images.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GanConfig {
        GanConfig {
            image_size: 8,
            channels: 2,
            style_dim: 4,
            mapping_layers: 2,
            feature_dim: 3,
            base_channels: 4,
            batch_size: 2,
            lazy_reg_interval: 2,
            learning_rate: 1e-3,
            seed: 11,
            ..GanConfig::default()
        }
    }

    fn data() -> Dataset {
        let imgs = (0..5)
            .map(|k| Tensor::from_fn(&[2, 8, 8], |i| (((i * 31 + k * 7) % 17) as f64) / 16.0))
            .collect();
        Dataset::new(imgs).unwrap()
    }

    #[test]
    fn zero_lr_keeps_params() {
        let cfg = GanConfig { learning_rate: 0.0, ..tiny() };
        let mut st = ModelState::init(cfg.clone()).unwrap();
        let before = st.clone();
        let d = data();
        train_until(&mut st, &d, 3, |_| {}).unwrap();
        assert_eq!(st.generator, before.generator);
        assert_eq!(st.critic, before.critic);
        assert_eq!(st.step, 3);
    }

    #[test]
    fn deterministic_metrics() {
        let d = data();
        let run = || {
            let mut st = ModelState::init(tiny()).unwrap();
            let mut ms = Vec::new();
            train_until(&mut st, &d, 4, |m| ms.push(m.clone())).unwrap();
            (ms, st)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(a[0].r1.is_some() && a[1].r1.is_none() && a[2].ppl.is_some());
        assert!(sa.is_finite());
        assert!(sa.ppl_running_mean >= 0.0);
    }

    #[test]
    fn resume_matches_unbroken_run() {
        let d = data();
        let mut full = ModelState::init(tiny()).unwrap();
        train_until(&mut full, &d, 5, |_| {}).unwrap();
        let mut part = ModelState::init(tiny()).unwrap();
        train_until(&mut part, &d, 2, |_| {}).unwrap();
        let mut resumed = part.clone();
        train_until(&mut resumed, &d, 5, |_| {}).unwrap();
        assert_eq!(full, resumed);
    }

    #[test]
    fn batches_cover_epoch_without_repeats() {
        let d = data();
        let cfg = tiny();
        let a = d.batch_for_step(&cfg, 0).unwrap();
        let b = d.batch_for_step(&cfg, 1).unwrap();
        assert_eq!(a.shape(), &[2, 2, 8, 8]);
        assert_ne!(a, b);
        assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(d.batch_for_step(&cfg, 7).unwrap(), d.batch_for_step(&cfg, 7).unwrap());
    }

    #[test]
    fn features_match_batched_critic() {
        let st = ModelState::init(tiny()).unwrap();
        let d = data();
        let f = st.embed(d.images()).unwrap();
        assert_eq!(f.len(), 5);
        assert!(f.iter().all(|v| v.len() == 3 && v.iter().all(|x| x.is_finite())));
        let single = st.embed(&d.images()[2..3]).unwrap();
        for (a, b) in single[0].iter().zip(&f[2]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
