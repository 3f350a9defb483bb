use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{GanConfig, GanError};
use crate::autograd::{Graph, Tensor, Var};

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet(BTreeMap<String, Tensor>);

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.0.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.0.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.0.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.0.values().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.values().all(Tensor::is_finite)
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self(
            self.0
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        )
    }

    /// Sets every tensor to zero, keeping names and shapes.
    pub fn zero_all(&mut self) {
        for t in self.0.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|((ka, ta), (kb, tb))| ka == kb && ta.shape() == tb.shape())
    }

    /// Registers every tensor on `g`, as trainable leaves or as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        Bound(
            self.0
                .iter()
                .map(|(k, t)| {
                    let v = if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
                    (k.clone(), v)
                })
                .collect(),
        )
    }
}

impl FromIterator<(String, Tensor)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Graph variables for a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Bound(BTreeMap<String, Var>);

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var, GanError> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| GanError::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.0.iter()
    }

    /// Points `name` at another variable, e.g. to differentiate one weight.
    pub fn replace(&mut self, name: &str, v: Var) -> Result<(), GanError> {
        match self.0.get_mut(name) {
            Some(slot) => {
                *slot = v;
                Ok(())
            }
            None => Err(GanError::MissingParam(name.to_string())),
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        self.0.values().copied().collect()
    }
}

fn normal(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.sample::<f64, _>(StandardNormal) * std)
}

/// Random initial generator weights: mapping network plus synthesis network.
pub fn init_generator(cfg: &GanConfig, rng: &mut impl Rng) -> ParamSet {
    let mut p = ParamSet::new();
    let d = cfg.style_dim;
    for i in 0..cfg.mapping_layers {
        p.insert(format!("mapping.{i}.weight"), normal(rng, &[d, d], (2.0 / d as f64).sqrt()));
        p.insert(format!("mapping.{i}.bias"), Tensor::zeros(&[d]));
    }
    let c4 = cfg.channels_at(4);
    p.insert("synth.const", normal(rng, &[1, c4, 4, 4], 1.0));
    let mut modconv = |p: &mut ParamSet, prefix: String, c_in: usize, c_out: usize, k: usize| {
        p.insert(format!("{prefix}.affine.weight"), normal(rng, &[c_in, d], (1.0 / d as f64).sqrt()));
        p.insert(format!("{prefix}.affine.bias"), Tensor::full(&[c_in], 1.0));
        let fan_in = (c_in * k * k) as f64;
        p.insert(format!("{prefix}.weight"), normal(rng, &[c_out, c_in, k, k], fan_in.sqrt().recip()));
        p.insert(format!("{prefix}.bias"), Tensor::zeros(&[c_out]));
    };
    let mut c_prev = c4;
    for (level, res) in cfg.resolutions().into_iter().enumerate() {
        let c = cfg.channels_at(res);
        modconv(&mut p, format!("synth.b{res}.conv0"), c_prev, c, 3);
        if level > 0 {
            modconv(&mut p, format!("synth.b{res}.conv1"), c, c, 3);
        }
        modconv(&mut p, format!("synth.b{res}.torgb"), c, cfg.channels, 1);
        c_prev = c;
    }
    p
}

/// Random initial critic weights.
pub fn init_critic(cfg: &GanConfig, rng: &mut impl Rng) -> ParamSet {
    let mut p = ParamSet::new();
    let mut conv = |p: &mut ParamSet, prefix: &str, c_in: usize, c_out: usize, k: usize, bias: bool| {
        let std = (2.0 / (c_in * k * k) as f64).sqrt();
        p.insert(format!("{prefix}.weight"), normal(rng, &[c_out, c_in, k, k], std));
        if bias {
            p.insert(format!("{prefix}.bias"), Tensor::zeros(&[c_out]));
        }
    };
    let s = cfg.image_size;
    conv(&mut p, "fromrgb", cfg.channels, cfg.channels_at(s), 1, true);
    let mut res = s;
    while res > 4 {
        let (c, c_next) = (cfg.channels_at(res), cfg.channels_at(res / 2));
        conv(&mut p, &format!("b{res}.conv0"), c, c, 3, true);
        conv(&mut p, &format!("b{res}.conv1"), c, c_next, 3, true);
        conv(&mut p, &format!("b{res}.skip"), c, c_next, 1, false);
        res /= 2;
    }
    let c4 = cfg.channels_at(4);
    conv(&mut p, "b4.conv", c4, c4, 3, true);
    let flat = c4 * 16;
    let f = cfg.feature_dim;
    p.insert("fc.weight", normal(rng, &[f, flat], (2.0 / flat as f64).sqrt()));
    p.insert("fc.bias", Tensor::zeros(&[f]));
    p.insert("out.weight", normal(rng, &[1, f], (1.0 / f as f64).sqrt()));
    p.insert("out.bias", Tensor::zeros(&[1]));
    p
}
