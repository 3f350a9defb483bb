//! Procedural rendering of one well.
//!
//! A well shows a handful of elliptical cells. Cell count, size and most
//! channel intensities grow with the latent viability `v`; infection puncta
//! in the ER channel fade with it. Cell lines differ in cell orientation,
//! eccentricity and cross-channel bleed. Every well also gets
//! an illumination gain and background offset, then Gaussian pixel noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Normal, StandardNormal};

use super::ChannelRole;
use crate::autograd::Tensor;
use crate::rng;

pub const NOISE_SIGMA: f64 = 0.05;
const STYLE_SEED: u64 = 0x57_1e5;

/// Rendering style of one cell line.
#[derive(Clone, Debug, PartialEq)]
pub struct Style {
    pub orientation: f64,
    /// Ratio of the long to the short cell axis.
    pub eccentricity: f64,
    pub size: f64,
    /// Bleed between the five structural channels, indexed `[to][from]`.
    pub mixing: [[f64; 5]; 5],
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

impl Style {
    pub fn for_index(s: usize) -> Self {
        let t = s as f64;
        let mut r = rng::stream(STYLE_SEED, &[s as u64]);
        let mut mixing = [[0.0; 5]; 5];
        for (i, row) in mixing.iter_mut().enumerate() {
            for (j, m) in row.iter_mut().enumerate() {
                *m = if i == j { 1.0 } else { 0.15 * r.random_range(-1.0..1.0) };
            }
        }
        Self {
            orientation: frac(t * 0.618_034) * PI,
            eccentricity: 6.0 + 4.0 * frac(0.37 * t + 0.25),
            size: 1.0,
            mixing,
        }
    }
}

fn structural_index(role: ChannelRole) -> Option<usize> {
    match role {
        ChannelRole::Nucleus => Some(0),
        ChannelRole::Er => Some(1),
        ChannelRole::Actin => Some(2),
        ChannelRole::Nucleoli => Some(3),
        ChannelRole::Membrane => Some(4),
        ChannelRole::Mito | ChannelRole::Blank => None,
    }
}

/// Strength of the healthy phenotype for viability `v`: a clamped logit,
/// so equal steps along a Hill curve in log-concentration give equal
/// steps in appearance. Exactly 0 and 1 at the ends.
pub fn phenotype(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v == 0.0 || v == 1.0 {
        return v;
    }
    (0.5 + (v / (1.0 - v)).ln() / 12.0).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    cx: f64,
    cy: f64,
    /// Semi-axes along and across the orientation.
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Cell {
    /// Coordinates of pixel `(x, y)` in the cell frame, in units of the semi-axes.
    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.cx, y - self.cy);
        ((dx * self.cos + dy * self.sin) / self.a, (-dx * self.sin + dy * self.cos) / self.b)
    }

    /// A point at cell-frame offset `(u, w)`.
    fn at(&self, u: f64, w: f64) -> (f64, f64) {
        let (du, dw) = (u * self.a, w * self.b);
        (self.cx + du * self.cos - dw * self.sin, self.cy + du * self.sin + dw * self.cos)
    }
}

fn cells(seed: u64, well: u64, style: &Style, p: f64, side: usize) -> Vec<Cell> {
    let mut r = rng::stream(seed, &[rng::tag("cells"), well]);
    let scale = side as f64 / 16.0;
    let jitter: f64 = r.sample(Normal::new(0.0, 0.7).unwrap());
    let count = (3.0 + 3.0 * p + jitter).round().max(1.0) as usize;
    let lo = 0.15 * side as f64;
    let hi = 0.85 * side as f64;
    (0..count)
        .map(|_| {
            let cx = r.random_range(lo..hi);
            let cy = r.random_range(lo..hi);
            let size: f64 = r.sample::<f64, _>(StandardNormal) * 0.1;
            let radius = (2.0 + 0.6 * p) * style.size * scale * size.exp();
            let theta = style.orientation + 0.15 * r.sample::<f64, _>(StandardNormal);
            // Infected cells round up.
            let e = style.eccentricity.sqrt();
            Cell {
                cx,
                cy,
                a: radius * e,
                b: radius / e,
                cos: theta.cos(),
                sin: theta.sin(),
            }
        })
        .collect()
}

fn splat(plane: &mut [f64], side: usize, x0: f64, y0: f64, sigma: f64, amp: f64) {
    let k = -0.5 / (sigma * sigma);
    for y in 0..side {
        let dy = y as f64 + 0.5 - y0;
        for x in 0..side {
            let dx = x as f64 + 0.5 - x0;
            plane[y * side + x] += amp * ((dx * dx + dy * dy) * k).exp();
        }
    }
}

fn draw_cells(plane: &mut [f64], side: usize, cells: &[Cell], f: impl Fn(f64, f64) -> f64) {
    for c in cells {
        for y in 0..side {
            for x in 0..side {
                let (u, w) = c.local(x as f64 + 0.5, y as f64 + 0.5);
                plane[y * side + x] += f(u, w);
            }
        }
    }
}

/// Noise-free, unbled intensity of one role.
fn clean_plane(role: ChannelRole, seed: u64, well: u64, cells: &[Cell], v: f64, side: usize) -> Vec<f64> {
    let mut p = vec![0.0; side * side];
    let px = side as f64 / 16.0;
    let mut r = rng::stream(seed, &[rng::tag(role.name()), well]);
    match role {
        ChannelRole::Nucleus => draw_cells(&mut p, side, cells, |u, w| {
            0.9 * (-(u * u + w * w) / (2.0 * 0.45 * 0.45)).exp()
        }),
        ChannelRole::Er => {
            let body = 0.25 + 0.35 * v;
            draw_cells(&mut p, side, cells, |u, w| body * (-(u * u + w * w) / 2.0).exp());
            for c in cells {
                let n = ((1.0 - v) * 3.0 + r.random_range(-0.5..0.5)).round().max(0.0) as usize;
                for _ in 0..n {
                    let (x, y) = c.at(0.7 * r.sample::<f64, _>(StandardNormal), 0.7 * r.sample::<f64, _>(StandardNormal));
                    splat(&mut p, side, x, y, 0.5 * px, 0.8);
                }
            }
        }
        ChannelRole::Actin => {
            let amp = 0.2 + 0.5 * v;
            draw_cells(&mut p, side, cells, |u, w| {
                amp * (-(u * u / (1.3 * 1.3) + w * w / (0.35 * 0.35)) / 2.0).exp()
            });
        }
        ChannelRole::Nucleoli => {
            for c in cells {
                let n = 1 + (2.0 * v).round() as usize;
                for _ in 0..n {
                    let (x, y) = c.at(0.25 * r.sample::<f64, _>(StandardNormal), 0.25 * r.sample::<f64, _>(StandardNormal));
                    splat(&mut p, side, x, y, 0.45 * px, 0.7);
                }
            }
        }
        ChannelRole::Membrane => {
            let amp = 0.15 + 0.45 * v;
            draw_cells(&mut p, side, cells, |u, w| {
                let d = (u * u + w * w).sqrt() - 1.0;
                amp * (-d * d / (2.0 * 0.18 * 0.18)).exp()
            });
        }
        ChannelRole::Mito => {
            for c in cells {
                for _ in 0..4 {
                    let (x, y) = c.at(0.6 * r.sample::<f64, _>(StandardNormal), 0.6 * r.sample::<f64, _>(StandardNormal));
                    splat(&mut p, side, x, y, 0.6 * px, 0.25 + 0.25 * v);
                }
            }
        }
        ChannelRole::Blank => {}
    }
    p
}

/// Renders well number `well` as a `[channels, side, side]` image in `[0, 1]`.
///
/// Each role draws from its own random streams, so adding or removing a
/// channel leaves every other channel bit-identical.
pub fn render_well(seed: u64, well: u64, roles: &[ChannelRole], style: &Style, v: f64, side: usize) -> Tensor {
    let v = phenotype(v);
    let cells = cells(seed, well, style, v, side);
    let structural: Vec<Vec<f64>> = ChannelRole::DEFAULT
        .iter()
        .map(|&role| {
            if roles.contains(&role) {
                clean_plane(role, seed, well, &cells, v, side)
            } else {
                Vec::new()
            }
        })
        .collect();
    let mut nuisance = rng::stream(seed, &[rng::tag("nuisance"), well]);
    let gain = (0.3 * nuisance.sample::<f64, _>(StandardNormal)).exp();
    let background = nuisance.random_range(0.0..0.08);

    let mut seen = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(roles.len() * side * side);
    for &role in roles {
        let occ = seen.entry(role).and_modify(|k| *k += 1).or_insert(0u64);
        let tags = [rng::tag(role.name()), *occ, well];
        let mixed = match structural_index(role) {
            Some(i) => {
                let mut m = vec![0.0; side * side];
                for (j, src) in structural.iter().enumerate() {
                    let coef = style.mixing[i][j];
                    for (a, b) in m.iter_mut().zip(src) {
                        *a += coef * b;
                    }
                }
                m
            }
            None => clean_plane(role, seed, well, &cells, v, side),
        };
        let mut gr = rng::stream(seed, &[&[rng::tag("gain")][..], &tags].concat());
        let channel_gain = gain * (0.1 * gr.sample::<f64, _>(StandardNormal)).exp();
        let mut nr = rng::stream(seed, &[&[rng::tag("noise")][..], &tags].concat());
        out.extend(mixed.iter().map(|&m| {
            let noise: f64 = nr.sample::<f64, _>(StandardNormal) * NOISE_SIGMA;
            // Stored as f32 on disk; rounding here keeps memory and disk identical.
            (channel_gain * m + background + noise).clamp(0.0, 1.0) as f32 as f64
        }));
    }
    Tensor::new(vec![roles.len(), side, side], out).expect("shape matches data")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles() -> Vec<ChannelRole> {
        ChannelRole::DEFAULT.to_vec()
    }

    #[test]
    fn deterministic_and_bounded() {
        let s = Style::for_index(0);
        let a = render_well(1, 7, &roles(), &s, 0.3, 16);
        let b = render_well(1, 7, &roles(), &s, 0.3, 16);
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[5, 16, 16]);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, render_well(1, 8, &roles(), &s, 0.3, 16));
    }

    #[test]
    fn extra_channel_leaves_others_untouched() {
        let s = Style::for_index(3);
        let base = render_well(2, 4, &roles(), &s, 0.6, 16);
        let mut six = roles();
        six.insert(3, ChannelRole::Mito);
        let with = render_well(2, 4, &six, &s, 0.6, 16);
        let plane = 256;
        assert_eq!(&with.data()[..3 * plane], &base.data()[..3 * plane]);
        assert_eq!(&with.data()[4 * plane..], &base.data()[3 * plane..]);
    }

    #[test]
    fn styles_differ() {
        let a = Style::for_index(0);
        let b = Style::for_index(1);
        assert_ne!(a, b);
        assert!(a.eccentricity > 1.0 && b.eccentricity > 1.0);
    }

    #[test]
    fn actin_brightens_with_viability() {
        let s = Style::for_index(2);
        let mean_actin = |v: f64| {
            (0..40u64)
                .map(|w| {
                    let img = render_well(5, w, &roles(), &s, v, 16);
                    img.data()[2 * 256..3 * 256].iter().sum::<f64>() / 256.0
                })
                .sum::<f64>()
                / 40.0
        };
        let means: Vec<f64> = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0].iter().map(|&v| mean_actin(v)).collect();
        assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
    }
}
