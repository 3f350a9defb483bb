//! Forward passes of the mapping, synthesis and critic networks.

use super::params::Bound;
use super::{GanConfig, GanError};
use crate::autograd::{Graph, Var};

const DEMOD_EPS: f64 = 1e-8;

fn expect_shape(g: &Graph, v: Var, want: &[usize], what: &str) -> Result<(), GanError> {
    if g.shape(v) != want {
        return Err(GanError::Shape(format!(
            "{what}: expected shape {want:?}, got {:?}",
            g.shape(v)
        )));
    }
    Ok(())
}

/// Maps latents `z [n, style_dim]` to style vectors `w [n, style_dim]`
/// through `mapping_layers` fully connected leaky-rectified layers.
pub fn mapping_forward(g: &mut Graph, p: &Bound, cfg: &GanConfig, z: Var) -> Result<Var, GanError> {
    let n = g.shape(z).first().copied().unwrap_or(0);
    expect_shape(g, z, &[n, cfg.style_dim], "mapping_forward")?;
    let mut x = z;
    for i in 0..cfg.mapping_layers {
        let w = p.var(&format!("mapping.{i}.weight"))?;
        let b = p.var(&format!("mapping.{i}.bias"))?;
        let y = g.linear(x, w, Some(b))?;
        x = g.leaky_relu(y, cfg.leaky_slope);
    }
    Ok(x)
}

/// Style-modulated convolution.
///
/// Scaling the input channels by the style and the output channels by the
/// demodulation factor is algebraically the same as modulating and
/// renormalising the weights per sample, and lets the batch share one conv.
fn modulated_conv(
    g: &mut Graph,
    p: &Bound,
    prefix: &str,
    x: Var,
    w: Var,
    demodulate: bool,
) -> Result<Var, GanError> {
    let aw = p.var(&format!("{prefix}.affine.weight"))?;
    let ab = p.var(&format!("{prefix}.affine.bias"))?;
    let weight = p.var(&format!("{prefix}.weight"))?;
    let bias = p.var(&format!("{prefix}.bias"))?;
    let n = g.shape(x)[0];
    let ws = g.shape(weight).to_vec();
    let (c_out, c_in) = (ws[0], ws[1]);

    let style = g.linear(w, aw, Some(ab))?;
    let s4 = g.reshape(style, &[n, c_in, 1, 1])?;
    let xs = g.mul(x, s4)?;
    let mut y = g.conv2d_same(xs, weight)?;
    if demodulate {
        // d[n, o] = 1 / sqrt(sum_i s[n, i]^2 * sum_k weight[o, i, k]^2 + eps)
        let wsq = g.square(weight);
        let wsq = g.sum_to(wsq, &[c_out, c_in, 1, 1])?;
        let wsq = g.reshape(wsq, &[c_out, c_in])?;
        let wsq_t = g.transpose(wsq)?;
        let s2 = g.square(style);
        let t = g.matmul(s2, wsq_t)?;
        let t = g.add_scalar(t, DEMOD_EPS);
        let r = g.sqrt(t);
        let d = g.recip(r);
        let d = g.reshape(d, &[n, c_out, 1, 1])?;
        y = g.mul(y, d)?;
    }
    let b = g.reshape(bias, &[1, c_out, 1, 1])?;
    Ok(g.add(y, b)?)
}

/// Renders images `[n, channels, image_size, image_size]` from style vectors.
///
/// Each resolution level upsamples the features, applies two modulated
/// convolutions and adds its own RGB projection onto the upsampled image
/// from the previous level.
pub fn generate(g: &mut Graph, p: &Bound, cfg: &GanConfig, w: Var) -> Result<Var, GanError> {
    let n = g.shape(w).first().copied().unwrap_or(0);
    expect_shape(g, w, &[n, cfg.style_dim], "generate")?;
    let c4 = cfg.channels_at(4);
    let konst = p.var("synth.const")?;
    let mut x = g.expand(konst, &[n, c4, 4, 4])?;
    let mut rgb: Option<Var> = None;
    for (level, res) in cfg.resolutions().into_iter().enumerate() {
        let convs: &[&str] = if level == 0 { &["conv0"] } else { &["conv0", "conv1"] };
        if level > 0 {
            x = g.upsample2x(x)?;
        }
        for c in convs {
            let y = modulated_conv(g, p, &format!("synth.b{res}.{c}"), x, w, true)?;
            x = g.leaky_relu(y, cfg.leaky_slope);
        }
        let y = modulated_conv(g, p, &format!("synth.b{res}.torgb"), x, w, false)?;
        rgb = Some(match rgb {
            Some(prev) => {
                let up = g.upsample2x(prev)?;
                g.add(up, y)?
            }
            None => y,
        });
    }
    Ok(rgb.expect("at least one resolution"))
}

fn conv_bias_act(g: &mut Graph, p: &Bound, prefix: &str, x: Var, slope: f64) -> Result<Var, GanError> {
    let w = p.var(&format!("{prefix}.weight"))?;
    let b = p.var(&format!("{prefix}.bias"))?;
    let c = g.shape(w)[0];
    let y = g.conv2d_same(x, w)?;
    let b = g.reshape(b, &[1, c, 1, 1])?;
    let y = g.add(y, b)?;
    Ok(g.leaky_relu(y, slope))
}

/// Critic activations of the penultimate fully connected layer, `[n, feature_dim]`.
pub fn critic_features(g: &mut Graph, p: &Bound, cfg: &GanConfig, images: Var) -> Result<Var, GanError> {
    let n = g.shape(images).first().copied().unwrap_or(0);
    let s = cfg.image_size;
    expect_shape(g, images, &[n, cfg.channels, s, s], "critic")?;
    let mut h = conv_bias_act(g, p, "fromrgb", images, cfg.leaky_slope)?;
    let mut res = s;
    while res > 4 {
        let t = conv_bias_act(g, p, &format!("b{res}.conv0"), h, cfg.leaky_slope)?;
        let t = g.downsample2x(t)?;
        let t = conv_bias_act(g, p, &format!("b{res}.conv1"), t, cfg.leaky_slope)?;
        let skip_w = p.var(&format!("b{res}.skip.weight"))?;
        let hd = g.downsample2x(h)?;
        let sk = g.conv2d(hd, skip_w, 0)?;
        let sum = g.add(t, sk)?;
        h = g.scale(sum, std::f64::consts::FRAC_1_SQRT_2);
        res /= 2;
    }
    let h = conv_bias_act(g, p, "b4.conv", h, cfg.leaky_slope)?;
    let flat_len = g.value(h).numel() / n.max(1);
    let flat = g.reshape(h, &[n, flat_len])?;
    let fw = p.var("fc.weight")?;
    let fb = p.var("fc.bias")?;
    let f = g.linear(flat, fw, Some(fb))?;
    Ok(g.leaky_relu(f, cfg.leaky_slope))
}

/// Affine head mapping features `[n, feature_dim]` to logits `[n, 1]`.
pub fn critic_head(g: &mut Graph, p: &Bound, features: Var) -> Result<Var, GanError> {
    let w = p.var("out.weight")?;
    let b = p.var("out.bias")?;
    Ok(g.linear(features, w, Some(b))?)
}

/// Realness logits `[n, 1]`.
pub fn critic_forward(g: &mut Graph, p: &Bound, cfg: &GanConfig, images: Var) -> Result<Var, GanError> {
    let f = critic_features(g, p, cfg, images)?;
    critic_head(g, p, f)
}
