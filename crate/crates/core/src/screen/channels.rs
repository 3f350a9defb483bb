use super::ScreenError;
use crate::autograd::{AutogradError, Graph, Tensor, Var};

/// Removes channel `index` from a `[c, h, w]` image.
pub fn drop_channel(image: &Tensor, index: usize) -> Result<Tensor, ScreenError> {
    let &[c, h, w] = image.shape() else {
        return Err(ScreenError::Shape(format!("images are [c, h, w], got {:?}", image.shape())));
    };
    if index >= c {
        return Err(ScreenError::Shape(format!("channel {index} out of range for {c} channels")));
    }
    if c == 1 {
        return Err(ScreenError::Shape("cannot drop the only channel".into()));
    }
    let plane = h * w;
    let data: Vec<f64> = image
        .data()
        .chunks_exact(plane)
        .enumerate()
        .filter(|(i, _)| *i != index)
        .flat_map(|(_, p)| p.iter().copied())
        .collect();
    Ok(Tensor::new(vec![c - 1, h, w], data).expect("shape matches data"))
}

/// Per-pixel affine map across channels: `out[o] = sum_i weights[o, i] * image[i] + bias[o]`.
pub fn channel_adapter(image: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, ScreenError> {
    let &[c_in, h, w] = image.shape() else {
        return Err(ScreenError::Shape(format!("images are [c, h, w], got {:?}", image.shape())));
    };
    check_adapter(c_in, weights.shape(), bias.shape())?;
    let c_out = weights.shape()[0];
    let plane = h * w;
    let mut out = vec![0.0; c_out * plane];
    for (o, dst) in out.chunks_exact_mut(plane).enumerate() {
        dst.fill(bias.data()[o]);
        for (i, src) in image.data().chunks_exact(plane).enumerate() {
            let k = weights.data()[o * c_in + i];
            for (a, b) in dst.iter_mut().zip(src) {
                *a += k * b;
            }
        }
    }
    Ok(Tensor::new(vec![c_out, h, w], out).expect("shape matches data"))
}

fn check_adapter(c_in: usize, w: &[usize], b: &[usize]) -> Result<(), ScreenError> {
    match (w, b) {
        (&[o, i], &[ob]) if i == c_in && ob == o => Ok(()),
        _ => Err(ScreenError::Shape(format!(
            "adapter weights {w:?} / bias {b:?} do not map {c_in} channels"
        ))),
    }
}

/// The same map as a 1x1 convolution on a batch `[n, c_in, h, w]`, so it
/// can be trained in front of a critic.
pub fn channel_adapter_graph(g: &mut Graph, images: Var, weights: Var, bias: Var) -> Result<Var, ScreenError> {
    let c_in = g.shape(images).get(1).copied().unwrap_or(0);
    check_adapter(c_in, g.shape(weights), g.shape(bias))?;
    let (o, i) = (g.shape(weights)[0], g.shape(weights)[1]);
    let run = |g: &mut Graph| -> Result<Var, AutogradError> {
        let k = g.reshape(weights, &[o, i, 1, 1])?;
        let y = g.conv2d(images, k, 0)?;
        let b = g.reshape(bias, &[1, o, 1, 1])?;
        g.add(y, b)
    };
    run(g).map_err(|e| ScreenError::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> Tensor {
        Tensor::from_fn(&[5, 3, 2], |i| ((i * 37) % 11) as f64 / 10.0)
    }

    #[test]
    fn drop_last_channel() {
        let x = img();
        let y = drop_channel(&x, 4).unwrap();
        assert_eq!(y.shape(), &[4, 3, 2]);
        assert_eq!(y.data(), &x.data()[..24]);
        assert!(y.norm() <= x.norm());
        assert!(drop_channel(&x, 5).is_err());
    }

    #[test]
    fn select_channels() {
        let x = img();
        let mut w = Tensor::zeros(&[3, 5]);
        for (o, i) in [(0, 1), (1, 2), (2, 3)] {
            w.data_mut()[o * 5 + i] = 1.0;
        }
        let y = channel_adapter(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y.data(), &x.data()[6..24]);
    }

    #[test]
    fn zero_weights_give_bias() {
        let y = channel_adapter(&img(), &Tensor::zeros(&[2, 5]), &Tensor::new(vec![2], vec![0.25, -1.0]).unwrap()).unwrap();
        assert!(y.data()[..6].iter().all(|&v| v == 0.25));
        assert!(y.data()[6..].iter().all(|&v| v == -1.0));
        assert!(channel_adapter(&img(), &Tensor::zeros(&[2, 4]), &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn graph_version_matches() {
        let x = img();
        let w = Tensor::from_fn(&[3, 5], |i| (i as f64 * 0.7).sin());
        let b = Tensor::from_fn(&[3], |i| i as f64 - 1.0);
        let want = channel_adapter(&x, &w, &b).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(x.clone().reshaped(&[1, 5, 3, 2]).unwrap());
        let wv = g.param(w);
        let bv = g.param(b);
        let y = channel_adapter_graph(&mut g, xv, wv, bv).unwrap();
        assert!(g.value(y).data().iter().zip(want.data()).all(|(a, b)| (a - b).abs() < 1e-14));
    }
}
