//! Raw numeric kernels over flat row-major buffers.
//!
//! Nothing in here knows about the graph; shapes are validated by the
//! callers in `graph.rs`.

/// Numpy-style broadcast of two shapes (trailing dimensions aligned).
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for (i, o) in out.iter_mut().enumerate() {
        let da = dim_from_back(a, rank - 1 - i);
        let db = dim_from_back(b, rank - 1 - i);
        *o = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// True when `src` can be expanded to `dst`.
pub fn broadcastable_to(src: &[usize], dst: &[usize]) -> bool {
    src.len() <= dst.len()
        && (0..src.len()).all(|i| {
            let s = src[src.len() - 1 - i];
            s == 1 || s == dst[dst.len() - 1 - i]
        })
}

fn dim_from_back(shape: &[usize], from_back: usize) -> usize {
    if from_back < shape.len() {
        shape[shape.len() - 1 - from_back]
    } else {
        1
    }
}

/// For every flat index of `dst`, the flat index of the broadcast source.
fn broadcast_index_map(src: &[usize], dst: &[usize]) -> Vec<usize> {
    let rank = dst.len();
    let padded: Vec<usize> = (0..rank)
        .map(|i| dim_from_back(src, rank - 1 - i))
        .collect();
    // Source strides, zeroed along broadcast dimensions.
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..rank).rev() {
        strides[i] = if padded[i] == 1 { 0 } else { acc };
        acc *= padded[i];
    }
    let numel: usize = dst.iter().product();
    let mut map = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..numel {
        map.push(offset);
        for d in (0..rank).rev() {
            idx[d] += 1;
            offset += strides[d];
            if idx[d] < dst[d] {
                break;
            }
            offset -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

pub fn expand(src: &[f64], src_shape: &[usize], dst_shape: &[usize]) -> Vec<f64> {
    if src_shape == dst_shape {
        return src.to_vec();
    }
    broadcast_index_map(src_shape, dst_shape)
        .into_iter()
        .map(|i| src[i])
        .collect()
}

/// Adjoint of [`expand`]: sums `src` down to the smaller shape `dst_shape`.
pub fn sum_to(src: &[f64], src_shape: &[usize], dst_shape: &[usize]) -> Vec<f64> {
    if src_shape == dst_shape {
        return src.to_vec();
    }
    let numel: usize = dst_shape.iter().product();
    let mut out = vec![0.0; numel];
    for (v, i) in src.iter().zip(broadcast_index_map(dst_shape, src_shape)) {
        out[i] += v;
    }
    out
}

/// `[m, k] x [k, n] -> [m, n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Geometry of a stride-1 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvDims {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl ConvDims {
    pub fn out_h(&self) -> usize {
        self.in_h + 2 * self.pad + 1 - self.kernel
    }

    pub fn out_w(&self) -> usize {
        self.in_w + 2 * self.pad + 1 - self.kernel
    }

    /// Output-column range `[lo, hi)` for which input column `x + k - pad` is in bounds.
    #[inline]
    fn valid(&self, k: usize, out_len: usize, in_len: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(k);
        let hi = (in_len + self.pad).saturating_sub(k).min(out_len);
        (lo, hi.max(lo))
    }
}

/// Direct cross-correlation: `out[n,o,y,x] = sum w[o,i,ky,kx] * x[n,i,y+ky-p,x+kx-p]`.
pub fn conv2d(x: &[f64], w: &[f64], d: &ConvDims) -> Vec<f64> {
    let p = d.out_h() * d.out_w();
    let kk = d.in_ch * d.kernel * d.kernel;
    let in_len = d.in_ch * d.in_h * d.in_w;
    let mut out = Vec::with_capacity(d.batch * d.out_ch * p);
    let mut cols = vec![0.0; kk * p];
    for n in 0..d.batch {
        im2col(&x[n * in_len..][..in_len], d, &mut cols);
        out.extend(matmul(w, &cols, d.out_ch, kk, p));
    }
    out
}

/// Gradient of `<g, conv2d(x, w)>` with respect to `x`.
pub fn conv2d_input_grad(g: &[f64], w: &[f64], d: &ConvDims) -> Vec<f64> {
    let p = d.out_h() * d.out_w();
    let kk = d.in_ch * d.kernel * d.kernel;
    let in_len = d.in_ch * d.in_h * d.in_w;
    let wt = transpose(w, d.out_ch, kk);
    let mut out = vec![0.0; d.batch * in_len];
    for n in 0..d.batch {
        let cols = matmul(&wt, &g[n * d.out_ch * p..][..d.out_ch * p], kk, d.out_ch, p);
        col2im(&cols, d, &mut out[n * in_len..][..in_len]);
    }
    out
}

/// Gradient of `<g, conv2d(x, w)>` with respect to `w`.
pub fn conv2d_weight_grad(x: &[f64], g: &[f64], d: &ConvDims) -> Vec<f64> {
    let p = d.out_h() * d.out_w();
    let kk = d.in_ch * d.kernel * d.kernel;
    let in_len = d.in_ch * d.in_h * d.in_w;
    let mut out = vec![0.0; d.out_ch * kk];
    let mut cols = vec![0.0; kk * p];
    for n in 0..d.batch {
        im2col(&x[n * in_len..][..in_len], d, &mut cols);
        let gn = &g[n * d.out_ch * p..][..d.out_ch * p];
        for (o, grow) in gn.chunks_exact(p).enumerate() {
            for (c, crow) in cols.chunks_exact(p).enumerate() {
                out[o * kk + c] += grow.iter().zip(crow).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    out
}

/// Unfolds one sample `[in_ch, h, w]` into `[in_ch * k * k, out_h * out_w]`.
fn im2col(x: &[f64], d: &ConvDims, cols: &mut [f64]) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let (ih, iw, k) = (d.in_h, d.in_w, d.kernel);
    cols.fill(0.0);
    for i in 0..d.in_ch {
        let plane = &x[i * ih * iw..][..ih * iw];
        for ky in 0..k {
            let (y0, y1) = d.valid(ky, oh, ih);
            for kx in 0..k {
                let (x0, x1) = d.valid(kx, ow, iw);
                let row = &mut cols[((i * k + ky) * k + kx) * oh * ow..][..oh * ow];
                for y in y0..y1 {
                    let src = (y + ky - d.pad) * iw + x0 + kx - d.pad;
                    row[y * ow + x0..y * ow + x1].copy_from_slice(&plane[src..src + x1 - x0]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`], accumulating into `x`.
fn col2im(cols: &[f64], d: &ConvDims, x: &mut [f64]) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let (ih, iw, k) = (d.in_h, d.in_w, d.kernel);
    for i in 0..d.in_ch {
        let plane = &mut x[i * ih * iw..][..ih * iw];
        for ky in 0..k {
            let (y0, y1) = d.valid(ky, oh, ih);
            for kx in 0..k {
                let (x0, x1) = d.valid(kx, ow, iw);
                let row = &cols[((i * k + ky) * k + kx) * oh * ow..][..oh * ow];
                for y in y0..y1 {
                    let dst = (y + ky - d.pad) * iw + x0 + kx - d.pad;
                    for (a, b) in plane[dst..dst + x1 - x0].iter_mut().zip(&row[y * ow + x0..y * ow + x1]) {
                        *a += b;
                    }
                }
            }
        }
    }
}

/// Fixed linear 2x resampling operators applied separably to the last two axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Resample {
    /// Bilinear 2x upsampling (half-pixel centres, edge clamped).
    Up,
    /// Bilinear 2x downsampling, which at this factor is a 2x2 box average.
    Down,
    /// Transpose of `Up`.
    UpAdjoint,
    /// Transpose of `Down`.
    DownAdjoint,
}

impl Resample {
    pub fn adjoint(self) -> Self {
        match self {
            Resample::Up => Resample::UpAdjoint,
            Resample::UpAdjoint => Resample::Up,
            Resample::Down => Resample::DownAdjoint,
            Resample::DownAdjoint => Resample::Down,
        }
    }

    pub fn out_len(self, len: usize) -> Option<usize> {
        match self {
            Resample::Up | Resample::DownAdjoint => Some(len * 2),
            Resample::Down | Resample::UpAdjoint => len.is_multiple_of(2).then_some(len / 2),
        }
    }

    /// Sparse `(out, in, weight)` taps of the 1-D operator for input length `len`.
    fn taps(self, len: usize) -> Vec<(usize, usize, f64)> {
        let up = |n: usize| {
            let mut t = Vec::with_capacity(4 * n);
            for y in 0..n {
                let prev = y.saturating_sub(1);
                let next = (y + 1).min(n - 1);
                t.push((2 * y, y, 0.75));
                t.push((2 * y, prev, 0.25));
                t.push((2 * y + 1, y, 0.75));
                t.push((2 * y + 1, next, 0.25));
            }
            t
        };
        let down = |n: usize| {
            let mut t = Vec::with_capacity(n);
            for y in 0..n / 2 {
                t.push((y, 2 * y, 0.5));
                t.push((y, 2 * y + 1, 0.5));
            }
            t
        };
        match self {
            Resample::Up => up(len),
            Resample::Down => down(len),
            Resample::UpAdjoint => up(len / 2).into_iter().map(|(o, i, w)| (i, o, w)).collect(),
            Resample::DownAdjoint => down(len * 2).into_iter().map(|(o, i, w)| (i, o, w)).collect(),
        }
    }

    /// Applies the operator to `planes` images of size `h x w`.
    pub fn apply(self, x: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = (self.out_len(h).unwrap(), self.out_len(w).unwrap());
        let th = self.taps(h);
        let tw = self.taps(w);
        let mut out = vec![0.0; planes * oh * ow];
        let mut rows = vec![0.0; oh * w];
        for p in 0..planes {
            let src = &x[p * h * w..][..h * w];
            rows.iter_mut().for_each(|v| *v = 0.0);
            for &(o, i, wt) in &th {
                let (dst, s) = (&mut rows[o * w..(o + 1) * w], &src[i * w..(i + 1) * w]);
                for (a, b) in dst.iter_mut().zip(s) {
                    *a += wt * b;
                }
            }
            let dst = &mut out[p * oh * ow..][..oh * ow];
            for r in 0..oh {
                for &(o, i, wt) in &tw {
                    dst[r * ow + o] += wt * rows[r * w + i];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[2, 3], &[3]), Some(vec![2, 3]));
        assert_eq!(broadcast_shape(&[4, 1, 2], &[3, 1]), Some(vec![4, 3, 2]));
        assert_eq!(broadcast_shape(&[2, 3], &[2]), None);
        assert!(broadcastable_to(&[], &[2, 2]));
        assert!(!broadcastable_to(&[2, 2], &[2]));
    }

    #[test]
    fn expand_then_sum_to() {
        let src = [1.0, 2.0, 3.0];
        let e = expand(&src, &[3, 1], &[3, 2]);
        assert_eq!(e, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert_eq!(sum_to(&e, &[3, 2], &[3, 1]), vec![2.0, 4.0, 6.0]);
        assert_eq!(sum_to(&e, &[3, 2], &[]), vec![12.0]);
    }

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
        assert_eq!(transpose(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    fn naive_conv(x: &[f64], w: &[f64], d: &ConvDims) -> Vec<f64> {
        let (oh, ow) = (d.out_h(), d.out_w());
        let mut out = vec![0.0; d.batch * d.out_ch * oh * ow];
        for n in 0..d.batch {
            for o in 0..d.out_ch {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = 0.0;
                        for i in 0..d.in_ch {
                            for ky in 0..d.kernel {
                                for kx in 0..d.kernel {
                                    let sy = y as isize + ky as isize - d.pad as isize;
                                    let sx = xx as isize + kx as isize - d.pad as isize;
                                    if sy < 0 || sx < 0 || sy >= d.in_h as isize || sx >= d.in_w as isize {
                                        continue;
                                    }
                                    let xi = ((n * d.in_ch + i) * d.in_h + sy as usize) * d.in_w + sx as usize;
                                    let wi = ((o * d.in_ch + i) * d.kernel + ky) * d.kernel + kx;
                                    acc += w[wi] * x[xi];
                                }
                            }
                        }
                        out[((n * d.out_ch + o) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loop() {
        for (pad, kernel) in [(0, 1), (1, 3), (0, 3), (2, 3)] {
            let d = ConvDims { batch: 2, in_ch: 3, out_ch: 2, in_h: 5, in_w: 4, kernel, pad };
            let x: Vec<f64> = (0..2 * 3 * 20).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            let w: Vec<f64> = (0..2 * 3 * kernel * kernel).map(|i| ((i * 13 % 7) as f64) * 0.5 - 1.0).collect();
            let fast = conv2d(&x, &w, &d);
            let slow = naive_conv(&x, &w, &d);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_grads_are_adjoint() {
        let d = ConvDims { batch: 1, in_ch: 2, out_ch: 3, in_h: 4, in_w: 4, kernel: 3, pad: 1 };
        let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..54).map(|i| (i as f64 * 0.71).cos()).collect();
        let g: Vec<f64> = (0..48).map(|i| (i as f64 * 0.13).sin()).collect();
        let y = conv2d(&x, &w, &d);
        let t: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let gx = conv2d_input_grad(&g, &w, &d);
        let gw = conv2d_weight_grad(&x, &g, &d);
        let tx: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
        let tw: f64 = gw.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((t - tx).abs() < 1e-10);
        assert!((t - tw).abs() < 1e-10);
    }

    #[test]
    fn resample_adjoint_pairs() {
        let x: Vec<f64> = (0..2 * 16).map(|i| (i as f64 * 0.3).sin()).collect();
        let up = Resample::Up.apply(&x, 2, 4, 4);
        let y: Vec<f64> = (0..2 * 64).map(|i| (i as f64 * 0.7).cos()).collect();
        let upt = Resample::UpAdjoint.apply(&y, 2, 8, 8);
        let lhs: f64 = up.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&upt).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let down = Resample::Down.apply(&y, 2, 8, 8);
        let downt = Resample::DownAdjoint.apply(&x, 2, 4, 4);
        let lhs: f64 = down.iter().zip(&x).map(|(a, b)| a * b).sum();
        let rhs: f64 = y.iter().zip(&downt).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn resample_preserves_constants() {
        let x = vec![3.0; 16];
        assert!(Resample::Up.apply(&x, 1, 4, 4).iter().all(|&v| (v - 3.0).abs() < 1e-15));
        assert!(Resample::Down.apply(&x, 1, 4, 4).iter().all(|&v| (v - 3.0).abs() < 1e-15));
    }
}
