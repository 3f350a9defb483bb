//! `IMG1` image blobs: the 4-byte magic, channel, height and width as
//! little-endian `u32`, then `f32` pixels in channel-major order.

use std::path::Path;

use super::ScreenError;
use crate::autograd::Tensor;

pub const MAGIC: &[u8; 4] = b"IMG1";
pub const HEADER_LEN: usize = 16;

pub fn encode(image: &Tensor) -> Result<Vec<u8>, ScreenError> {
    let [c, h, w] = image_dims(image)?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * image.numel());
    out.extend_from_slice(MAGIC);
    for d in [c, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in image.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode(buf: &[u8]) -> Result<Tensor, ScreenError> {
    let bad = |m: String| ScreenError::Blob(m);
    if buf.len() < HEADER_LEN || &buf[..4] != MAGIC {
        return Err(bad("missing IMG1 header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let numel = c.checked_mul(h).and_then(|n| n.checked_mul(w)).filter(|&n| n > 0);
    let Some(numel) = numel else {
        return Err(bad(format!("invalid dims {c}x{h}x{w}")));
    };
    if buf.len() - HEADER_LEN != 4 * numel {
        return Err(bad(format!(
            "payload is {} bytes, dims {c}x{h}x{w} need {}",
            buf.len() - HEADER_LEN,
            4 * numel
        )));
    }
    let data: Vec<f64> = buf[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(bad(format!("pixel {i} is {} outside [0, 1]", data[i])));
    }
    Ok(Tensor::new(vec![c, h, w], data).expect("dims checked"))
}

fn image_dims(image: &Tensor) -> Result<[usize; 3], ScreenError> {
    match image.shape() {
        &[c, h, w] => Ok([c, h, w]),
        s => Err(ScreenError::Shape(format!("images are [c, h, w], got {s:?}"))),
    }
}

pub fn write_image(path: &Path, image: &Tensor) -> Result<(), ScreenError> {
    std::fs::write(path, encode(image)?).map_err(|e| ScreenError::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Tensor, ScreenError> {
    let buf = std::fs::read(path).map_err(|e| ScreenError::io(path, e))?;
    decode(&buf).map_err(|e| ScreenError::Blob(format!("{}: {e}", path.display())))
}
