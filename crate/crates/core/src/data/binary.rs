//! Reader for CIFAR-style binary batches.
//!
//! Each record is `label_bytes` label bytes followed by the image in
//! channel-planar order: `height * width` bytes of red, then green, then blue.
//! Pixel bytes map to `[0, 1]` by dividing by 255.

use crate::augment::RasterImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CifarLayout {
    pub label_bytes: usize,
    /// Which label byte holds the class (CIFAR-100 stores coarse then fine).
    pub label_index: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl CifarLayout {
    pub const CIFAR10: CifarLayout = CifarLayout {
        label_bytes: 1,
        label_index: 0,
        height: 32,
        width: 32,
        channels: 3,
    };

    pub const CIFAR100_FINE: CifarLayout = CifarLayout {
        label_bytes: 2,
        label_index: 1,
        height: 32,
        width: 32,
        channels: 3,
    };

    pub fn record_len(&self) -> usize {
        self.label_bytes + self.height * self.width * self.channels
    }
}

pub fn read_cifar_binary(bytes: &[u8], layout: &CifarLayout) -> Result<Vec<(RasterImage, usize)>> {
    let rec = layout.record_len();
    if layout.label_index >= layout.label_bytes {
        return Err(Error::config("label_index must address a label byte"));
    }
    if !bytes.len().is_multiple_of(rec) {
        return Err(Error::Format(format!(
            "{} bytes is not a whole number of {rec}-byte records",
            bytes.len()
        )));
    }
    let plane = layout.height * layout.width;
    bytes
        .chunks_exact(rec)
        .map(|chunk| {
            let label = chunk[layout.label_index] as usize;
            let body = &chunk[layout.label_bytes..];
            let mut px = vec![0.0; plane * layout.channels];
            for c in 0..layout.channels {
                for (i, &b) in body[c * plane..(c + 1) * plane].iter().enumerate() {
                    px[i * layout.channels + c] = b as f64 / 255.0;
                }
            }
            let img = RasterImage::new(layout.height, layout.width, layout.channels, px)?;
            Ok((img, label))
        })
        .collect()
}
