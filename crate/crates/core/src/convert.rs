//! Conversions between map image types and `[C, H, W]` tensors.

use crate::map::{Plane, RgbImage, TileStack, TILES_PER_CHUNK};
use crate::nn::Tensor;

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = img.dims();
    let mut data = vec![0.0; 3 * w * h];
    for (i, px) in img.pixels().iter().enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = px[c];
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

pub fn tensor_to_rgb(t: &Tensor) -> RgbImage {
    let (c, h, w) = t.chw();
    assert_eq!(c, 3, "expected 3 channels");
    RgbImage::from_fn(w, h, |x, y| {
        [t.at3(0, y, x), t.at3(1, y, x), t.at3(2, y, x)]
    })
}

pub fn plane_to_tensor(p: &Plane) -> Tensor {
    Tensor::from_vec(&[1, p.height(), p.width()], p.data().to_vec())
}

pub fn stack_to_tensor(s: &TileStack) -> Tensor {
    Tensor::from_vec(&[TILES_PER_CHUNK, s.side, s.side], s.data.clone())
}

pub fn tensor_to_stack(t: &Tensor) -> TileStack {
    let (c, h, w) = t.chw();
    assert!(
        c == TILES_PER_CHUNK && h == w,
        "expected an 8×side×side tensor, got {:?}",
        t.shape()
    );
    TileStack {
        side: h,
        data: t.data().to_vec(),
    }
}
