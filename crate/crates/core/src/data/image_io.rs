//! PNG frames and 16-bit millimeter depth maps.

use std::path::Path;

use image::{imageops::FilterType, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use crate::tensor::Tensor;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::Image {
            path: path.to_path_buf(),
            source: other,
        },
    }
}

/// Size `(width, height)` of an image file without decoding pixels.
pub fn image_size(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let (w, h) = image::image_dimensions(path).map_err(|e| image_err(path, e))?;
    Ok((w as usize, h as usize))
}

/// Decodes an image as `[3, H, W]` in `[0, 1]`, optionally resized to
/// `(width, height)`.
pub fn read_rgb(path: impl AsRef<Path>, size: Option<(usize, usize)>) -> Result<Tensor> {
    let path = path.as_ref();
    let mut img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    if let Some((w, h)) = size {
        if (img.width() as usize, img.height() as usize) != (w, h) {
            img = image::imageops::resize(&img, w as u32, h as u32, FilterType::Triangle);
        }
    }
    Ok(rgb_to_tensor(&img))
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = p[c] as f64 / 255.0;
        }
    }
    Tensor::new([3, h, w], data).expect("sized from image")
}

/// Quantizes a `[3, H, W]` image in `[0, 1]` to 8 bits.
pub fn tensor_to_rgb(t: &Tensor) -> Result<RgbImage> {
    t.expect_ndim(3, "tensor_to_rgb")?;
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {c}")));
    }
    let d = t.data();
    Ok(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch: usize| {
            let v = d[(ch * h + y as usize) * w + x as usize];
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        Rgb([px(0), px(1), px(2)])
    }))
}

pub fn write_rgb(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    tensor_to_rgb(t)?.save(path).map_err(|e| image_err(path, e))
}

/// Writes depth in millimeters as 16-bit grayscale; invalid pixels are 0 and
/// depths beyond 65.535 m saturate.
pub fn write_depth_mm(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (depth.width(), depth.height());
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        let mm = if depth.is_valid(r, c) {
            (depth.get(r, c) * 1000.0)
                .round()
                .clamp(1.0, u16::MAX as f64) as u16
        } else {
            0
        };
        Luma([mm])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Reads a 16-bit millimeter depth PNG; zero pixels are invalid.
pub fn read_depth_mm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(i) => i,
        other => {
            return Err(Error::Data(format!(
                "{}: expected a 16-bit grayscale depth PNG, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw: Vec<u16> = img.into_raw();
    let values = raw.iter().map(|&mm| mm as f64 / 1000.0).collect();
    let valid = raw.iter().map(|&mm| mm > 0).collect();
    DepthMap::with_mask(h, w, values, valid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_round_trip_is_exact_on_8bit_values() {
        let t = Tensor::from_fn([3, 4, 5], |i| ((i * 37) % 256) as f64 / 255.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        write_rgb(&p, &t).unwrap();
        assert_eq!(read_rgb(&p, None).unwrap(), t);
        assert_eq!(image_size(&p).unwrap(), (5, 4));
    }

    #[test]
    fn depth_mm_keeps_invalid_as_zero() {
        let d = DepthMap::with_mask(1, 3, vec![1.0, 2.5, 7.0], vec![true, false, true]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        write_depth_mm(&p, &d).unwrap();
        let back = read_depth_mm(&p).unwrap();
        assert_eq!(back.valid(), &[true, false, true]);
        assert_eq!(back.get(0, 2), 7.0);
    }
}
