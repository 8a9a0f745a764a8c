//! Interleaved floating-point images with values nominally in `[0, 1]`.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error(
        "image buffer holds {got} values, expected {expected} for {width}x{height}x{channels}"
    )]
    BufferSize {
        width: usize,
        height: usize,
        channels: usize,
        expected: usize,
        got: usize,
    },
    #[error("image io: {0}")]
    Codec(#[from] image::ImageError),
}

/// Row-major, channel-interleaved (`HxWxC`) image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, RasterError> {
        let expected = width * height * channels;
        if data.len() != expected || expected == 0 {
            return Err(RasterError::BufferSize {
                width,
                height,
                channels,
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Channel mean, as a single-channel image.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let inv = 1.0 / self.channels as f32;
        let data = self
            .data
            .chunks(self.channels)
            .map(|p| p.iter().sum::<f32>() * inv)
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Mean over every value on the one-pixel outer frame.
    pub fn border_mean(&self) -> f32 {
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height {
                    for &v in self.pixel(x, y) {
                        sum += v as f64;
                        n += 1;
                    }
                }
            }
        }
        (sum / n as f64) as f32
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Planar `CxHxW` copy, converted to `T`.
    pub fn to_planar<T: Copy>(&self, out: &mut [T], conv: impl Fn(f32) -> T) {
        let plane = self.width * self.height;
        debug_assert_eq!(out.len(), plane * self.channels);
        for (i, px) in self.data.chunks(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = conv(v);
            }
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let quant = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let p = self.pixel(x as usize, y as usize);
            match self.channels {
                1 => image::Rgb([quant(p[0]); 3]),
                _ => image::Rgb([quant(p[0]), quant(p[1]), quant(p[2])]),
            }
        })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Image {
        let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Image {
            width: img.width() as usize,
            height: img.height() as usize,
            channels: 3,
            data,
        }
    }

    /// Rounds every value to the nearest 8-bit level.
    pub fn quantized(&self) -> Image {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Loads any supported image as RGB, resampled to `size x size` when the
    /// stored dimensions differ.
    pub fn load_rgb(path: &Path, size: Option<usize>) -> Result<Image, RasterError> {
        let mut img = image::open(path)?.to_rgb8();
        if let Some(s) = size {
            if img.width() as usize != s || img.height() as usize != s {
                img = image::imageops::resize(
                    &img,
                    s as u32,
                    s as u32,
                    image::imageops::FilterType::Triangle,
                );
            }
        }
        Ok(Image::from_rgb8(&img))
    }
}

/// Mean absolute difference over pixels where `mask` is true, across all
/// channels. Returns `None` when the mask selects nothing.
pub fn masked_mean_abs_diff(
    a: &Image,
    b: &Image,
    mask: impl Fn(usize, usize) -> bool,
) -> Option<f64> {
    assert_eq!(
        (a.width, a.height, a.channels),
        (b.width, b.height, b.channels)
    );
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for y in 0..a.height {
        for x in 0..a.width {
            if !mask(x, y) {
                continue;
            }
            for (p, q) in a.pixel(x, y).iter().zip(b.pixel(x, y)) {
                sum += (p - q).abs() as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_is_channel_mean() {
        let img = Image::new(1, 1, 3, vec![0.3, 0.6, 0.9]).unwrap();
        assert!((img.to_gray().get(0, 0, 0) - 0.6).abs() < 1e-6);
    }

    #[test]
    fn planar_layout() {
        let img = Image::from_fn(2, 1, 3, |x, _, c| (x * 10 + c) as f32);
        let mut out = vec![0.0f32; 6];
        img.to_planar(&mut out, |v| v);
        assert_eq!(out, vec![0.0, 10.0, 1.0, 11.0, 2.0, 12.0]);
    }

    #[test]
    fn png_round_trip_is_lossless_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_fn(5, 4, 3, |x, y, c| {
            ((x * 31 + y * 17 + c * 7) % 256) as f32 / 255.0
        });
        img.save_png(&path).unwrap();
        let back = Image::load_rgb(&path, None).unwrap();
        assert_eq!(back, img.quantized());
    }
}
