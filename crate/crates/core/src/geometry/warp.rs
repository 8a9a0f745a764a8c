use super::{GeometryError, Homography};
use crate::raster::Image;

/// Resamples `image` under `h` (source → destination) by inverse mapping with
/// bilinear interpolation. Neighbours that fall outside the source take
/// `fill`; the output has the input's dimensions.
pub fn warp(image: &Image, h: &Homography, fill: f32) -> Result<Image, GeometryError> {
    let inv = h.inverse()?.matrix();
    let (w, ht, ch) = (image.width(), image.height(), image.channels());
    let mut out = Image::filled(w, ht, ch, fill);
    let src = image.data();
    let dst = out.data_mut();
    let (wi, hi) = (w as i64, ht as i64);
    for y in 0..ht {
        let yf = y as f64;
        // Homogeneous source coordinates advance linearly along a row.
        let mut nx = inv[0][1] * yf + inv[0][2];
        let mut ny = inv[1][1] * yf + inv[1][2];
        let mut dz = inv[2][1] * yf + inv[2][2];
        for x in 0..w {
            let (sx, sy) = (nx / dz, ny / dz);
            nx += inv[0][0];
            ny += inv[1][0];
            dz += inv[2][0];
            if !(sx.abs() < 1e9 && sy.abs() < 1e9) {
                continue;
            }
            let (x0, y0) = (floor_i64(sx), floor_i64(sy));
            if x0 < -1 || y0 < -1 || x0 >= wi || y0 >= hi {
                continue;
            }
            let fx = (sx - x0 as f64) as f32;
            let fy = (sy - y0 as f64) as f32;
            let wts = [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ];
            let o = (y * w + x) * ch;
            if x0 >= 0 && y0 >= 0 && x0 + 1 < wi && y0 + 1 < hi {
                let a = (y0 as usize * w + x0 as usize) * ch;
                let b = a + w * ch;
                for c in 0..ch {
                    dst[o + c] = wts[0] * src[a + c]
                        + wts[1] * src[a + ch + c]
                        + wts[2] * src[b + c]
                        + wts[3] * src[b + ch + c];
                }
                continue;
            }
            let taps = [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)];
            for c in 0..ch {
                let mut acc = 0.0f32;
                for (&(tx, ty), &wt) in taps.iter().zip(&wts) {
                    let v = if tx >= 0 && ty >= 0 && tx < wi && ty < hi {
                        src[(ty as usize * w + tx as usize) * ch + c]
                    } else {
                        fill
                    };
                    acc += wt * v;
                }
                dst[o + c] = acc;
            }
        }
    }
    Ok(out)
}

/// `floor` without a libm call on targets lacking SSE4.1.
#[inline]
fn floor_i64(v: f64) -> i64 {
    let t = v as i64;
    if (t as f64) > v {
        t - 1
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_homography;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| {
            ((x * 7 + y * 3 + c * 11) % 29) as f32 / 29.0
        })
    }

    #[test]
    fn identity_is_exact() {
        let img = ramp(17, 13);
        assert_eq!(warp(&img, &Homography::IDENTITY, 0.5).unwrap(), img);
    }

    #[test]
    fn integer_translation_shifts_columns() {
        let img = ramp(20, 10);
        let out = warp(&img, &Homography::translation(3.0, 0.0), 0.25).unwrap();
        for y in 0..10 {
            for x in 0..20 {
                for c in 0..3 {
                    let want = if x >= 3 { img.get(x - 3, y, c) } else { 0.25 };
                    assert_eq!(out.get(x, y, c), want);
                }
            }
        }
    }

    #[test]
    fn stays_within_fill_and_input_range() {
        let img = ramp(24, 24);
        let h = rotation_homography(17.0, (11.5, 11.5));
        let fill = 2.0;
        let out = warp(&img, &h, fill).unwrap();
        let (lo, hi) = img.min_max();
        let (olo, ohi) = out.min_max();
        assert!(olo >= lo.min(fill) - 1e-6 && ohi <= hi.max(fill) + 1e-6);
        assert_eq!((out.width(), out.height()), (24, 24));
    }

    #[test]
    fn singular_transform_is_an_error() {
        let m = [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Homography::from_matrix(m).is_err());
    }
}
