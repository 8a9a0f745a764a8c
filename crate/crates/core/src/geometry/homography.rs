use nalgebra::Matrix3;

use super::GeometryError;

/// 3x3 projective transform acting on pixel coordinates `(x, y, 1)`.
///
/// Stored normalized so that `m[2][2] == 1` whenever `m[2][2] != 0`.
/// Affine maps are the special case with bottom row `(0, 0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

const SINGULAR_DET: f64 = 1e-12;

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let mut m = m;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let s = m[2][2];
        if s != 0.0 && s != 1.0 {
            for row in &mut m {
                for v in row {
                    *v /= s;
                }
            }
        }
        let h = Self { m };
        let det = h.det();
        if det.abs() <= SINGULAR_DET {
            return Err(GeometryError::Singular(det));
        }
        Ok(h)
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn scaling(sx: f64, sy: f64) -> Result<Self, GeometryError> {
        Self::from_matrix([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Maps a point. Points on the line at infinity come back non-finite.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        (
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        )
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn after(&self, first: &Homography) -> Homography {
        let a = to_na(&self.m);
        let b = to_na(&first.m);
        let mut h = Homography {
            m: from_na(&(a * b)),
        };
        h.normalize();
        h
    }

    pub fn inverse(&self) -> Result<Homography, GeometryError> {
        let inv = to_na(&self.m)
            .try_inverse()
            .ok_or(GeometryError::Singular(self.det()))?;
        Homography::from_matrix(from_na(&inv))
    }

    /// Bottom row is `(0, 0, 1)` within `tol`.
    pub fn is_affine(&self, tol: f64) -> bool {
        self.m[2][0].abs() <= tol && self.m[2][1].abs() <= tol && (self.m[2][2] - 1.0).abs() <= tol
    }

    pub fn frobenius_distance(&self, other: &Homography) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn normalize(&mut self) {
        let s = self.m[2][2];
        if s != 0.0 && s != 1.0 {
            for row in &mut self.m {
                for v in row {
                    *v /= s;
                }
            }
        }
    }
}

fn to_na(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(
        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
    )
}

fn from_na(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

/// `h1 ∘ h2`: applies `h2` first, then `h1`.
pub fn compose(h1: &Homography, h2: &Homography) -> Homography {
    h1.after(h2)
}

pub fn invert(h: &Homography) -> Result<Homography, GeometryError> {
    h.inverse()
}

/// Rotation by `theta_deg` about `center`.
///
/// Uses the standard rotation matrix on pixel coordinates: positive angles
/// carry `+x` toward `+y`. With image rows growing downward this reads as
/// clockwise on screen; it is the counterclockwise sense of a y-up frame.
pub fn rotation_homography(theta_deg: f64, center: (f64, f64)) -> Homography {
    let (s, c) = theta_deg.to_radians().sin_cos();
    let (cx, cy) = center;
    Homography {
        m: [
            [c, -s, cx - c * cx + s * cy],
            [s, c, cy - s * cx - c * cy],
            [0.0, 0.0, 1.0],
        ],
    }
}

/// Keystone warp of a `width x height` frame.
///
/// Rows 0 and `height - 1` stay fixed and the frame's width about the centre
/// column is rescaled so that `(w_bottom - w_top) / w_top == ratio_y`, with
/// the mean of the two widths preserved. `ratio_x` does the same for the
/// right/left column heights. Horizontal lines stay horizontal under the
/// y-warp, vertical lines stay vertical under the x-warp; the x-warp is
/// applied after the y-warp.
pub fn perspective_homography(
    ratio_y: f64,
    ratio_x: f64,
    width: usize,
    height: usize,
) -> Result<Homography, GeometryError> {
    for r in [ratio_y, ratio_x] {
        if !r.is_finite() || r.abs() >= 1.0 {
            return Err(GeometryError::DegenerateRatio(r));
        }
    }
    if width < 2 || height < 2 {
        return Err(GeometryError::DegenerateFrame { width, height });
    }
    let y_span = (height - 1) as f64;
    let x_span = (width - 1) as f64;
    let cx = x_span / 2.0;
    let cy = y_span / 2.0;

    let hy = {
        let (near, far) = keystone_scales(ratio_y);
        let g = (near / far - 1.0) / y_span;
        let b = near / far;
        Homography::from_matrix([
            [near, cx * g, cx * (1.0 - near)],
            [0.0, b, 0.0],
            [0.0, g, 1.0],
        ])?
    };
    let hx = {
        let (near, far) = keystone_scales(ratio_x);
        let g = (near / far - 1.0) / x_span;
        let b = near / far;
        Homography::from_matrix([
            [b, 0.0, 0.0],
            [cy * g, near, cy * (1.0 - near)],
            [g, 0.0, 1.0],
        ])?
    };
    Ok(hx.after(&hy))
}

/// Scales `(s0, s1)` with `s1 / s0 = 1 + r` and `(s0 + s1) / 2 = 1`.
fn keystone_scales(r: f64) -> (f64, f64) {
    (2.0 / (2.0 + r), 2.0 * (1.0 + r) / (2.0 + r))
}
