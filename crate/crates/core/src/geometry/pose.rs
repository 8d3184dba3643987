use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

/// Tolerance for the rotation-block invariants of [`Se3`].
pub const SE3_TOLERANCE: f64 = 1e-9;

/// Six-parameter rigid motion: translation in scene units plus Euler angles
/// in radians.
///
/// The rotation is `Rz(rz) * Ry(ry) * Rx(rx)` acting on column vectors. As
/// produced by the pose network, a `PoseVec6` maps points from the target
/// camera frame into a source camera frame (`T_{t->s}`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseVec6 {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl PoseVec6 {
    pub const fn new(tx: f64, ty: f64, tz: f64, rx: f64, ry: f64, rz: f64) -> Self {
        Self {
            tx,
            ty,
            tz,
            rx,
            ry,
            rz,
        }
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.tx, self.ty, self.tz, self.rx, self.ry, self.rz]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn to_matrix(&self) -> Se3 {
        pose_vec_to_matrix(self)
    }

    /// Inverse of [`pose_vec_to_matrix`]; angles come back in the principal
    /// branch (`ry` in `[-pi/2, pi/2]`).
    pub fn from_matrix(t: &Se3) -> Self {
        let r = t.rotation();
        let tr = t.translation();
        let ry = (-r[2][0]).clamp(-1.0, 1.0).asin();
        let (rx, rz) = if r[2][0].abs() < 1.0 - 1e-12 {
            (r[2][1].atan2(r[2][2]), r[1][0].atan2(r[0][0]))
        } else {
            // gimbal lock: fold everything into rx
            ((-r[1][2]).atan2(r[1][1]), 0.0)
        };
        Self::new(tr[0], tr[1], tr[2], rx, ry, rz)
    }
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn d_rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]]
}

fn d_rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]]
}

fn d_rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]]
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat3_transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat3_vec(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn mat3_det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// `Rz(rz) * Ry(ry) * Rx(rx)`.
pub fn euler_rotation(rx: f64, ry: f64, rz: f64) -> Mat3 {
    mat3_mul(&rot_z(rz), &mat3_mul(&rot_y(ry), &rot_x(rx)))
}

/// Partial derivatives of [`euler_rotation`] w.r.t. `rx`, `ry`, `rz`.
pub(crate) fn euler_rotation_jacobian(rx: f64, ry: f64, rz: f64) -> [Mat3; 3] {
    let (x, y, z) = (rot_x(rx), rot_y(ry), rot_z(rz));
    [
        mat3_mul(&z, &mat3_mul(&y, &d_rot_x(rx))),
        mat3_mul(&z, &mat3_mul(&d_rot_y(ry), &x)),
        mat3_mul(&d_rot_z(rz), &mat3_mul(&y, &x)),
    ]
}

pub fn pose_vec_to_matrix(p: &PoseVec6) -> Se3 {
    Se3::from_parts(euler_rotation(p.rx, p.ry, p.rz), [p.tx, p.ty, p.tz])
}

/// Rigid transform as a 4x4 homogeneous matrix with bottom row `[0, 0, 0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Se3 {
    m: [[f64; 4]; 4],
}

impl Default for Se3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Se3 {
    pub fn identity() -> Self {
        Self::from_parts(
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
        )
    }

    pub fn translation_only(t: [f64; 3]) -> Self {
        Self::from_parts(Self::identity().rotation(), t)
    }

    fn from_parts(r: Mat3, t: [f64; 3]) -> Self {
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            m[i][..3].copy_from_slice(&r[i]);
            m[i][3] = t[i];
        }
        m[3][3] = 1.0;
        Self { m }
    }

    /// Builds from a rotation and translation, checking the rotation.
    pub fn from_rotation_translation(r: Mat3, t: [f64; 3]) -> Result<Self> {
        let s = Self::from_parts(r, t);
        s.validate(SE3_TOLERANCE)?;
        Ok(s)
    }

    pub fn from_matrix(m: [[f64; 4]; 4]) -> Result<Self> {
        let s = Self { m };
        s.validate(SE3_TOLERANCE)?;
        Ok(s)
    }

    /// Parses a row-major 3x4 `[R | t]`. Rotations within `tolerance` of
    /// orthonormal are projected onto the nearest rotation, which absorbs the
    /// rounding of text pose files.
    pub fn from_row_major_3x4(v: &[f64; 12], tolerance: f64) -> Result<Self> {
        let r = [[v[0], v[1], v[2]], [v[4], v[5], v[6]], [v[8], v[9], v[10]]];
        let raw = Self::from_parts(r, [v[3], v[7], v[11]]);
        raw.validate(tolerance)?;
        Ok(Self::from_parts(orthonormalize(&r), raw.translation()))
    }

    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for i in 0..3 {
            out[i * 4..i * 4 + 4].copy_from_slice(&self.m[i]);
        }
        out
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.m
    }

    pub fn rotation(&self) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            r[i].copy_from_slice(&self.m[i][..3]);
        }
        r
    }

    pub fn translation(&self) -> [f64; 3] {
        [self.m[0][3], self.m[1][3], self.m[2][3]]
    }

    /// Checks the bottom row, `R^T R = I` and `det R = +1` within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("SE(3) matrix has non-finite entries".into()));
        }
        if self.m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Numeric(format!(
                "SE(3) bottom row must be [0, 0, 0, 1], got {:?}",
                self.m[3]
            )));
        }
        let r = self.rotation();
        let rtr = mat3_mul(&mat3_transpose(&r), &r);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (rtr[i][j] - expect).abs() > tol {
                    return Err(Error::Numeric(format!(
                        "rotation block is not orthonormal (R^T R [{i}][{j}] = {})",
                        rtr[i][j]
                    )));
                }
            }
        }
        let det = mat3_det(&r);
        if (det - 1.0).abs() > tol {
            return Err(Error::Numeric(format!("rotation determinant {det} != 1")));
        }
        Ok(())
    }

    /// `self * other`.
    pub fn compose(&self, other: &Se3) -> Se3 {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..4).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        m[3] = [0.0, 0.0, 0.0, 1.0];
        Se3 { m }
    }

    /// Closed form `[R^T | -R^T t]`.
    pub fn invert(&self) -> Se3 {
        let rt = mat3_transpose(&self.rotation());
        let t = mat3_vec(&rt, self.translation());
        Self::from_parts(rt, [-t[0], -t[1], -t[2]])
    }

    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let r = mat3_vec(&self.rotation(), p);
        let t = self.translation();
        [r[0] + t[0], r[1] + t[1], r[2] + t[2]]
    }

    /// Unit quaternion `[w, x, y, z]` with `w >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let r = self.rotation();
        let trace = r[0][0] + r[1][1] + r[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            [
                0.25 * s,
                (r[2][1] - r[1][2]) / s,
                (r[0][2] - r[2][0]) / s,
                (r[1][0] - r[0][1]) / s,
            ]
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
            [
                (r[2][1] - r[1][2]) / s,
                0.25 * s,
                (r[0][1] + r[1][0]) / s,
                (r[0][2] + r[2][0]) / s,
            ]
        } else if r[1][1] > r[2][2] {
            let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
            [
                (r[0][2] - r[2][0]) / s,
                (r[0][1] + r[1][0]) / s,
                0.25 * s,
                (r[1][2] + r[2][1]) / s,
            ]
        } else {
            let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
            [
                (r[1][0] - r[0][1]) / s,
                (r[0][2] + r[2][0]) / s,
                (r[1][2] + r[2][1]) / s,
                0.25 * s,
            ]
        };
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
        q.map(|v| sign * v / norm)
    }

    /// Largest absolute entry difference to `other`.
    pub fn max_abs_diff(&self, other: &Se3) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Nearest rotation by Newton iteration on the polar decomposition.
fn orthonormalize(r: &Mat3) -> Mat3 {
    let mut x = *r;
    for _ in 0..30 {
        let inv_t = mat3_transpose(&mat3_inverse(&x));
        let mut next = [[0.0; 3]; 3];
        let mut delta: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                next[i][j] = 0.5 * (x[i][j] + inv_t[i][j]);
                delta = delta.max((next[i][j] - x[i][j]).abs());
            }
        }
        x = next;
        if delta < 1e-16 {
            break;
        }
    }
    x
}

fn mat3_inverse(a: &Mat3) -> Mat3 {
    let det = mat3_det(a);
    let c = |i: usize, j: usize| {
        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
        let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
        a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]
    };
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = c(j, i) / det;
        }
    }
    out
}
