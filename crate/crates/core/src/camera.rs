//! Pinhole intrinsics derived from a diagonal field of view.
//!
//! Pixel centres sit at integer coordinates, so a `w`-pixel wide image has its principal
//! point at `(w - 1) / 2`. The camera frame is x right, y down, z forward.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub cu: f64,
    pub cv: f64,
}

impl Intrinsics {
    pub fn from_diagonal_fov(width: usize, height: usize, fov_diagonal_deg: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        if !(fov_diagonal_deg > 0.0 && fov_diagonal_deg < 180.0) {
            return Err(Error::Config(format!(
                "diagonal fov {fov_diagonal_deg} outside (0, 180)"
            )));
        }
        let half_diag = ((width * width + height * height) as f64).sqrt() / 2.0;
        let focal = half_diag / (fov_diagonal_deg.to_radians() / 2.0).tan();
        Ok(Intrinsics {
            width,
            height,
            focal,
            cu: (width as f64 - 1.0) / 2.0,
            cv: (height as f64 - 1.0) / 2.0,
        })
    }

    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if !(p[2] > 0.0) {
            return None;
        }
        Some((
            self.cu + self.focal * p[0] / p[2],
            self.cv + self.focal * p[1] / p[2],
        ))
    }

    /// Back-projects pixel `(u, v)` at z-depth `z`.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> [f64; 3] {
        [
            (u - self.cu) * z / self.focal,
            (v - self.cv) * z / self.focal,
            z,
        ]
    }

    /// Un-normalised ray direction through `(u, v)` with unit z component.
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.cu) / self.focal, (v - self.cv) / self.focal, 1.0]
    }

    /// True when `(u, v)` falls on the image, counting the half-pixel border.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_res_focal_from_sixty_degrees() {
        let k = Intrinsics::from_diagonal_fov(32, 32, 60.0).unwrap();
        assert!((k.focal - 39.191835884530846).abs() < 1e-9);
        assert_eq!((k.cu, k.cv), (15.5, 15.5));
    }

    #[test]
    fn resolutions_share_one_frustum() {
        let lo = Intrinsics::from_diagonal_fov(32, 32, 60.0).unwrap();
        let hi = Intrinsics::from_diagonal_fov(128, 128, 60.0).unwrap();
        let p = [0.31, -0.2, 2.4];
        let (ul, vl) = lo.project(p).unwrap();
        let (uh, vh) = hi.project(p).unwrap();
        assert!(((uh + 0.5) / 4.0 - 0.5 - ul).abs() < 1e-9);
        assert!(((vh + 0.5) / 4.0 - 0.5 - vl).abs() < 1e-9);
    }

    #[test]
    fn project_back_project_round_trip() {
        let k = Intrinsics::from_diagonal_fov(32, 32, 60.0).unwrap();
        let p = k.back_project(23.5, 15.5, 1.0);
        assert!((p[0] - 0.2041).abs() < 1e-4);
        assert_eq!(p[1], 0.0);
        let (u, v) = k.project(p).unwrap();
        assert!((u - 23.5).abs() < 1e-12 && (v - 15.5).abs() < 1e-12);
        assert!(k.project([0.0, 0.0, -1.0]).is_none());
    }
}
