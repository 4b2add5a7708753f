//! Angular geometry: gaze directions, great-circle distances, and
//! head ⊕ eye rotation composition.
//!
//! Directions are expressed as azimuth/elevation pairs in degrees. The
//! underlying 3D convention is a right-handed frame with `+z` forward,
//! `+x` right and `+y` up; an orientation `(az, el)` is the rotation
//! `yaw(az) · pitch(el)` applied to `+z`, so azimuth is positive to the
//! right and elevation positive upward.

use serde::{Deserialize, Serialize};

/// A direction in visual-angle coordinates.
///
/// `azimuth` in [-180, 180] (positive right), `elevation` in [-90, 90]
/// (positive up), both in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularPos {
    pub azimuth: f64,
    pub elevation: f64,
}

impl AngularPos {
    pub const CENTER: AngularPos = AngularPos {
        azimuth: 0.0,
        elevation: 0.0,
    };

    pub fn new(azimuth: f64, elevation: f64) -> Self {
        AngularPos { azimuth, elevation }
    }

    /// Unit direction vector for this orientation.
    pub fn direction(&self) -> [f64; 3] {
        let az = self.azimuth.to_radians();
        let el = self.elevation.to_radians();
        [el.cos() * az.sin(), el.sin(), el.cos() * az.cos()]
    }

    /// Recovers azimuth/elevation from a unit direction vector.
    pub fn from_direction(d: [f64; 3]) -> Self {
        AngularPos {
            azimuth: d[0].atan2(d[2]).to_degrees(),
            elevation: d[1].clamp(-1.0, 1.0).asin().to_degrees(),
        }
    }

    /// Rotation matrix `yaw(azimuth) · pitch(elevation)` mapping the local
    /// frame into the parent frame. Column-major-free: `m[row][col]`.
    pub fn rotation(&self) -> Rotation {
        Rotation::yaw_pitch(self.azimuth, self.elevation)
    }
}

/// 3x3 rotation matrix, `m[row][col]`.
#[derive(Debug, Clone, Copy)]
pub struct Rotation(pub [[f64; 3]; 3]);

impl Rotation {
    pub const IDENTITY: Rotation = Rotation([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// yaw about +y by `az` degrees, then pitch so that positive `el`
    /// tilts the forward axis toward +y.
    pub fn yaw_pitch(az: f64, el: f64) -> Self {
        let (sa, ca) = az.to_radians().sin_cos();
        let (se, ce) = el.to_radians().sin_cos();
        // R_y(az) * R_x(-el)
        Rotation([
            [ca, -sa * se, sa * ce],
            [0.0, ce, se],
            [-sa, -ca * se, ca * ce],
        ])
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Applies the inverse rotation (transpose).
    pub fn apply_inv(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        let a = &self.0;
        let b = &other.0;
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Rotation(m)
    }
}

/// Great-circle angle between two directions, in degrees. Symmetric,
/// zero iff the directions coincide, and bounded by 180.
pub fn angular_distance(a: AngularPos, b: AngularPos) -> f64 {
    let da = a.direction();
    let db = b.direction();
    let dot = da[0] * db[0] + da[1] * db[1] + da[2] * db[2];
    let cross = [
        da[1] * db[2] - da[2] * db[1],
        da[2] * db[0] - da[0] * db[2],
        da[0] * db[1] - da[1] * db[0],
    ];
    let cross_norm = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    // atan2 keeps full precision for near-parallel directions, where
    // acos(dot) loses ~sqrt(eps)
    cross_norm.atan2(dot).to_degrees()
}

/// World-frame gaze direction: head orientation composed with the
/// eye-in-head rotation. Restricted to elevation 0 this reduces to plain
/// azimuth addition.
pub fn combine_gaze(head: AngularPos, eye: AngularPos) -> AngularPos {
    let d = head.rotation().apply(eye.direction());
    AngularPos::from_direction(d)
}

/// Full combined rotation `head · eye`, used when a local frame (and not
/// just the forward direction) is needed, e.g. for mask meridian lookups.
pub fn combined_rotation(head: AngularPos, eye: AngularPos) -> Rotation {
    head.rotation().compose(&eye.rotation())
}

/// Decomposes `point` into (eccentricity, meridian) relative to the local
/// frame `center`: eccentricity is the great-circle angle from the frame's
/// forward axis, meridian the polar angle of the offset (0° = right,
/// 90° = up), both in degrees.
pub fn local_polar(center: &Rotation, point: AngularPos) -> (f64, f64) {
    let q = center.apply_inv(point.direction());
    let ecc = q[2].clamp(-1.0, 1.0).acos().to_degrees();
    let meridian = q[1].atan2(q[0]).to_degrees();
    (ecc, meridian)
}

/// Inverse of [`local_polar`]: the direction at `ecc` degrees from the
/// frame's forward axis along meridian `theta`.
pub fn from_local_polar(center: &Rotation, ecc: f64, meridian: f64) -> AngularPos {
    let e = ecc.to_radians();
    let th = meridian.to_radians();
    let local = [e.sin() * th.cos(), e.sin() * th.sin(), e.cos()];
    AngularPos::from_direction(center.apply(local))
}

/// Wraps an azimuth-like angle into (-180, 180].
pub fn wrap_degrees(mut a: f64) -> f64 {
    while a > 180.0 {
        a -= 360.0;
    }
    while a <= -180.0 {
        a += 360.0;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    // Independent oracle: the spherical law of cosines, evaluated directly.
    fn law_of_cosines(a: AngularPos, b: AngularPos) -> f64 {
        let (e1, e2) = (a.elevation.to_radians(), b.elevation.to_radians());
        let daz = (a.azimuth - b.azimuth).to_radians();
        (e1.sin() * e2.sin() + e1.cos() * e2.cos() * daz.cos())
            .clamp(-1.0, 1.0)
            .acos()
            .to_degrees()
    }

    #[test]
    fn distance_identity() {
        assert_eq!(angular_distance(AngularPos::CENTER, AngularPos::CENTER), 0.0);
    }

    #[test]
    fn distance_same_meridian_arc() {
        let d = angular_distance(AngularPos::new(10.0, 0.0), AngularPos::new(-10.0, 0.0));
        assert_abs_diff_eq!(d, 20.0, epsilon = 1e-9);
    }

    #[test]
    fn distance_matches_law_of_cosines() {
        let a = AngularPos::new(30.0, 40.0);
        let b = AngularPos::CENTER;
        let expect = law_of_cosines(a, b);
        assert_abs_diff_eq!(expect, 48.4392374298, epsilon = 1e-6);
        assert_abs_diff_eq!(angular_distance(a, b), expect, epsilon = 1e-9);
    }

    #[test]
    fn combine_identity_and_one_axis() {
        let g = combine_gaze(AngularPos::CENTER, AngularPos::CENTER);
        assert_abs_diff_eq!(g.azimuth, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.elevation, 0.0, epsilon = 1e-12);

        let g = combine_gaze(AngularPos::new(20.0, 0.0), AngularPos::new(5.0, 0.0));
        assert_abs_diff_eq!(g.azimuth, 25.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g.elevation, 0.0, epsilon = 1e-9);
    }

    // Oracle for the full 3D composition: nalgebra rotation algebra,
    // built from axis-angle primitives rather than our matrix code.
    fn nalgebra_combine(head: AngularPos, eye: AngularPos) -> AngularPos {
        use nalgebra::{Rotation3, Vector3};
        let rot = |p: AngularPos| {
            Rotation3::from_axis_angle(&Vector3::y_axis(), p.azimuth.to_radians())
                * Rotation3::from_axis_angle(&Vector3::x_axis(), -p.elevation.to_radians())
        };
        let d = rot(head) * rot(eye) * Vector3::new(0.0, 0.0, 1.0);
        AngularPos::from_direction([d.x, d.y, d.z])
    }

    #[test]
    fn combine_matches_rotation_oracle() {
        let head = AngularPos::new(20.0, 10.0);
        let eye = AngularPos::new(5.0, -3.0);
        let got = combine_gaze(head, eye);
        let expect = nalgebra_combine(head, eye);
        assert_abs_diff_eq!(got.azimuth, expect.azimuth, epsilon = 1e-9);
        assert_abs_diff_eq!(got.elevation, expect.elevation, epsilon = 1e-9);
        // frozen from the oracle
        assert_abs_diff_eq!(got.azimuth, 25.0303135354, epsilon = 1e-6);
        assert_abs_diff_eq!(got.elevation, 6.9619093850, epsilon = 1e-6);
    }

    #[test]
    fn local_polar_round_trip() {
        let frame = combined_rotation(AngularPos::new(12.0, -7.0), AngularPos::new(3.0, 2.0));
        for &(ecc, mer) in &[(0.5, 10.0), (10.0, 90.0), (30.0, -135.0), (44.0, 180.0)] {
            let p = from_local_polar(&frame, ecc, mer);
            let (e2, m2) = local_polar(&frame, p);
            assert_abs_diff_eq!(e2, ecc, epsilon = 1e-9);
            assert_abs_diff_eq!(wrap_degrees(m2 - mer), 0.0, epsilon = 1e-7);
        }
    }

    fn arb_pos() -> impl Strategy<Value = AngularPos> {
        (-179.0..179.0f64, -89.0..89.0f64).prop_map(|(az, el)| AngularPos::new(az, el))
    }

    proptest! {
        #[test]
        fn metric_axioms((a, b, c) in (arb_pos(), arb_pos(), arb_pos())) {
            let dab = angular_distance(a, b);
            let dba = angular_distance(b, a);
            prop_assert!((dab - dba).abs() < 1e-9);
            prop_assert!((0.0..=180.0).contains(&dab));
            prop_assert!(angular_distance(a, a) < 1e-9);
            let dac = angular_distance(a, c);
            let dcb = angular_distance(c, b);
            prop_assert!(dab <= dac + dcb + 1e-9);
        }

        #[test]
        fn combine_on_azimuth_axis_is_addition(h in -90.0..90.0f64, e in -60.0..60.0f64) {
            let g = combine_gaze(AngularPos::new(h, 0.0), AngularPos::new(e, 0.0));
            prop_assert!((wrap_degrees(g.azimuth - (h + e))).abs() < 1e-9);
            prop_assert!(g.elevation.abs() < 1e-9);
        }

        #[test]
        fn combine_matches_oracle_everywhere(h in arb_pos(), e in arb_pos()) {
            let got = combine_gaze(h, e);
            let expect = nalgebra_combine(h, e);
            prop_assert!(angular_distance(got, expect) < 1e-8);
        }
    }
}
