//! Pinhole cameras, two-view triangulation, constant-velocity filtering and
//! distance queries.
//!
//! World frame: z up, y toward the human, origin at the robot base, all
//! lengths in millimetres.

use nalgebra::{Matrix2, Matrix3, Matrix3x4, Matrix6, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A world-frame point or direction in millimetres.
pub type Point3 = Vector3<f64>;

/// Pixel coordinates `(u, v)`.
pub type Pixel = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("homogeneous depth {0:e} too close to zero")]
    DegenerateProjection(f64),
    #[error("back-projected rays are parallel")]
    ParallelRays,
    #[error("triangulated point lies behind camera {0}")]
    BehindCamera(usize),
    #[error("camera matrix has a singular left 3x3 block")]
    SingularCamera,
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("measurement is not finite")]
    NonFiniteMeasurement,
}

/// Threshold below which the homogeneous depth is treated as zero.
const MIN_DEPTH: f64 = 1e-9;
/// Minimum angle between two rays for a triangulation to be attempted.
const MIN_RAY_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraProjection {
    matrix: Matrix3x4<f64>,
    width: u32,
    height: u32,
    rays: RayCache,
}

#[derive(Debug, Clone, PartialEq)]
struct RayCache {
    m_inv: Matrix3<f64>,
    centre: Point3,
    det_sign: f64,
}

impl CameraProjection {
    pub fn new(matrix: Matrix3x4<f64>, width: u32, height: u32) -> Result<Self, GeomError> {
        if width == 0 || height == 0 {
            return Err(GeomError::EmptyImage);
        }
        let m = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let det = m.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(GeomError::SingularCamera);
        }
        let m_inv = m.try_inverse().ok_or(GeomError::SingularCamera)?;
        let centre = -(m_inv * matrix.column(3));
        Ok(Self {
            matrix,
            width,
            height,
            rays: RayCache {
                m_inv,
                centre,
                det_sign: det.signum(),
            },
        })
    }

    /// Camera at `eye` looking at `target` with focal length `focal` pixels
    /// and the principal point at the image centre.
    pub fn look_at(
        eye: Point3,
        target: Point3,
        up: Point3,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeomError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(GeomError::SingularCamera);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let k = Matrix3::new(
            focal,
            0.0,
            width as f64 / 2.0,
            0.0,
            focal,
            height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        let t = -(rot * eye);
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        rt.set_column(3, &t);
        Self::new(k * rt, width, height)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.matrix
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Camera centre in world coordinates.
    pub fn centre(&self) -> Point3 {
        self.rays.centre
    }

    /// Signed depth of `p`: positive in front of the camera.
    pub fn depth(&self, p: &Point3) -> f64 {
        let w = self
            .matrix
            .row(2)
            .dot(&Vector4::new(p.x, p.y, p.z, 1.0).transpose());
        w * self.rays.det_sign
    }

    pub fn project(&self, p: &Point3) -> Result<Pixel, GeomError> {
        let h = self.matrix * Vector4::new(p.x, p.y, p.z, 1.0);
        if h.z.abs() < MIN_DEPTH {
            return Err(GeomError::DegenerateProjection(h.z));
        }
        Ok(Pixel::new(h.x / h.z, h.y / h.z))
    }

    /// Unit direction of the ray through `pixel`, pointing into the scene.
    pub fn back_project(&self, pixel: &Pixel) -> Point3 {
        let c = &self.rays;
        (c.m_inv * Vector3::new(pixel.x, pixel.y, 1.0) * c.det_sign).normalize()
    }

    pub fn contains(&self, pixel: &Pixel) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }
}

/// Midpoint of the shortest segment between the two back-projected rays.
pub fn triangulate(
    cam_a: &CameraProjection,
    pixel_a: &Pixel,
    cam_b: &CameraProjection,
    pixel_b: &Pixel,
) -> Result<Point3, GeomError> {
    let oa = cam_a.centre();
    let ob = cam_b.centre();
    let da = cam_a.back_project(pixel_a);
    let db = cam_b.back_project(pixel_b);
    let cross = da.cross(&db);
    let angle = cross.norm().atan2(da.dot(&db));
    if angle.abs() < MIN_RAY_ANGLE || (std::f64::consts::PI - angle).abs() < MIN_RAY_ANGLE {
        return Err(GeomError::ParallelRays);
    }
    // Solve for ray parameters s, t minimising |oa + s da - ob - t db|.
    let w0 = oa - ob;
    let b = da.dot(&db);
    let d = da.dot(&w0);
    let e = db.dot(&w0);
    let denom = 1.0 - b * b;
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    let mid = 0.5 * ((oa + da * s) + (ob + db * t));
    if cam_a.depth(&mid) <= 0.0 {
        return Err(GeomError::BehindCamera(0));
    }
    if cam_b.depth(&mid) <= 0.0 {
        return Err(GeomError::BehindCamera(1));
    }
    Ok(mid)
}

/// Euclidean distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: &Point3, a: &Point3, b: &Point3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Position, velocity and 6×6 covariance ordered `[x y z vx vy vz]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    pub position: Point3,
    pub velocity: Point3,
    pub covariance: Matrix6<f64>,
}

/// Noise settings for one filter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanNoise {
    /// Process-noise spectral density of the white acceleration (mm²/s³).
    pub q: f64,
    /// Measurement variance per axis (mm²).
    pub r: f64,
}

impl KalmanState {
    /// State resting at `position` with the given per-axis variances.
    pub fn at(position: Point3, position_var: f64, velocity_var: f64) -> Self {
        let mut covariance = Matrix6::zeros();
        for i in 0..3 {
            covariance[(i, i)] = position_var;
            covariance[(i + 3, i + 3)] = velocity_var;
        }
        Self {
            position,
            velocity: Point3::zeros(),
            covariance,
        }
    }

    fn axis_cov(&self, i: usize) -> Matrix2<f64> {
        let c = &self.covariance;
        Matrix2::new(c[(i, i)], c[(i, i + 3)], c[(i + 3, i)], c[(i + 3, i + 3)])
    }

    fn set_axis_cov(&mut self, i: usize, p: &Matrix2<f64>) {
        // Symmetrise so round-off never breaks the invariant.
        let off = 0.5 * (p[(0, 1)] + p[(1, 0)]);
        self.covariance[(i, i)] = p[(0, 0)];
        self.covariance[(i, i + 3)] = off;
        self.covariance[(i + 3, i)] = off;
        self.covariance[(i + 3, i + 3)] = p[(1, 1)];
    }

    /// Constant-velocity prediction over `dt` seconds.
    pub fn predict(&self, dt: f64, q: f64) -> Self {
        let f = Matrix2::new(1.0, dt, 0.0, 1.0);
        let qm = Matrix2::new(
            q * dt.powi(3) / 3.0,
            q * dt * dt / 2.0,
            q * dt * dt / 2.0,
            q * dt,
        );
        let mut out = self.clone();
        out.position += self.velocity * dt;
        for i in 0..3 {
            let p = f * self.axis_cov(i) * f.transpose() + qm;
            out.set_axis_cov(i, &p);
        }
        out
    }

    fn update(&self, m: &Point3, r: f64) -> Self {
        let mut out = self.clone();
        for i in 0..3 {
            let p = self.axis_cov(i);
            let innovation = m[i] - self.position[i];
            let s = p[(0, 0)] + r;
            if r == 0.0 {
                // Exact measurement: pin the position, condition the velocity.
                out.position[i] = m[i];
                let (vel_gain, vv) = if p[(0, 0)] > 0.0 {
                    let g = p[(1, 0)] / p[(0, 0)];
                    (g, (p[(1, 1)] - g * p[(0, 1)]).max(0.0))
                } else {
                    (0.0, p[(1, 1)])
                };
                out.velocity[i] = self.velocity[i] + vel_gain * innovation;
                out.set_axis_cov(i, &Matrix2::new(0.0, 0.0, 0.0, vv));
                continue;
            }
            if s <= 0.0 {
                continue;
            }
            let k = Vector2::new(p[(0, 0)] / s, p[(1, 0)] / s);
            out.position[i] = self.position[i] + k.x * innovation;
            out.velocity[i] = self.velocity[i] + k.y * innovation;
            // Joseph form keeps the covariance PSD under round-off.
            let ikh = Matrix2::new(1.0 - k.x, 0.0, -k.y, 1.0);
            let p_new = ikh * p * ikh.transpose() + k * k.transpose() * r;
            out.set_axis_cov(i, &p_new);
        }
        out
    }

    /// Predict by `dt`, then fuse `measurement`.
    pub fn step(
        &self,
        measurement: &Point3,
        dt: f64,
        noise: KalmanNoise,
    ) -> Result<Self, GeomError> {
        if !measurement.iter().all(|v| v.is_finite()) {
            return Err(GeomError::NonFiniteMeasurement);
        }
        Ok(self.predict(dt, noise.q).update(measurement, noise.r))
    }
}

/// One filter step; see [`KalmanState::step`].
pub fn kalman_step(
    state: &KalmanState,
    measurement: &Point3,
    dt: f64,
    noise: KalmanNoise,
) -> Result<KalmanState, GeomError> {
    state.step(measurement, dt, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn identity_cam() -> CameraProjection {
        CameraProjection::new(Matrix3x4::identity(), 640, 480).unwrap()
    }

    fn orthogonal_pair() -> (CameraProjection, CameraProjection) {
        let target = Point3::new(0.0, 0.0, 300.0);
        let up = Point3::z();
        let a =
            CameraProjection::look_at(Point3::new(0.0, -800.0, 300.0), target, up, 700.0, 640, 480)
                .unwrap();
        let b =
            CameraProjection::look_at(Point3::new(800.0, 0.0, 300.0), target, up, 700.0, 640, 480)
                .unwrap();
        (a, b)
    }

    #[test]
    fn project_identity_camera() {
        let cam = identity_cam();
        let px = cam.project(&Point3::new(0.0, 0.0, 1000.0)).unwrap();
        assert_eq!(px, Pixel::new(0.0, 0.0));
        let px = cam.project(&Point3::new(100.0, 50.0, 1000.0)).unwrap();
        assert_relative_eq!(px.x, 0.1, epsilon = 1e-15);
        assert_relative_eq!(px.y, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn project_on_focal_plane_is_degenerate() {
        let cam = identity_cam();
        assert!(matches!(
            cam.project(&Point3::new(1.0, 2.0, 0.0)),
            Err(GeomError::DegenerateProjection(_))
        ));
    }

    #[test]
    fn singular_camera_rejected() {
        let mut m = Matrix3x4::identity();
        m[(2, 2)] = 0.0;
        assert_eq!(
            CameraProjection::new(m, 10, 10),
            Err(GeomError::SingularCamera)
        );
        assert_eq!(
            CameraProjection::new(Matrix3x4::identity(), 0, 10),
            Err(GeomError::EmptyImage)
        );
    }

    #[test]
    fn triangulate_orthogonal_round_trip() {
        let (a, b) = orthogonal_pair();
        let p = Point3::new(10.0, 20.0, 300.0);
        let q = triangulate(&a, &a.project(&p).unwrap(), &b, &b.project(&p).unwrap()).unwrap();
        assert!((q - p).norm() < 1e-6, "{q:?}");
    }

    #[test]
    fn triangulate_same_camera_is_parallel() {
        let (a, _) = orthogonal_pair();
        let px = a.project(&Point3::new(0.0, 0.0, 300.0)).unwrap();
        assert_eq!(triangulate(&a, &px, &a, &px), Err(GeomError::ParallelRays));
    }

    #[test]
    fn triangulate_behind_camera() {
        // Two cameras facing away from each other: rays meet behind both.
        let up = Point3::z();
        let a = CameraProjection::look_at(
            Point3::new(-100.0, 0.0, 0.0),
            Point3::new(-200.0, 100.0, 0.0),
            up,
            500.0,
            640,
            480,
        )
        .unwrap();
        let b = CameraProjection::look_at(
            Point3::new(100.0, 0.0, 0.0),
            Point3::new(200.0, 100.0, 0.0),
            up,
            500.0,
            640,
            480,
        )
        .unwrap();
        let pa = a.project(&Point3::new(-300.0, 200.0, 0.0)).unwrap();
        let pb = b.project(&Point3::new(300.0, 200.0, 0.0)).unwrap();
        assert!(matches!(
            triangulate(&a, &pa, &b, &pb),
            Err(GeomError::BehindCamera(_))
        ));
    }

    /// Grid search over world points minimising the summed squared reprojection error.
    fn grid_search_triangulation(
        a: &CameraProjection,
        pa: &Pixel,
        b: &CameraProjection,
        pb: &Pixel,
        seed: Point3,
    ) -> Point3 {
        let cost = |p: &Point3| {
            (a.project(p).unwrap() - pa).norm_squared()
                + (b.project(p).unwrap() - pb).norm_squared()
        };
        let mut best = seed;
        let mut step = 4.0;
        while step > 1e-3 {
            let mut improved = true;
            while improved {
                improved = false;
                for dx in -2..=2 {
                    for dy in -2..=2 {
                        for dz in -2..=2 {
                            let cand = best + Point3::new(dx as f64, dy as f64, dz as f64) * step;
                            if cost(&cand) < cost(&best) {
                                best = cand;
                                improved = true;
                            }
                        }
                    }
                }
            }
            step /= 2.0;
        }
        best
    }

    #[test]
    fn noisy_pixels_agree_with_reprojection_grid_search() {
        let (a, b) = orthogonal_pair();
        let p = Point3::new(10.0, 20.0, 300.0);
        let pa = a.project(&p).unwrap() + Pixel::new(1.0, 1.0);
        let pb = b.project(&p).unwrap() + Pixel::new(1.0, 1.0);
        let mid = triangulate(&a, &pa, &b, &pb).unwrap();
        let oracle = grid_search_triangulation(&a, &pa, &b, &pb, p);
        assert!((mid - oracle).norm() < 0.5, "mid {mid:?} oracle {oracle:?}");
        // One pixel at ~800 mm with f=700 moves the point by roughly a millimetre.
        assert!((mid - p).norm() < 3.0);
    }

    #[test]
    fn segment_distance_examples() {
        let a = Point3::new(-1.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        assert_eq!(
            point_segment_distance(&Point3::new(0.5, 0.0, 0.0), &a, &b),
            0.0
        );
        assert_eq!(
            point_segment_distance(&Point3::new(0.0, 0.0, 1.0), &a, &b),
            1.0
        );
        assert_relative_eq!(
            point_segment_distance(&Point3::new(2.0, 0.0, 1.0), &a, &b),
            2f64.sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(
            point_segment_distance(&Point3::new(0.0, 3.0, 4.0), &a, &a),
            (Point3::new(1.0, 3.0, 4.0)).norm()
        );
    }

    const NOISE: KalmanNoise = KalmanNoise { q: 100.0, r: 25.0 };
    const DT: f64 = 1.0 / 30.0;

    #[test]
    fn zero_measurement_noise_pins_position() {
        let mut s = KalmanState::at(Point3::new(5.0, -3.0, 2.0), 10.0, 100.0);
        s.velocity = Point3::new(30.0, 0.0, -10.0);
        let m = Point3::new(100.0, 200.0, 300.0);
        let out = kalman_step(&s, &m, DT, KalmanNoise { q: 100.0, r: 0.0 }).unwrap();
        assert_eq!(out.position, m);
        // Also from a fully certain state.
        let s = KalmanState::at(Point3::zeros(), 0.0, 0.0);
        let out = kalman_step(&s, &m, DT, KalmanNoise { q: 0.0, r: 0.0 }).unwrap();
        assert_eq!(out.position, m);
    }

    #[test]
    fn constant_measurements_converge() {
        let m = Point3::new(10.0, 20.0, 30.0);
        let mut s = KalmanState::at(Point3::new(40.0, -20.0, 0.0), 25.0, 250_000.0);
        s.velocity = Point3::new(100.0, -50.0, 20.0);
        for _ in 0..100 {
            s = kalman_step(&s, &m, DT, NOISE).unwrap();
        }
        // Offset of ~45 mm and 100 mm/s decays by more than three orders of magnitude.
        assert!((s.position - m).norm() < 1e-2, "{:?}", s.position);
        assert!(s.velocity.norm() < 0.5, "{:?}", s.velocity);
        // Starting at the measurement with zero velocity is a fixed point.
        let mut s = KalmanState::at(m, 25.0, 250_000.0);
        for _ in 0..100 {
            s = kalman_step(&s, &m, DT, NOISE).unwrap();
        }
        assert_eq!(s.position, m);
        assert!(s.velocity.norm() < 1e-6);
    }

    #[test]
    fn straight_line_velocity_converges() {
        let v = Point3::new(120.0, -60.0, 30.0);
        let p0 = Point3::new(0.0, 400.0, 200.0);
        let mut s = KalmanState::at(p0, 25.0, 250_000.0);
        for k in 1..=200 {
            let m = p0 + v * (k as f64 * DT);
            s = kalman_step(&s, &m, DT, NOISE).unwrap();
        }
        assert!(
            (s.velocity - v).norm() / v.norm() < 0.01,
            "{:?}",
            s.velocity
        );
    }

    #[test]
    fn non_finite_measurement_rejected() {
        let s = KalmanState::at(Point3::zeros(), 1.0, 1.0);
        assert_eq!(
            kalman_step(&s, &Point3::new(f64::NAN, 0.0, 0.0), DT, NOISE),
            Err(GeomError::NonFiniteMeasurement)
        );
    }

    #[test]
    fn covariance_stays_psd_over_long_random_run() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut s = KalmanState::at(Point3::zeros(), 25.0, 250_000.0);
        for _ in 0..100_000 {
            let m = Point3::new(
                rng.random_range(-500.0..500.0),
                rng.random_range(-500.0..500.0),
                rng.random_range(-500.0..500.0),
            );
            let noise = KalmanNoise {
                q: rng.random_range(0.0..1000.0),
                r: rng.random_range(0.0..100.0),
            };
            let dt = rng.random_range(1e-3..0.1);
            s = kalman_step(&s, &m, dt, noise).unwrap();
        }
        let c = &s.covariance;
        assert!((c - c.transpose()).abs().max() <= 1e-9 * c.abs().max().max(1.0));
        let min_eig = c.symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-9, "min eigenvalue {min_eig}");
    }

    #[test]
    fn kalman_is_bitwise_deterministic() {
        let s = KalmanState::at(Point3::new(1.0, 2.0, 3.0), 25.0, 100.0);
        let m = Point3::new(1.1, 2.2, 2.9);
        let a = kalman_step(&s, &m, DT, NOISE).unwrap();
        let b = kalman_step(&s, &m, DT, NOISE).unwrap();
        assert_eq!(a, b);
    }

    fn arb_point(range: f64) -> impl Strategy<Value = Point3> {
        (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Point3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn project_triangulate_round_trip(
            p in arb_point(150.0),
            ea in (0.3f64..1.3, -0.4f64..0.4),
            eb in (1.9f64..2.9, -0.4f64..0.4),
            dist in 500.0f64..1500.0,
            focal in 300.0f64..1200.0,
        ) {
            let eye = |(az, el): (f64, f64)| Point3::new(dist * el.cos() * az.cos(), dist * el.cos() * az.sin(), dist * el.sin());
            let a = CameraProjection::look_at(eye(ea), Point3::zeros(), Point3::z(), focal, 800, 600).unwrap();
            let b = CameraProjection::look_at(eye(eb), Point3::zeros(), Point3::z(), focal, 800, 600).unwrap();
            let q = triangulate(&a, &a.project(&p).unwrap(), &b, &b.project(&p).unwrap()).unwrap();
            prop_assert!((q - p).norm() < 1e-6, "err {}", (q - p).norm());
        }

        #[test]
        fn segment_distance_matches_sampling(p in arb_point(100.0), a in arb_point(100.0), b in arb_point(100.0)) {
            let d = point_segment_distance(&p, &a, &b);
            let brute = (0..=10_000)
                .map(|i| (p - (a + (b - a) * (i as f64 / 10_000.0))).norm())
                .fold(f64::INFINITY, f64::min);
            prop_assert!(d <= brute + 1e-9);
            prop_assert!(brute - d < 1e-3, "d {} brute {}", d, brute);
        }
    }
}
