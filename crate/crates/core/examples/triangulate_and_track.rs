//! Two calibrated cameras watch a container carried along an arc. Each
//! frame's pixel pair is triangulated and smoothed with the constant
//! velocity filter.
//!
//! ```bash
//! cargo run --example triangulate_and_track
//! ```

use std::error::Error;

use handover_sim::geom::{triangulate, CameraProjection, KalmanNoise, KalmanState, Pixel, Point3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let target = Point3::new(0.0, 450.0, 250.0);
    let front = CameraProjection::look_at(
        Point3::new(0.0, 1200.0, 300.0),
        target,
        Point3::z(),
        600.0,
        640,
        480,
    )?;
    let side = CameraProjection::look_at(
        Point3::new(750.0, 450.0, 300.0),
        target,
        Point3::z(),
        600.0,
        640,
        480,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pixel_noise = Normal::new(0.0, 3.0)?;
    let noise = KalmanNoise { q: 100.0, r: 25.0 };
    let dt = 1.0 / 30.0;

    let mut filter: Option<KalmanState> = None;
    let (mut raw_se, mut filtered_se) = (0.0, 0.0);
    let frames = 150;
    for k in 0..frames {
        let a = k as f64 * dt * 0.5;
        let truth = target + Point3::new(80.0 * a.cos(), 80.0 * a.sin(), 10.0 * a);
        let jitter = |p: Pixel, rng: &mut ChaCha8Rng| {
            p + Pixel::new(pixel_noise.sample(rng), pixel_noise.sample(rng))
        };
        let pa = jitter(front.project(&truth)?, &mut rng);
        let pb = jitter(side.project(&truth)?, &mut rng);
        let measured = triangulate(&front, &pa, &side, &pb)?;
        let state = match filter {
            None => KalmanState::at(measured, noise.r, 250_000.0),
            Some(s) => s.step(&measured, dt, noise)?,
        };
        raw_se += (measured - truth).norm_squared();
        filtered_se += (state.position - truth).norm_squared();
        if k % 30 == 0 {
            println!(
                "t={:.1}s  truth ({:7.2} {:7.2} {:7.2})  filtered ({:7.2} {:7.2} {:7.2})",
                k as f64 * dt,
                truth.x,
                truth.y,
                truth.z,
                state.position.x,
                state.position.y,
                state.position.z
            );
        }
        filter = Some(state);
    }
    let n = frames as f64;
    println!(
        "triangulated rmse {:.2} mm, filtered rmse {:.2} mm",
        (raw_se / n).sqrt(),
        (filtered_se / n).sqrt()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
