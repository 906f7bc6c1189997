//! Shape from two silhouettes: a tapered cup is rendered into two
//! orthogonal views, rebuilt as a stack of circles, measured, and written
//! out as an OBJ mesh.
//!
//! ```bash
//! cargo run --example reconstruct_shape -- /tmp/cup.obj
//! ```

use std::error::Error;
use std::path::PathBuf;

use handover_sim::geom::Point3;
use handover_sim::params::LodeParams;
use handover_sim::perception::{lode_reconstruct, mesh_export, shape_metrics};
use handover_sim::synth::{orthogonal_cameras, render_silhouette, Profile};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let out = std::env::args()
        .nth(1)
        .filter(|a| a.ends_with(".obj"))
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("handover_cup.obj"));

    // Narrow base, wide rim.
    let cup = Profile::new(vec![(0.0, 28.0), (60.0, 36.0), (110.0, 40.0)]);
    let base = Point3::new(0.0, 450.0, 200.0);
    let centroid = base + Point3::new(0.0, 0.0, cup.height() / 2.0);
    let cameras = orthogonal_cameras(centroid);
    let masks = [
        render_silhouette(&cameras[0], &base, &cup),
        render_silhouette(&cameras[1], &base, &cup),
    ];
    println!(
        "silhouette pixels: {} and {}",
        masks[0].count(),
        masks[1].count()
    );

    let shape = lode_reconstruct(&masks, &cameras, &centroid, &LodeParams::default())?;
    let m = shape_metrics(&shape);
    println!(
        "{} slices from z={:.0} to z={:.0}",
        shape.slices().len(),
        shape.z_min(),
        shape.z_max()
    );
    for z in [-40.0, 0.0, 40.0] {
        println!(
            "  radius at {z:+.0}: {:.1} (true {:.1})",
            shape.radius_at(z),
            cup.radius_at(z + 55.0)
        );
    }
    println!(
        "width {:.1} mm, height {:.1} mm, volume {:.1} mL (solid of revolution {:.1} mL)",
        m.width,
        m.height,
        m.volume_ml,
        cup.volume_ml()
    );

    let mesh = mesh_export(&shape, 36, &out)?;
    println!(
        "{} vertices, {} triangles -> {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        out.display()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
