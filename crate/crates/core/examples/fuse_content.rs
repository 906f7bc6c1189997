//! Content estimation over a pour: two noisy per-view classifiers are
//! fused frame by frame with the filling transition matrix, and the belief
//! at the handover frame turns into a mass estimate.
//!
//! ```bash
//! cargo run --example fuse_content
//! ```

use std::error::Error;

use handover_sim::params::DensityTable;
use handover_sim::perception::{
    estimate_mass, fuse_stream, ClassProbs, ContentBelief, ContentClass, TransitionMatrix,
};

fn view(class: ContentClass, confidence: f64) -> ClassProbs {
    let mut p = ClassProbs::repeat((1.0 - confidence) / 7.0);
    p[class.index()] = confidence;
    p
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // The person pours rice: empty for a second, then half full, then nearly full.
    let script: Vec<(ContentClass, ContentClass)> = (0..90)
        .map(|k| match k {
            0..=29 => (ContentClass::Empty, ContentClass::Empty),
            30..=59 => (ContentClass::R5, ContentClass::P5),
            _ => (ContentClass::R9, ContentClass::R9),
        })
        .collect();
    let views: Vec<(ClassProbs, ClassProbs)> = script
        .iter()
        .map(|(a, b)| (view(*a, 0.7), view(*b, 0.55)))
        .collect();

    let transition = TransitionMatrix::default();
    let beliefs = fuse_stream(
        ContentBelief::initial(),
        views.iter().map(|(a, b)| Some((a, b))),
        &transition,
    );
    for k in [0, 15, 35, 45, 65, 89] {
        let b = &beliefs[k];
        println!(
            "frame {k:2}: {} (p = {:.3})",
            b.map_class(),
            b.probability(b.map_class())
        );
    }

    let at_handover = beliefs.last().ok_or("empty stream")?;
    let volume_ml = 400.0;
    let mass = estimate_mass(at_handover, volume_ml, &DensityTable::default(), 35.0);
    println!("estimated mass at handover: {mass:.1} g for a {volume_ml} mL container");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
