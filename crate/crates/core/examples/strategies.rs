//! Applies the three adversarial drawing strategies to doodles and shows
//! what each does to the stroke sequence.
//!
//! `cargo run --example strategies`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchnet::doodles;
use sketchnet::strategies::{
    distraction_transform, dotted_transform, rebus_compose, CompoundTable, DistractionConfig, DottedConfig,
    DOODLE_COMPOUNDS,
};
use sketchnet::stroke::prepare;
use sketchnet::Sketch;

fn describe(tag: &str, s: &Sketch) -> sketchnet::Result<()> {
    println!(
        "{tag:<12} strokes {:>3}  points {:>4}  ink {:>7.1}  encoded rows {:>4}",
        s.strokes.len(),
        s.point_count(),
        s.arc_length(),
        prepare(s)?.len()
    );
    Ok(())
}

fn main() -> sketchnet::Result<()> {
    let classes = doodles::default_class_table();
    let sketches = doodles::generate(&classes, 1, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let first = &sketches[0];
    println!("class `{}`", classes.name(first.label.unwrap()).unwrap());
    describe("clean", first)?;
    describe("distraction", &distraction_transform(first, &DistractionConfig::default(), &mut rng)?)?;
    describe("dotted", &dotted_transform(first, &DottedConfig::default())?)?;

    let compounds = CompoundTable::parse(DOODLE_COMPOUNDS)?.resolve(&classes)?;
    for entry in &compounds {
        let part = |c: usize| sketches.iter().find(|s| s.label == Some(c)).expect("one sketch per class");
        let rebus = rebus_compose(entry, part(entry.part_a), part(entry.part_b))?;
        describe(classes.name(entry.compound).unwrap(), &rebus)?;
    }
    Ok(())
}
