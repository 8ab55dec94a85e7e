//! Writes a synthetic doodle corpus in Quick Draw NDJSON form, one file per
//! class, plus the class table and the rebus compound table.
//!
//! `cargo run --release --example synth_doodles -- <out_dir> [per_class] [seed]`

use std::fs;
use std::path::PathBuf;

use sketchnet::doodles;
use sketchnet::strategies::DOODLE_COMPOUNDS;
use sketchnet::stroke::to_quickdraw_line;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "doodles".into()));
    let per_class: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(200);
    let seed: u64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(1);

    let classes = doodles::default_class_table();
    let sketches = doodles::generate(&classes, per_class, seed)?;
    fs::create_dir_all(out.join("ndjson"))?;
    for (index, name) in classes.names().iter().enumerate() {
        let mut lines = String::new();
        for s in sketches.iter().filter(|s| s.label == Some(index)) {
            lines.push_str(&to_quickdraw_line(s, &classes)?);
            lines.push('\n');
        }
        fs::write(out.join("ndjson").join(format!("{name}.ndjson")), lines)?;
    }
    fs::write(out.join("classes.txt"), classes.to_text())?;
    fs::write(out.join("compounds.tsv"), DOODLE_COMPOUNDS)?;
    println!("{} sketches over {} classes in {}", sketches.len(), classes.len(), out.display());
    Ok(())
}
