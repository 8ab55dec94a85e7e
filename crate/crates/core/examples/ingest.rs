//! Reads Quick Draw NDJSON, skips words outside the class table and writes a
//! binary dataset cache.
//!
//! `cargo run --release --example ingest -- <ndjson_dir> <classes.txt> <out.inkd>`

use std::fs;
use std::path::PathBuf;

use sketchnet::stroke::{parse_quickdraw_line, ClassTable};
use sketchnet::{Dataset, DatasetTag, Error};

fn main() -> sketchnet::Result<()> {
    let args: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let [dir, classes, out] = &args[..] else {
        eprintln!("usage: ingest <ndjson_dir> <classes.txt> <out.inkd>");
        std::process::exit(1);
    };
    let table = ClassTable::load(classes)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    files.sort();

    let (mut sketches, mut skipped) = (Vec::new(), 0);
    for file in files.iter().filter(|p| p.extension().is_some_and(|x| x == "ndjson")) {
        for line in fs::read_to_string(file)?.lines().filter(|l| !l.trim().is_empty()) {
            match parse_quickdraw_line(line, &table) {
                Ok(s) => sketches.push(s),
                Err(Error::UnknownClass(_)) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    let mut counts = vec![0usize; table.len()];
    for s in &sketches {
        counts[s.label.expect("parsed sketches are labeled")] += 1;
    }
    for (name, n) in table.names().iter().zip(&counts) {
        println!("{name:>12} {n}");
    }
    println!("{} sketches, {skipped} skipped", sketches.len());
    Dataset::new(table.len(), DatasetTag::Clean, sketches)?.save(out)
}
