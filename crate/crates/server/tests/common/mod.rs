#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use ndarray::Array2;
use sketchnet::doodles;
use sketchnet::game::RoundConfig;
use sketchnet::strategies::DOODLE_COMPOUNDS;
use sketchnet::stroke::{to_quickdraw_line, ClassTable, EncodedSequence};
use sketchnet::{Predictor, Result};
use sketchnet_server::cli::run;
use sketchnet_server::protocol::{ClientMessage, PlayMode};
use sketchnet_server::session::{Session, SharedPredictor};

/// Prefers class 0, then 1, and so on, whatever the input.
pub struct InOrder(pub usize);

impl Predictor for InOrder {
    fn class_count(&self) -> usize {
        self.0
    }

    fn predict_proba(&self, seqs: &[&EncodedSequence]) -> Result<Array2<f64>> {
        let n = self.0;
        let total = (n * (n + 1) / 2) as f64;
        Ok(Array2::from_shape_fn((seqs.len(), n), |(_, c)| (n - c) as f64 / total))
    }
}

pub fn classes() -> Arc<ClassTable> {
    Arc::new(doodles::default_class_table())
}

pub fn predictor() -> SharedPredictor {
    Arc::new(InOrder(doodles::DOODLE_CLASSES.len()))
}

pub fn session(seed: u64, config: RoundConfig) -> Session {
    Session::new(predictor(), classes(), config, seed)
}

/// First seed at or after `from` whose opening round's code word has index
/// at least `min`, so the in-order network needs `min` wrong guesses first.
pub fn seed_with_code_at_least(min: usize, from: u64) -> u64 {
    (from..)
        .find(|&seed| {
            let mut s = session(seed, RoundConfig::default());
            s.handle(
                ClientMessage::StartRound {
                    mode: PlayMode::Guesser,
                },
                Duration::ZERO,
            );
            s.round().unwrap().code_word() >= min
        })
        .unwrap()
}

pub fn ms(n: u64) -> Duration {
    Duration::from_millis(n)
}

pub const START: &str = r#"{"type":"start_round"}"#;
pub const STROKE: &str = r#"{"type":"stroke","points":[[10,10],[120,40],[240,200]]}"#;

/// Runs the CLI in-process; `@` in an argument expands to `dir/`.
pub fn sketchnet(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["sketchnet".to_string()];
    for a in args {
        argv.push(a.replace("@", &format!("{}/", dir.display())));
    }
    run(argv)
}

pub fn write_raw(dir: &Path) {
    let table = doodles::default_class_table();
    fs::write(dir.join("classes.txt"), table.to_text()).unwrap();
    fs::write(dir.join("compounds.tsv"), DOODLE_COMPOUNDS).unwrap();
    let mut lines = String::new();
    for s in doodles::generate(&table, 8, 5).unwrap() {
        lines.push_str(&to_quickdraw_line(&s, &table).unwrap());
        lines.push('\n');
    }
    // a word outside the class table is skipped on ingest
    lines.push_str(r#"{"word":"zeppelin","drawing":[[[0,10],[0,10]]]}"#);
    lines.push('\n');
    fs::create_dir(dir.join("raw")).unwrap();
    fs::write(dir.join("raw/doodles.ndjson"), lines).unwrap();
}

/// The full pipeline from raw NDJSON to an evaluation grid.
pub fn pipeline(dir: &Path) {
    write_raw(dir);
    let steps: &[&[&str]] = &[
        &["ingest", "--ndjson", "@raw", "--classes", "@classes.txt", "--out", "@clean.inkd"],
        &[
            "--seed", "7", "train", "--data", "@clean.inkd", "--out", "@base.inkm", "--test-out", "@test.inkd",
            "--epochs", "2", "--batch-size", "16", "--report", "@base.jsonl",
        ],
        &["--seed", "7", "transform", "--strategy", "dotted", "--input", "@test.inkd", "--out", "@dotted.inkd", "--count", "30", "--random-phase"],
        &[
            "--seed", "7", "transform", "--strategy", "rebus", "--input", "@clean.inkd", "--out", "@rebus.inkd", "--count", "10",
            "--compounds", "@compounds.tsv", "--classes", "@classes.txt",
        ],
        &[
            "--seed", "7", "adapt", "--baseline", "@base.inkm", "--strategy", "dotted", "--data", "@dotted.inkd", "--out",
            "@dotted.inkm", "--epochs", "1", "--batch-size", "8",
        ],
    ];
    for args in steps {
        assert_eq!(sketchnet(dir, args), 0, "{args:?}");
    }
    fs::write(
        dir.join("bundle.json"),
        r#"{"members":[{"name":"baseline","checkpoints":["base.inkm"]},{"name":"dotted","checkpoints":["dotted.inkm"]}]}"#,
    )
    .unwrap();
    let eval = ["eval", "--bundle", "@bundle.json", "--datasets", "@test.inkd,@dotted.inkd,@rebus.inkd", "--csv", "@grid.csv"];
    assert_eq!(sketchnet(dir, &eval), 0);
}
