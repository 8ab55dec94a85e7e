//! Plays one round against a freshly trained network with a simulated
//! clock: the sketch arrives stroke by stroke while the network guesses
//! every 2.5 s and wrong guesses pile up in the blacklist.
//!
//! `cargo run --release --example game_round`

use std::time::Duration;

use sketchnet::experiment::encode_all;
use sketchnet::game::{GameRound, RoundConfig, RoundStatus};
use sketchnet::{doodles, split_dataset, train, ArchitectureSpec, ModelState, TrainConfig};

fn main() -> sketchnet::Result<()> {
    let classes = doodles::default_class_table();
    let split = split_dataset(&doodles::generate(&classes, 60, 5)?, 0.1, 0.1, 5)?;
    let config = TrainConfig {
        batch_size: 8,
        max_epochs: 15,
        seed: 5,
        ..TrainConfig::default()
    };
    let initial = ModelState::build(&ArchitectureSpec::desk_scale(classes.len()), 5)?;
    let (model, _) = train(&initial, &encode_all(&split.train)?, &encode_all(&split.validation)?, &config)?;

    let sketch = &split.test[0];
    let code = sketch.label.expect("labeled");
    println!("code word: {}", classes.name(code).unwrap());
    let mut round = GameRound::new(code, classes.len(), Duration::ZERO, RoundConfig::default())?;
    let mut strokes = sketch.strokes.iter();
    let mut now = Duration::ZERO;
    while round.status() == RoundStatus::Active {
        // the sketcher finishes a stroke every 1.5 s
        if now.as_millis() % 1500 == 0 {
            if let Some(s) = strokes.next() {
                round.submit_stroke(s.clone())?;
            }
        }
        if let Some(g) = round.tick(now, &model)? {
            println!(
                "{:>5.1}s  {} strokes  guess {:<10} {}",
                g.at.as_secs_f64(),
                round.strokes().len(),
                classes.name(g.class).unwrap(),
                if g.correct { "correct" } else { "wrong" }
            );
        }
        now += Duration::from_millis(100);
    }
    let blacklist: Vec<&str> = round.blacklist().iter().map(|&c| classes.name(c).unwrap()).collect();
    println!("{} after {:.1}s, blacklist {blacklist:?}", round.status().name(), now.as_secs_f64());
    Ok(())
}
