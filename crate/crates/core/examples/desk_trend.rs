//! Full desk-scale run: baseline, three specialists, ensemble, grid.
//!
//! `cargo run --release --example desk_trend -- [per_class] [seeds...]`

use sketchnet::eval::to_text;
use sketchnet::experiment::{run_trend, TrendConfig};

fn main() -> sketchnet::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut config = TrendConfig::default();
    if let Some(n) = args.first() {
        config.per_class = n.parse().expect("per_class");
    }
    if args.len() > 1 {
        config.seeds = args[1..].iter().map(|s| s.parse().expect("seed")).collect();
    }
    let (runs, rows) = run_trend(&config)?;
    for run in &runs {
        println!(
            "seed {}: baseline {:.1}s ({} epochs)",
            run.seed,
            run.baseline_wall_time().as_secs_f64(),
            run.baseline_report.epochs.len()
        );
        for (s, _, r) in &run.specialists {
            println!("  {}: {:.2}s ({} epochs)", s.name(), r.wall_time.as_secs_f64(), r.epochs.len());
        }
    }
    print!("{}", to_text(&rows));
    Ok(())
}
