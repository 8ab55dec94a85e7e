//! Generators for the three adversarial drawing strategies.
//!
//! * Distraction: random straight lines drawn before the real sketch.
//! * Dotted: every stroke cut into short dashes, one pen-down per dash.
//! * Rebus: a compound word drawn as its two parts side by side.
//!
//! All transforms work in canvas coordinates and keep points inside
//! `[0, 255]`; normalization happens afterwards, at encoding time.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetTag;
use crate::error::{Error, Result};
use crate::rdp::rdp_simplify;
use crate::stroke::{ClassTable, Point, Sketch, Stroke, CANVAS_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistractionConfig {
    pub min_lines: usize,
    pub max_lines: usize,
    /// Line length bounds as fractions of the canvas side.
    pub min_length: f64,
    pub max_length: f64,
}

impl Default for DistractionConfig {
    fn default() -> Self {
        DistractionConfig {
            min_lines: 1,
            max_lines: 5,
            min_length: 0.2,
            max_length: 0.9,
        }
    }
}

impl DistractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_lines < 1 || self.min_lines > self.max_lines {
            return Err(Error::arg(format!(
                "need 1 <= min_lines <= max_lines, got {}..{}",
                self.min_lines, self.max_lines
            )));
        }
        if !(self.min_length > 0.0 && self.min_length <= self.max_length && self.max_length <= 1.0) {
            return Err(Error::arg("line length fractions must satisfy 0 < min <= max <= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DottedConfig {
    pub dash_length: f64,
    pub gap_length: f64,
    /// Arc-length spacing used to resample strokes before cutting.
    pub resample_step: f64,
    /// RDP tolerance applied to each dash; 0 keeps every resampled point.
    pub dash_epsilon: f64,
    /// Offset of the dash pattern along each stroke, in canvas units.
    pub phase: f64,
}

impl Default for DottedConfig {
    fn default() -> Self {
        DottedConfig {
            dash_length: 12.0,
            gap_length: 8.0,
            resample_step: 2.0,
            dash_epsilon: 2.0,
            phase: 0.0,
        }
    }
}

impl DottedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dash_length > 0.0 && self.gap_length > 0.0 && self.resample_step > 0.0) {
            return Err(Error::arg("dash, gap and resample step must be positive"));
        }
        if !(self.dash_epsilon >= 0.0 && self.phase >= 0.0) {
            return Err(Error::arg("dash epsilon and phase must be non-negative"));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        self.dash_length + self.gap_length
    }
}

fn clamp(p: Point) -> Point {
    Point::new(p.x.clamp(0.0, CANVAS_MAX), p.y.clamp(0.0, CANVAS_MAX))
}

/// Prepends `n` random two-point strokes, `n` uniform in
/// `[min_lines, max_lines]`. Endpoints are uniform integer canvas points,
/// resampled until the length falls in the configured range.
pub fn distraction_transform(sketch: &Sketch, config: &DistractionConfig, rng: &mut impl Rng) -> Result<Sketch> {
    config.validate()?;
    let n = rng.random_range(config.min_lines..=config.max_lines);
    let (lo, hi) = (config.min_length * CANVAS_MAX, config.max_length * CANVAS_MAX);
    let mut strokes = Vec::with_capacity(n + sketch.strokes.len());
    for _ in 0..n {
        let (a, b) = loop {
            let a = Point::new(rng.random_range(0..=255) as f64, rng.random_range(0..=255) as f64);
            let b = Point::new(rng.random_range(0..=255) as f64, rng.random_range(0..=255) as f64);
            let d = a.distance(&b);
            if d >= lo && d <= hi {
                break (a, b);
            }
        };
        strokes.push(Stroke::new(vec![a, b])?);
    }
    strokes.extend(sketch.strokes.iter().cloned());
    Sketch::new(strokes, sketch.label)
}

/// Point at arc length `s` along `pts` with cumulative lengths `cum`.
fn point_at(pts: &[Point], cum: &[f64], s: f64) -> Point {
    let i = match cum.iter().position(|&c| c >= s) {
        Some(0) => return pts[0],
        Some(i) => i,
        None => return pts[pts.len() - 1],
    };
    let seg = cum[i] - cum[i - 1];
    if seg <= 0.0 {
        return pts[i];
    }
    let t = (s - cum[i - 1]) / seg;
    Point::new(pts[i - 1].x + t * (pts[i].x - pts[i - 1].x), pts[i - 1].y + t * (pts[i].y - pts[i - 1].y))
}

/// Points sampled every `step` along `[from, to]`, both ends included.
fn sample_span(pts: &[Point], cum: &[f64], from: f64, to: f64, step: f64) -> Vec<Point> {
    let mut out = vec![point_at(pts, cum, from)];
    let mut s = from + step;
    while s < to {
        out.push(point_at(pts, cum, s));
        s += step;
    }
    if to > from {
        out.push(point_at(pts, cum, to));
    }
    out
}

/// Cuts every stroke into dashes along its arc length. A stroke shorter
/// than one dash, or one that would vanish entirely into a gap, is kept
/// unchanged.
pub fn dotted_transform(sketch: &Sketch, config: &DottedConfig) -> Result<Sketch> {
    config.validate()?;
    let period = config.period();
    let mut strokes = Vec::new();
    for stroke in &sketch.strokes {
        let pts = stroke.points();
        let mut cum = Vec::with_capacity(pts.len());
        let mut total = 0.0;
        cum.push(0.0);
        for w in pts.windows(2) {
            total += w[0].distance(&w[1]);
            cum.push(total);
        }
        if total < config.dash_length {
            strokes.push(stroke.clone());
            continue;
        }
        let mut dashes = Vec::new();
        let mut start = -(config.phase % period);
        while start < total {
            let (a, b) = (start.max(0.0), (start + config.dash_length).min(total));
            if b > a {
                let dash = Stroke::new(sample_span(pts, &cum, a, b, config.resample_step))?;
                dashes.push(rdp_simplify(&dash, config.dash_epsilon)?.map_points(clamp));
            }
            start += period;
        }
        if dashes.is_empty() {
            strokes.push(stroke.clone());
        } else {
            strokes.extend(dashes);
        }
    }
    Sketch::new(strokes, sketch.label)
}

/// One `compound<TAB>partA<TAB>partB` row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompoundEntry {
    pub compound: String,
    pub part_a: String,
    pub part_b: String,
}

/// Compound entry resolved to class indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedCompound {
    pub compound: usize,
    pub part_a: usize,
    pub part_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CompoundTable {
    pub entries: Vec<CompoundEntry>,
}

impl CompoundTable {
    /// Parses TSV; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 3 || cols.iter().any(|c| c.is_empty()) {
                return Err(Error::parse(
                    &format!("line {}", i + 1),
                    "expected compound<TAB>partA<TAB>partB",
                ));
            }
            entries.push(CompoundEntry {
                compound: cols[0].to_string(),
                part_a: cols[1].to_string(),
                part_b: cols[2].to_string(),
            });
        }
        Ok(CompoundTable { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CompoundTable::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.compound, e.part_a, e.part_b))
            .collect()
    }

    pub fn get(&self, compound: &str) -> Result<&CompoundEntry> {
        self.entries
            .iter()
            .find(|e| e.compound == compound)
            .ok_or_else(|| Error::UnknownClass(format!("{compound} (not in compound table)")))
    }

    /// Resolves every name against `classes`.
    pub fn resolve(&self, classes: &ClassTable) -> Result<Vec<ResolvedCompound>> {
        self.entries
            .iter()
            .map(|e| {
                Ok(ResolvedCompound {
                    compound: classes.index_of(&e.compound)?,
                    part_a: classes.index_of(&e.part_a)?,
                    part_b: classes.index_of(&e.part_b)?,
                })
            })
            .collect()
    }
}

/// Compound table matching the built-in doodle classes.
pub const DOODLE_COMPOUNDS: &str = "house\tsquare\ttriangle\ncloud\tcircle\tcircle\nlightning\tzigzag\tzigzag\n";

/// Left and right placement boxes, `(x0, x1)`; both use `y` in
/// `[72, 183]` so the parts sit side by side at equal size.
const LEFT_BOX: (f64, f64) = (8.0, 119.0);
const RIGHT_BOX: (f64, f64) = (136.0, 247.0);

fn fit_into(sketch: &Sketch, (x0, x1): (f64, f64)) -> Vec<Stroke> {
    let side = x1 - x0;
    let (y0, y1) = (CANVAS_MAX / 2.0 - side / 2.0, CANVAS_MAX / 2.0 + side / 2.0);
    let (lo, hi) = sketch.bounds();
    let span = (hi.x - lo.x).max(hi.y - lo.y);
    let scale = if span > 0.0 { side / span } else { 0.0 };
    let off_x = x0 + (side - (hi.x - lo.x) * scale) / 2.0;
    let off_y = y0 + (y1 - y0 - (hi.y - lo.y) * scale) / 2.0;
    sketch
        .strokes
        .iter()
        .map(|s| s.map_points(|p| clamp(Point::new(off_x + (p.x - lo.x) * scale, off_y + (p.y - lo.y) * scale))))
        .collect()
}

/// Part A scaled into the left half, part B into the right half (aspect
/// preserved), A's strokes first, labeled with the compound class.
pub fn rebus_compose(entry: &ResolvedCompound, part_a: &Sketch, part_b: &Sketch) -> Result<Sketch> {
    for (name, sketch, want) in [("part_a", part_a, entry.part_a), ("part_b", part_b, entry.part_b)] {
        if sketch.label != Some(want) {
            return Err(Error::arg(format!(
                "{name} is labeled {:?}, expected class {want}",
                sketch.label
            )));
        }
    }
    let mut strokes = fit_into(part_a, LEFT_BOX);
    strokes.extend(fit_into(part_b, RIGHT_BOX));
    Sketch::new(strokes, Some(entry.compound))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Distraction,
    Dotted,
    Rebus,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Distraction, Strategy::Dotted, Strategy::Rebus];

    pub fn tag(self) -> DatasetTag {
        match self {
            Strategy::Distraction => DatasetTag::Distraction,
            Strategy::Dotted => DatasetTag::Dotted,
            Strategy::Rebus => DatasetTag::Rebus,
        }
    }

    pub fn name(self) -> &'static str {
        self.tag().name()
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distraction" => Ok(Strategy::Distraction),
            "dotted" => Ok(Strategy::Dotted),
            "rebus" => Ok(Strategy::Rebus),
            other => Err(Error::arg(format!(
                "unknown strategy `{other}` (expected distraction, dotted or rebus)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub distraction: DistractionConfig,
    pub dotted: DottedConfig,
    /// Randomize the dash phase per output sketch.
    pub random_phase: bool,
}

/// Yields pool indices: a shuffled pass without replacement, then uniform
/// draws with replacement.
struct Drawer {
    order: Vec<usize>,
    next: usize,
}

impl Drawer {
    fn new(mut pool: Vec<usize>, rng: &mut impl Rng) -> Self {
        pool.shuffle(rng);
        Drawer { order: pool, next: 0 }
    }

    fn draw(&mut self, rng: &mut impl Rng) -> Option<usize> {
        if self.order.is_empty() {
            return None;
        }
        let i = if self.next < self.order.len() {
            self.order[self.next]
        } else {
            self.order[rng.random_range(0..self.order.len())]
        };
        self.next += 1;
        Some(i)
    }
}

/// Exactly `target_count` strategy sketches built from `clean` sources.
/// `compounds` is required for Rebus and ignored otherwise.
pub fn synthesize_strategy_dataset(
    clean: &[Sketch],
    strategy: Strategy,
    config: &StrategyConfig,
    compounds: &[ResolvedCompound],
    target_count: usize,
    seed: u64,
) -> Result<Vec<Sketch>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target_count);
    match strategy {
        Strategy::Distraction | Strategy::Dotted => {
            if clean.is_empty() {
                return Err(Error::arg("no clean source sketches"));
            }
            let mut drawer = Drawer::new((0..clean.len()).collect(), &mut rng);
            for _ in 0..target_count {
                let src = &clean[drawer.draw(&mut rng).expect("non-empty pool")];
                let sketch = match strategy {
                    Strategy::Distraction => distraction_transform(src, &config.distraction, &mut rng)?,
                    _ => {
                        let mut dotted = config.dotted.clone();
                        if config.random_phase {
                            dotted.phase = rng.random_range(0.0..dotted.period());
                        }
                        dotted_transform(src, &dotted)?
                    }
                };
                out.push(sketch);
            }
        }
        Strategy::Rebus => {
            if compounds.is_empty() {
                return Err(Error::arg("rebus needs a non-empty compound table"));
            }
            let max_label = compounds.iter().flat_map(|c| [c.part_a, c.part_b]).max().unwrap_or(0);
            let mut drawers: Vec<Option<Drawer>> = (0..=max_label).map(|_| None).collect();
            for c in compounds {
                for part in [c.part_a, c.part_b] {
                    if drawers[part].is_none() {
                        let pool: Vec<usize> = (0..clean.len()).filter(|&i| clean[i].label == Some(part)).collect();
                        drawers[part] = Some(Drawer::new(pool, &mut rng));
                    }
                }
            }
            for i in 0..target_count {
                let entry = &compounds[i % compounds.len()];
                let mut take = |class: usize| -> Result<&Sketch> {
                    drawers[class]
                        .as_mut()
                        .and_then(|d| d.draw(&mut rng))
                        .map(|j| &clean[j])
                        .ok_or_else(|| Error::arg(format!("no source sketches of part class {class}")))
                };
                let a = take(entry.part_a)?;
                let b = take(entry.part_b)?;
                out.push(rebus_compose(entry, a, b)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(len: f64) -> Sketch {
        Sketch::new(vec![Stroke::from_xy(&[(10.0, 50.0), (10.0 + len, 50.0)]).unwrap()], Some(0)).unwrap()
    }

    #[test]
    fn straight_hundred_gives_five_dashes() {
        let out = dotted_transform(&line(100.0), &DottedConfig::default()).unwrap();
        assert_eq!(out.strokes.len(), 5);
        let starts: Vec<f64> = out.strokes.iter().map(|s| s.first().x - 10.0).collect();
        assert_eq!(starts, vec![0.0, 20.0, 40.0, 60.0, 80.0]);
        for s in &out.strokes {
            assert_eq!(s.len(), 2);
            assert!((s.arc_length() - 12.0).abs() < 1e-12);
        }
    }

    #[test]
    fn final_partial_dash_is_kept() {
        let out = dotted_transform(&line(85.0), &DottedConfig::default()).unwrap();
        assert_eq!(out.strokes.len(), 5);
        assert!((out.strokes[4].arc_length() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn short_stroke_is_unchanged() {
        let s = line(7.0);
        assert_eq!(dotted_transform(&s, &DottedConfig::default()).unwrap(), s);
    }

    #[test]
    fn distraction_prepends() {
        let s = line(40.0);
        let cfg = DistractionConfig {
            min_lines: 3,
            max_lines: 3,
            ..DistractionConfig::default()
        };
        let out = distraction_transform(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.strokes.len(), 4);
        assert_eq!(out.strokes[3], s.strokes[0]);
        for l in &out.strokes[..3] {
            assert_eq!(l.len(), 2);
            let d = l.arc_length();
            assert!((0.2 * 255.0..=0.9 * 255.0).contains(&d));
        }
    }

    #[test]
    fn compound_table_parse() {
        let t = CompoundTable::parse("# comment\nkeyboard\tkey\tdiving board\n\n").unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.get("keyboard").unwrap().part_b, "diving board");
        assert!(t.get("toaster").is_err());
        assert!(CompoundTable::parse("a\tb").is_err());
        assert_eq!(CompoundTable::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn rebus_needs_table() {
        let s = vec![line(30.0)];
        assert!(synthesize_strategy_dataset(&s, Strategy::Rebus, &StrategyConfig::default(), &[], 3, 0).is_err());
    }

    #[test]
    fn strategy_names() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("scribble".parse::<Strategy>().is_err());
    }
}
