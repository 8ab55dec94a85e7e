//! Sketch representation, Quick Draw ingestion, normalization and encoding.
//!
//! A [`Sketch`] is an ordered list of pen-down [`Stroke`]s in canvas
//! coordinates (0–255 on both axes for Quick Draw `simplified` data).
//! Before it reaches the network it is min-max normalized per axis over the
//! whole sketch and flattened into an [`EncodedSequence`] of
//! `(x, y, stroke_end)` rows.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// Upper bound of the Quick Draw canvas on both axes.
pub const CANVAS_MAX: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A continuous pen-down curve. Never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    points: Vec<Point>,
}

impl Stroke {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Contract("stroke must contain at least one point".into()));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Contract("stroke contains a non-finite coordinate".into()));
        }
        Ok(Stroke { points })
    }

    /// Builds a stroke from `(x, y)` pairs.
    pub fn from_xy(pairs: &[(f64, f64)]) -> Result<Self> {
        Stroke::new(pairs.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> Point {
        self.points[0]
    }

    pub fn last(&self) -> Point {
        self.points[self.points.len() - 1]
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    pub(crate) fn map_points(&self, f: impl Fn(Point) -> Point) -> Stroke {
        Stroke {
            points: self.points.iter().copied().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    pub strokes: Vec<Stroke>,
    pub label: Option<usize>,
}

impl Sketch {
    pub fn new(strokes: Vec<Stroke>, label: Option<usize>) -> Result<Self> {
        if strokes.is_empty() {
            return Err(Error::Contract("sketch must contain at least one stroke".into()));
        }
        Ok(Sketch { strokes, label })
    }

    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(Stroke::len).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.strokes.iter().flat_map(|s| s.points.iter())
    }

    pub fn arc_length(&self) -> f64 {
        self.strokes.iter().map(Stroke::arc_length).sum()
    }

    /// Axis-aligned bounds as `(min, max)` corners.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.points() {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }
}

/// Class names indexed by line number of the class file.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassTable {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::arg("class table needs at least two classes"));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::arg(format!("empty class name on line {}", i + 1)));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::arg(format!("duplicate class name `{name}`")));
            }
        }
        Ok(ClassTable { names, index })
    }

    /// Parses one class name per line. Trailing blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
        let end = lines.iter().rposition(|l| !l.is_empty()).map_or(0, |i| i + 1);
        ClassTable::new(lines[..end].iter().copied())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ClassTable::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = self.names.join("\n");
        out.push('\n');
        out
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

fn coordinate_list(value: &Value, field: &str) -> Result<Vec<f64>> {
    let arr = value
        .as_array()
        .ok_or_else(|| Error::parse(field, "expected an array of numbers"))?;
    arr.iter()
        .map(|v| {
            let c = v
                .as_f64()
                .ok_or_else(|| Error::parse(field, format!("non-numeric coordinate {v}")))?;
            if !(0.0..=CANVAS_MAX).contains(&c) {
                return Err(Error::parse(field, format!("coordinate {c} outside [0, 255]")));
            }
            Ok(c)
        })
        .collect()
}

/// Parses one record of the Quick Draw `simplified` NDJSON schema.
///
/// Only `word` and `drawing` are read; other metadata fields are ignored.
pub fn parse_quickdraw_line(line: &str, classes: &ClassTable) -> Result<Sketch> {
    let record: Value =
        serde_json::from_str(line).map_err(|e| Error::parse("record", e.to_string()))?;
    let word = record
        .get("word")
        .ok_or_else(|| Error::parse("word", "missing"))?
        .as_str()
        .ok_or_else(|| Error::parse("word", "expected a string"))?;
    let drawing = record
        .get("drawing")
        .ok_or_else(|| Error::parse("drawing", "missing"))?
        .as_array()
        .ok_or_else(|| Error::parse("drawing", "expected an array of strokes"))?;
    if drawing.is_empty() {
        return Err(Error::parse("drawing", "no strokes"));
    }

    let mut strokes = Vec::with_capacity(drawing.len());
    for (i, stroke) in drawing.iter().enumerate() {
        let field = format!("drawing[{i}]");
        let pair = stroke
            .as_array()
            .filter(|p| p.len() >= 2)
            .ok_or_else(|| Error::parse(&field, "expected [x-list, y-list]"))?;
        let xs = coordinate_list(&pair[0], &format!("{field}[0]"))?;
        let ys = coordinate_list(&pair[1], &format!("{field}[1]"))?;
        if xs.len() != ys.len() {
            return Err(Error::parse(
                &field,
                format!("x-list has {} entries but y-list has {}", xs.len(), ys.len()),
            ));
        }
        if xs.is_empty() {
            return Err(Error::parse(&field, "empty stroke"));
        }
        let points = xs.into_iter().zip(ys).map(|(x, y)| Point::new(x, y)).collect();
        strokes.push(Stroke { points });
    }

    let label = classes.index_of(word)?;
    Ok(Sketch {
        strokes,
        label: Some(label),
    })
}

/// Serializes a sketch back into a Quick Draw style NDJSON record.
pub fn to_quickdraw_line(sketch: &Sketch, classes: &ClassTable) -> Result<String> {
    let label = sketch
        .label
        .ok_or_else(|| Error::arg("sketch has no label to serialize"))?;
    let word = classes
        .name(label)
        .ok_or_else(|| Error::arg(format!("label {label} outside class table")))?;
    let drawing: Vec<Value> = sketch
        .strokes
        .iter()
        .map(|s| {
            let xs: Vec<Value> = s.points.iter().map(|p| json_number(p.x)).collect();
            let ys: Vec<Value> = s.points.iter().map(|p| json_number(p.y)).collect();
            Value::Array(vec![Value::Array(xs), Value::Array(ys)])
        })
        .collect();
    let record = serde_json::json!({ "word": word, "drawing": drawing });
    Ok(record.to_string())
}

fn json_number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        Value::from(v as i64)
    } else {
        Value::from(v)
    }
}

fn axis_map(lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    let range = hi - lo;
    move |v| if range > 0.0 { (v - lo) / range } else { 0.5 }
}

/// Per-axis min-max normalization over the whole sketch into `[0, 1]`.
///
/// An axis with zero extent maps to 0.5.
pub fn normalize(sketch: &Sketch) -> Sketch {
    let (lo, hi) = sketch.bounds();
    let fx = axis_map(lo.x, hi.x);
    let fy = axis_map(lo.y, hi.y);
    Sketch {
        strokes: sketch
            .strokes
            .iter()
            .map(|s| s.map_points(|p| Point::new(fx(p.x), fy(p.y))))
            .collect(),
        label: sketch.label,
    }
}

/// `T x 3` network input: normalized x, normalized y, stroke-end flag.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    rows: Vec<[f64; 3]>,
    pub label: Option<usize>,
}

impl EncodedSequence {
    pub fn rows(&self) -> &[[f64; 3]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Flattens a normalized sketch into `(x, y, end)` rows.
pub fn encode(sketch: &Sketch) -> Result<EncodedSequence> {
    let mut rows = Vec::with_capacity(sketch.point_count());
    for (si, stroke) in sketch.strokes.iter().enumerate() {
        let n = stroke.len();
        for (pi, p) in stroke.points.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
                return Err(Error::Contract(format!(
                    "stroke {si} point {pi} ({}, {}) is not normalized",
                    p.x, p.y
                )));
            }
            let end = if pi + 1 == n { 1.0 } else { 0.0 };
            rows.push([p.x, p.y, end]);
        }
    }
    if rows.is_empty() {
        return Err(Error::Contract("sketch has no points".into()));
    }
    Ok(EncodedSequence {
        rows,
        label: sketch.label,
    })
}

/// `normalize` followed by `encode`; the usual path from canvas to network.
pub fn prepare(sketch: &Sketch) -> Result<EncodedSequence> {
    encode(&normalize(sketch))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ClassTable {
        ClassTable::new(["dog", "cat", "house"]).unwrap()
    }

    #[test]
    fn parses_single_stroke_record() {
        let s = parse_quickdraw_line(r#"{"word":"cat","drawing":[[[0,10],[0,5]]]}"#, &table())
            .unwrap();
        assert_eq!(s.strokes.len(), 1);
        assert_eq!(s.strokes[0].len(), 2);
        assert_eq!(s.label, Some(1));
        assert_eq!(s.strokes[0].points()[1], Point::new(10.0, 5.0));
    }

    #[test]
    fn parses_three_stroke_record() {
        let line = r#"{"word":"house","countrycode":"DK","recognized":true,
            "drawing":[[[0,50,100],[0,0,0]],[[1,2,3,4],[9,8,7,6]],[[255],[255]]]}"#;
        let s = parse_quickdraw_line(&line.replace('\n', ""), &table()).unwrap();
        let counts: Vec<usize> = s.strokes.iter().map(Stroke::len).collect();
        assert_eq!(counts, vec![3, 4, 1]);
        assert_eq!(s.label, Some(2));
    }

    #[test]
    fn rejects_empty_drawing() {
        let err = parse_quickdraw_line(r#"{"word":"cat","drawing":[]}"#, &table()).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "drawing"));
    }

    #[test]
    fn names_offending_field() {
        let err = parse_quickdraw_line(r#"{"drawing":[[[0],[0]]]}"#, &table()).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "word"));
        let err = parse_quickdraw_line(r#"{"word":"cat","drawing":[[[0,1],[0]]]}"#, &table())
            .unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "drawing[0]"));
        let err = parse_quickdraw_line(r#"{"word":"cat","drawing":[[[0,300],[0,1]]]}"#, &table())
            .unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "drawing[0][0]"));
    }

    #[test]
    fn unknown_class_is_label_error() {
        let err = parse_quickdraw_line(r#"{"word":"axe","drawing":[[[0],[0]]]}"#, &table())
            .unwrap_err();
        assert!(matches!(err, Error::UnknownClass(ref w) if w == "axe"));
    }

    #[test]
    fn quickdraw_line_round_trip() {
        let line = r#"{"word":"dog","drawing":[[[0,10,20],[5,6,7]],[[3],[4]]]}"#;
        let s = parse_quickdraw_line(line, &table()).unwrap();
        let back = to_quickdraw_line(&s, &table()).unwrap();
        assert_eq!(parse_quickdraw_line(&back, &table()).unwrap(), s);
    }

    #[test]
    fn class_table_parsing() {
        let t = ClassTable::parse("cat\ndog\n\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.index_of("dog").unwrap(), 1);
        assert!(ClassTable::parse("cat\n").is_err());
        assert!(ClassTable::parse("cat\ncat\n").is_err());
    }

    fn sketch(strokes: &[&[(f64, f64)]]) -> Sketch {
        Sketch::new(
            strokes.iter().map(|s| Stroke::from_xy(s).unwrap()).collect(),
            Some(0),
        )
        .unwrap()
    }

    #[test]
    fn normalize_full_range() {
        let s = sketch(&[&[(0.0, 0.0), (256.0, 128.0)], &[(64.0, 256.0)]]);
        let n = normalize(&s);
        let pts: Vec<Point> = n.points().copied().collect();
        assert_eq!(pts[0], Point::new(0.0, 0.0));
        assert_eq!(pts[1], Point::new(1.0, 0.5));
        assert_eq!(pts[2], Point::new(0.25, 1.0));
    }

    #[test]
    fn normalize_degenerate_axis() {
        let s = sketch(&[&[(7.0, 0.0), (7.0, 10.0), (7.0, 30.0)]]);
        let n = normalize(&s);
        assert!(n.points().all(|p| p.x == 0.5));
        let ys: Vec<f64> = n.points().map(|p| p.y).collect();
        assert_eq!(ys, vec![0.0, 1.0 / 3.0, 1.0]);
    }

    #[test]
    fn normalize_two_points() {
        let n = normalize(&sketch(&[&[(10.0, 20.0), (30.0, 60.0)]]));
        let pts: Vec<Point> = n.points().copied().collect();
        assert_eq!(pts, vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0)]);
    }

    #[test]
    fn normalize_single_point() {
        let n = normalize(&sketch(&[&[(3.0, 4.0)]]));
        assert_eq!(n.strokes[0].first(), Point::new(0.5, 0.5));
    }

    #[test]
    fn encode_end_flags() {
        let e = encode(&normalize(&sketch(&[&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]]))).unwrap();
        let ends: Vec<f64> = e.rows().iter().map(|r| r[2]).collect();
        assert_eq!(ends, vec![0.0, 0.0, 1.0]);

        let e = encode(&normalize(&sketch(&[
            &[(0.0, 0.0), (1.0, 1.0)],
            &[(2.0, 0.0), (3.0, 3.0)],
        ])))
        .unwrap();
        let ends: Vec<f64> = e.rows().iter().map(|r| r[2]).collect();
        assert_eq!(ends, vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(e.len(), 4);
    }

    #[test]
    fn encode_rows_match_normalized_points() {
        let s = sketch(&[
            &[(10.0, 200.0), (20.0, 180.0), (40.0, 100.0)],
            &[(80.0, 10.0)],
            &[(110.0, 50.0), (60.0, 60.0)],
        ]);
        let n = normalize(&s);
        let e = encode(&n).unwrap();
        assert_eq!(e.len(), 6);
        for (row, p) in e.rows().iter().zip(n.points()) {
            assert_eq!(row[0], p.x);
            assert_eq!(row[1], p.y);
        }
        assert_eq!(e.label, Some(0));
        // x range [10, 110], y range [10, 200]
        assert_eq!(e.rows()[1][0], 0.1);
        assert_eq!(e.rows()[3][1], 0.0);
    }

    #[test]
    fn encode_rejects_unnormalized() {
        let s = sketch(&[&[(0.0, 0.0), (2.0, 0.5)]]);
        assert!(matches!(encode(&s), Err(Error::Contract(_))));
    }
}
