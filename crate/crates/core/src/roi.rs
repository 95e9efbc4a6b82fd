//! Region-of-interest boxes: selection from region scores, extension,
//! 3-decimal quantization and the `[w0, w1, h0, h1]` answer grammar.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relevance::RegionScores;

/// Grid step of quantized coordinates.
pub const QUANTUM: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoiError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("box {0} is not on the 0.001 grid")]
    NotQuantized(RoiBox),
}

/// Normalized rectangle: horizontal bounds `w0 < w1`, vertical bounds
/// `h0 < h1`, all within `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct RoiBox {
    w0: f64,
    w1: f64,
    h0: f64,
    h1: f64,
}

impl RoiBox {
    pub const FULL: RoiBox = RoiBox {
        w0: 0.0,
        w1: 1.0,
        h0: 0.0,
        h1: 1.0,
    };

    pub fn new(w0: f64, w1: f64, h0: f64, h1: f64) -> Result<Self, RoiError> {
        let coords = [w0, w1, h0, h1];
        if coords
            .iter()
            .any(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(RoiError::InvalidBox(format!(
                "coordinates {coords:?} must lie in [0, 1]"
            )));
        }
        if w0 >= w1 {
            return Err(RoiError::InvalidBox(format!("w0 {w0} >= w1 {w1}")));
        }
        if h0 >= h1 {
            return Err(RoiError::InvalidBox(format!("h0 {h0} >= h1 {h1}")));
        }
        Ok(Self { w0, w1, h0, h1 })
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn h1(&self) -> f64 {
        self.h1
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w0, self.w1, self.h0, self.h1]
    }

    pub fn width(&self) -> f64 {
        self.w1 - self.w0
    }

    pub fn height(&self) -> f64 {
        self.h1 - self.h0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, other: &RoiBox) -> bool {
        self.w0 <= other.w0 && self.w1 >= other.w1 && self.h0 <= other.h0 && self.h1 >= other.h1
    }

    /// True when every coordinate is the double nearest some `k / 1000`.
    pub fn is_quantized(&self) -> bool {
        self.to_array().iter().all(|&v| round_to_grid(v) == v)
    }
}

impl TryFrom<[f64; 4]> for RoiBox {
    type Error = RoiError;

    fn try_from([w0, w1, h0, h1]: [f64; 4]) -> Result<Self, Self::Error> {
        RoiBox::new(w0, w1, h0, h1)
    }
}

impl From<RoiBox> for [f64; 4] {
    fn from(b: RoiBox) -> Self {
        b.to_array()
    }
}

impl fmt::Display for RoiBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.w0, self.w1, self.h0, self.h1)
    }
}

/// Candidate region boxes for one image, in the same order as the region
/// tokens of its attention dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionCatalog {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    pub width: u32,
    pub height: u32,
    pub regions: Vec<RoiBox>,
}

/// Round half up onto the 0.001 grid. The `1e-9` nudge makes decimal
/// halves such as `0.1235` (stored slightly below the half) round up.
fn round_to_grid(v: f64) -> f64 {
    (v * 1000.0 + 0.5 + 1e-9).floor() / 1000.0
}

/// Regions whose normalized score reaches `epsilon`. Never empty: when no
/// score qualifies, the first maximal region is selected alone.
pub fn threshold_mask(scores: &RegionScores, epsilon: f64) -> Result<Vec<bool>, RoiError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(RoiError::Parameter(format!(
            "epsilon {epsilon} outside (0, 1]"
        )));
    }
    if scores.scores.is_empty() {
        return Err(RoiError::Precondition("no region scores".into()));
    }
    let mut mask: Vec<bool> = scores.scores.iter().map(|&s| s >= epsilon).collect();
    if !mask.contains(&true) {
        let mut best = 0;
        for (i, &s) in scores.scores.iter().enumerate() {
            if s > scores.scores[best] {
                best = i;
            }
        }
        mask[best] = true;
    }
    Ok(mask)
}

/// Tight axis-aligned union of the selected catalog boxes.
pub fn union_bbox(catalog: &RegionCatalog, mask: &[bool]) -> Result<RoiBox, RoiError> {
    if mask.len() != catalog.regions.len() {
        return Err(RoiError::Precondition(format!(
            "mask has {} entries for {} regions",
            mask.len(),
            catalog.regions.len()
        )));
    }
    catalog
        .regions
        .iter()
        .zip(mask)
        .filter(|(_, &keep)| keep)
        .map(|(b, _)| *b)
        .reduce(|acc, b| RoiBox {
            w0: acc.w0.min(b.w0),
            w1: acc.w1.max(b.w1),
            h0: acc.h0.min(b.h0),
            h1: acc.h1.max(b.h1),
        })
        .ok_or_else(|| RoiError::Precondition("mask selects no region".into()))
}

/// Moves each side outward by `margin` (normalized units) and clamps to the
/// unit square. Negative margins are treated as zero.
pub fn extend_clamp(b: RoiBox, margin: f64) -> RoiBox {
    let m = if margin > 0.0 { margin } else { 0.0 };
    RoiBox {
        w0: (b.w0 - m).max(0.0),
        w1: (b.w1 + m).min(1.0),
        h0: (b.h0 - m).max(0.0),
        h1: (b.h1 + m).min(1.0),
    }
}

/// Rounds every coordinate half up to 3 decimals. A side that collapses
/// is widened by one quantum, upward unless it already touches 1.
pub fn quantize(b: RoiBox) -> RoiBox {
    let (w0, w1) = widen_collapsed(round_to_grid(b.w0), round_to_grid(b.w1));
    let (h0, h1) = widen_collapsed(round_to_grid(b.h0), round_to_grid(b.h1));
    RoiBox { w0, w1, h0, h1 }
}

fn widen_collapsed(lo: f64, hi: f64) -> (f64, f64) {
    if lo < hi {
        (lo, hi)
    } else if hi < 1.0 {
        (lo, round_to_grid(hi + QUANTUM))
    } else {
        (round_to_grid(lo - QUANTUM), hi)
    }
}

/// Canonical Ans.1 string, e.g. `[0.050, 0.750, 0.050, 0.450]`.
pub fn encode_ans1(b: &RoiBox) -> Result<String, RoiError> {
    if !b.is_quantized() {
        return Err(RoiError::NotQuantized(*b));
    }
    Ok(format!(
        "[{:.3}, {:.3}, {:.3}, {:.3}]",
        b.w0, b.w1, b.h0, b.h1
    ))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Ans1ParseError {
    #[error("no bracketed group of four numbers found")]
    NoBox,
    #[error("box {values:?} is invalid: {reason}")]
    InvalidBox { values: [f64; 4], reason: String },
}

impl Ans1ParseError {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Ans1ParseError::NoBox => "no-box",
            Ans1ParseError::InvalidBox { .. } => "invalid-box",
        }
    }
}

static ANS1_PATTERN: LazyLock<Regex> = LazyLock::new(|| {
    let num = r"([-+]?(?:\d+(?:\.\d*)?|\.\d+))";
    Regex::new(&format!(
        r"\[\s*{num}\s*,\s*{num}\s*,\s*{num}\s*,\s*{num}\s*\]"
    ))
    .expect("static pattern")
});

/// Extracts the first bracketed group of four numbers from free text and
/// validates it as a box after quantization.
pub fn parse_ans1(text: &str) -> Result<RoiBox, Ans1ParseError> {
    let caps = ANS1_PATTERN.captures(text).ok_or(Ans1ParseError::NoBox)?;
    let mut values = [0.0f64; 4];
    for (slot, i) in values.iter_mut().zip(1..=4) {
        let parsed: f64 = caps[i].parse().map_err(|_| Ans1ParseError::NoBox)?;
        *slot = if parsed.is_finite() {
            round_to_grid(parsed)
        } else {
            parsed
        };
    }
    RoiBox::try_from(values).map_err(|e| Ans1ParseError::InvalidBox {
        values,
        reason: match e {
            RoiError::InvalidBox(r) => r,
            other => other.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relevance::Aggregation;

    fn rb(w0: f64, w1: f64, h0: f64, h1: f64) -> RoiBox {
        RoiBox::new(w0, w1, h0, h1).unwrap()
    }

    fn scores(v: &[f64]) -> RegionScores {
        RegionScores {
            scores: v.to_vec(),
            aggregation: Aggregation::Mean,
        }
    }

    fn catalog(boxes: &[RoiBox]) -> RegionCatalog {
        RegionCatalog {
            image_id: "img".into(),
            image_path: None,
            width: 100,
            height: 100,
            regions: boxes.to_vec(),
        }
    }

    fn assert_close(a: RoiBox, b: [f64; 4]) {
        for (x, y) in a.to_array().iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a} vs {b:?}");
        }
    }

    #[test]
    fn box_constructor_enforces_ordering() {
        assert!(RoiBox::new(0.5, 0.5, 0.0, 1.0).is_err());
        assert!(RoiBox::new(0.0, 1.0, 0.7, 0.2).is_err());
        assert!(RoiBox::new(-0.1, 1.0, 0.0, 1.0).is_err());
        assert!(RoiBox::new(0.0, 1.1, 0.0, 1.0).is_err());
        assert!(RoiBox::new(0.0, f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(
            threshold_mask(&scores(&[1.0, 0.4, 0.8]), 0.5).unwrap(),
            vec![true, false, true]
        );
        assert_eq!(
            threshold_mask(&scores(&[0.2, 0.3]), 0.9).unwrap(),
            vec![false, true]
        );
        assert_eq!(
            threshold_mask(&scores(&[0.0, 0.0, 0.0]), 0.5).unwrap(),
            vec![true, false, false]
        );
    }

    #[test]
    fn threshold_rejects_bad_epsilon() {
        for eps in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                threshold_mask(&scores(&[1.0]), eps),
                Err(RoiError::Parameter(_))
            ));
        }
        assert!(threshold_mask(&scores(&[1.0]), 1.0).is_ok());
    }

    #[test]
    fn union_examples() {
        let a = rb(0.1, 0.3, 0.2, 0.4);
        let b = rb(0.5, 0.7, 0.1, 0.3);
        let u = union_bbox(&catalog(&[a, b]), &[true, true]).unwrap();
        assert_eq!(u.to_array(), [0.1, 0.7, 0.1, 0.4]);
        assert_eq!(union_bbox(&catalog(&[a, b]), &[false, true]).unwrap(), b);

        let outer = rb(0.1, 0.9, 0.1, 0.9);
        let inner = rb(0.3, 0.6, 0.2, 0.5);
        assert_eq!(
            union_bbox(&catalog(&[inner, outer]), &[true, true]).unwrap(),
            outer
        );
    }

    #[test]
    fn union_rejects_empty_or_mismatched_mask() {
        let c = catalog(&[RoiBox::FULL]);
        assert!(matches!(
            union_bbox(&c, &[false]),
            Err(RoiError::Precondition(_))
        ));
        assert!(union_bbox(&c, &[true, true]).is_err());
    }

    #[test]
    fn extend_examples() {
        assert_close(
            extend_clamp(rb(0.1, 0.7, 0.1, 0.4), 0.05),
            [0.05, 0.75, 0.05, 0.45],
        );
        assert_close(
            extend_clamp(rb(0.0, 0.98, 0.5, 0.6), 0.05),
            [0.0, 1.0, 0.45, 0.65],
        );
        let b = rb(0.1, 0.7, 0.1, 0.4);
        assert_eq!(extend_clamp(b, 0.0), b);
    }

    #[test]
    fn quantize_examples() {
        let q = quantize(rb(0.12345, 0.5, 0.2, 0.8));
        assert_eq!(q.to_array(), [0.123, 0.5, 0.2, 0.8]);
        let q = quantize(rb(0.4999, 0.5001, 0.1, 0.2));
        assert_eq!(q.to_array(), [0.5, 0.501, 0.1, 0.2]);
        let q = quantize(rb(0.9996, 0.9999, 0.1, 0.2));
        assert_eq!(q.to_array(), [0.999, 1.0, 0.1, 0.2]);
        assert_eq!(quantize(q), q);
    }

    #[test]
    fn quantize_rounds_decimal_halves_up() {
        let q = quantize(rb(0.1235, 0.2, 0.0005, 0.5));
        assert_eq!(q.to_array(), [0.124, 0.2, 0.001, 0.5]);
    }

    #[test]
    fn encode_examples() {
        let b = quantize(rb(0.05, 0.75, 0.05, 0.45));
        assert_eq!(encode_ans1(&b).unwrap(), "[0.050, 0.750, 0.050, 0.450]");
        assert_eq!(
            encode_ans1(&RoiBox::FULL).unwrap(),
            "[0.000, 1.000, 0.000, 1.000]"
        );
        assert!(matches!(
            encode_ans1(&rb(0.12345, 0.5, 0.2, 0.8)),
            Err(RoiError::NotQuantized(_))
        ));
    }

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_ans1("[0.123, 0.500, 0.200, 0.800]")
                .unwrap()
                .to_array(),
            [0.123, 0.5, 0.2, 0.8]
        );
        assert_eq!(
            parse_ans1("Sure. The region is [0.1,0.9,0.2,0.8].")
                .unwrap()
                .to_array(),
            [0.1, 0.9, 0.2, 0.8]
        );
        assert_eq!(
            parse_ans1("the region of interest is unclear"),
            Err(Ans1ParseError::NoBox)
        );
        assert!(matches!(
            parse_ans1("[0.9, 0.1, 0.2, 0.8]"),
            Err(Ans1ParseError::InvalidBox { .. })
        ));
    }

    #[test]
    fn parse_takes_first_four_number_group() {
        let b = parse_ans1("[1, 2] then [0.2, 0.4, 0.1, 0.3] and [0, 1, 0, 1]").unwrap();
        assert_eq!(b.to_array(), [0.2, 0.4, 0.1, 0.3]);
    }

    #[test]
    fn parse_collapse_after_rounding_is_invalid() {
        assert!(matches!(
            parse_ans1("[0.4001, 0.4002, 0.1, 0.2]"),
            Err(Ans1ParseError::InvalidBox { .. })
        ));
    }

    #[test]
    fn catalog_json_shape() {
        let json = r#"{"image_id":"a","width":640,"height":480,"regions":[[0.1,0.2,0.3,0.4]]}"#;
        let c: RegionCatalog = serde_json::from_str(json).unwrap();
        assert_eq!(c.regions[0].to_array(), [0.1, 0.2, 0.3, 0.4]);
        assert_eq!(serde_json::to_string(&c).unwrap(), json);
        let bad = r#"{"image_id":"a","width":1,"height":1,"regions":[[0.4,0.2,0.3,0.4]]}"#;
        assert!(serde_json::from_str::<RegionCatalog>(bad).is_err());
    }
}
