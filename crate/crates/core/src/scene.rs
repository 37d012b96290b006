//! Rule-based scene categorization from object detections.
//!
//! Detections are counted into three object groups, a precedence-ordered
//! rule list maps the counts to one [`SceneCategory`] per frame, and the
//! frame categories are aggregated into one category per sequence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::SceneError;
use crate::filter::FrameRef;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SceneCategory {
    City,
    PedestrianTraffic,
    Freeway,
    Rural,
    Unknown,
}

impl SceneCategory {
    pub const ALL: [SceneCategory; 5] = [
        SceneCategory::City,
        SceneCategory::PedestrianTraffic,
        SceneCategory::Freeway,
        SceneCategory::Rural,
        SceneCategory::Unknown,
    ];

    /// Tie-break rank for sequence aggregation; lower wins.
    fn tie_rank(self) -> u8 {
        match self {
            SceneCategory::City => 0,
            SceneCategory::Freeway => 1,
            SceneCategory::PedestrianTraffic => 2,
            SceneCategory::Rural => 3,
            SceneCategory::Unknown => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SceneCategory::City => "City",
            SceneCategory::PedestrianTraffic => "PedestrianTraffic",
            SceneCategory::Freeway => "Freeway",
            SceneCategory::Rural => "Rural",
            SceneCategory::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for SceneCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "city" => Ok(SceneCategory::City),
            "pedestriantraffic" | "pedestrian" => Ok(SceneCategory::PedestrianTraffic),
            "freeway" => Ok(SceneCategory::Freeway),
            "rural" => Ok(SceneCategory::Rural),
            "unknown" => Ok(SceneCategory::Unknown),
            _ => Err(format!(
                "unknown scene `{s}` (expected City|PedestrianTraffic|Freeway|Rural|Unknown)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GroupCounts {
    pub vehicles: u32,
    pub people: u32,
    pub urban_vehicle: u32,
}

impl GroupCounts {
    pub fn new(vehicles: u32, people: u32, urban_vehicle: u32) -> Self {
        Self {
            vehicles,
            people,
            urban_vehicle,
        }
    }
}

/// Label sets for each object group. Matching is exact and case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectGroups {
    pub vehicles: BTreeSet<String>,
    pub people: BTreeSet<String>,
    pub urban_vehicle: BTreeSet<String>,
}

impl Default for ObjectGroups {
    fn default() -> Self {
        let set = |labels: &[&str]| labels.iter().map(|s| s.to_string()).collect();
        Self {
            vehicles: set(&["Car", "Van", "Truck"]),
            people: set(&["Pedestrian", "Person_sitting", "Cyclist"]),
            urban_vehicle: set(&["Tram"]),
        }
    }
}

impl ObjectGroups {
    pub fn count(&self, dets: &[Detection]) -> GroupCounts {
        let mut counts = GroupCounts::default();
        for d in dets {
            if self.vehicles.contains(&d.label) {
                counts.vehicles += 1;
            } else if self.people.contains(&d.label) {
                counts.people += 1;
            } else if self.urban_vehicle.contains(&d.label) {
                counts.urban_vehicle += 1;
            }
        }
        counts
    }
}

/// Inclusive count bounds; `max: None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountRange {
    #[serde(default)]
    pub min: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<u32>,
}

impl CountRange {
    pub const ANY: CountRange = CountRange { min: 0, max: None };
    pub const ZERO: CountRange = CountRange {
        min: 0,
        max: Some(0),
    };

    pub const fn at_least(min: u32) -> Self {
        Self { min, max: None }
    }

    pub const fn between(min: u32, max: u32) -> Self {
        Self {
            min,
            max: Some(max),
        }
    }

    pub fn contains(&self, v: u32) -> bool {
        v >= self.min && self.max.map_or(true, |m| v <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRule {
    pub category: SceneCategory,
    pub priority: u32,
    #[serde(default)]
    pub vehicles: CountRange,
    #[serde(default)]
    pub people: CountRange,
    #[serde(default)]
    pub urban_vehicle: CountRange,
}

impl SceneRule {
    pub fn matches(&self, c: &GroupCounts) -> bool {
        self.vehicles.contains(c.vehicles)
            && self.people.contains(c.people)
            && self.urban_vehicle.contains(c.urban_vehicle)
    }
}

/// Group membership plus the precedence-ordered rule ladder. Frames that
/// match no rule are `Unknown`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRules {
    #[serde(default)]
    pub groups: ObjectGroups,
    pub rules: Vec<SceneRule>,
}

impl Default for SceneRules {
    fn default() -> Self {
        use CountRange as R;
        let rule = |priority, category, vehicles, people, urban_vehicle| SceneRule {
            category,
            priority,
            vehicles,
            people,
            urban_vehicle,
        };
        // Urban vehicles dominate; every later rung requires none so the
        // rungs are mutually exclusive.
        Self {
            groups: ObjectGroups::default(),
            rules: vec![
                rule(1, SceneCategory::City, R::ANY, R::ANY, R::at_least(1)),
                rule(2, SceneCategory::PedestrianTraffic, R::ZERO, R::at_least(1), R::ZERO),
                rule(3, SceneCategory::Freeway, R::at_least(2), R::ZERO, R::ZERO),
                rule(4, SceneCategory::Rural, R::at_least(1), R::between(1, 2), R::ZERO),
                rule(5, SceneCategory::City, R::at_least(1), R::at_least(3), R::ZERO),
                rule(6, SceneCategory::Rural, R::between(1, 1), R::ZERO, R::ZERO),
            ],
        }
    }
}

impl SceneRules {
    /// Loads a YAML rules file and sorts its rules by priority.
    pub fn from_yaml(text: &str) -> Result<Self, SceneError> {
        let mut rules: SceneRules =
            serde_yaml::from_str(text).map_err(|e| SceneError::Rules(e.to_string()))?;
        if rules.rules.is_empty() {
            return Err(SceneError::Rules("rules list is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for r in &rules.rules {
            if !seen.insert(r.priority) {
                return Err(SceneError::Rules(format!("duplicate priority {}", r.priority)));
            }
            for (name, range) in [
                ("vehicles", r.vehicles),
                ("people", r.people),
                ("urban_vehicle", r.urban_vehicle),
            ] {
                if range.max.is_some_and(|m| m < range.min) {
                    return Err(SceneError::Rules(format!(
                        "rule {} has {name}.max < {name}.min",
                        r.priority
                    )));
                }
            }
        }
        rules.rules.sort_by_key(|r| r.priority);
        Ok(rules)
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SceneError::Rules(format!("{}: {e}", path.display())))?;
        Self::from_yaml(&text)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("rules serialize")
    }

    /// Indices of every rule matching `counts`.
    pub fn matching(&self, counts: &GroupCounts) -> Vec<usize> {
        self.rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.matches(counts))
            .map(|(i, _)| i)
            .collect()
    }

    /// First matching rule in priority order, else `Unknown`.
    pub fn classify(&self, counts: &GroupCounts) -> SceneCategory {
        self.rules
            .iter()
            .find(|r| r.matches(counts))
            .map_or(SceneCategory::Unknown, |r| r.category)
    }

    pub fn classify_detections(&self, dets: &[Detection]) -> SceneCategory {
        self.classify(&self.groups.count(dets))
    }
}

/// Counts detections per object group with the default membership.
pub fn group_counts(dets: &[Detection]) -> GroupCounts {
    ObjectGroups::default().count(dets)
}

/// Classifies counts with the default ladder.
pub fn classify_frame(counts: &GroupCounts) -> SceneCategory {
    SceneRules::default().classify(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceCategorization {
    pub per_frame: BTreeMap<String, SceneCategory>,
    /// Percent of frames per category, all five categories present.
    pub histogram: BTreeMap<SceneCategory, f64>,
    #[serde(rename = "final")]
    pub final_category: SceneCategory,
}

/// Per-category percentages over `categories`.
pub fn histogram<'a>(
    categories: impl IntoIterator<Item = &'a SceneCategory>,
) -> (BTreeMap<SceneCategory, usize>, BTreeMap<SceneCategory, f64>) {
    let mut counts: BTreeMap<SceneCategory, usize> =
        SceneCategory::ALL.iter().map(|c| (*c, 0)).collect();
    let mut total = 0usize;
    for c in categories {
        *counts.entry(*c).or_default() += 1;
        total += 1;
    }
    let percent = counts
        .iter()
        .map(|(c, n)| {
            let p = if total == 0 { 0.0 } else { *n as f64 * 100.0 / total as f64 };
            (*c, p)
        })
        .collect();
    (counts, percent)
}

/// Picks the most frequent non-`Unknown` category, breaking ties
/// City > Freeway > PedestrianTraffic > Rural. `Unknown` only when nothing
/// else is present.
pub fn dominant_category(counts: &BTreeMap<SceneCategory, usize>) -> SceneCategory {
    counts
        .iter()
        .filter(|(c, n)| **c != SceneCategory::Unknown && **n > 0)
        .max_by(|(ca, na), (cb, nb)| na.cmp(nb).then(cb.tie_rank().cmp(&ca.tie_rank())))
        .map_or(SceneCategory::Unknown, |(c, _)| *c)
}

pub fn classify_sequence(
    per_frame: &BTreeMap<String, SceneCategory>,
) -> Result<SequenceCategorization, SceneError> {
    if per_frame.is_empty() {
        return Err(SceneError::Argument("no frames to categorize".into()));
    }
    let (counts, histogram) = histogram(per_frame.values());
    Ok(SequenceCategorization {
        per_frame: per_frame.clone(),
        histogram,
        final_category: dominant_category(&counts),
    })
}

/// A frame's detections and the scene they produce.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedFrame {
    pub scene: SceneCategory,
    pub detections: Vec<Detection>,
}

/// Fetches detections for every frame on `workers` threads and classifies
/// each one. Output order follows `frames`.
pub fn tag_frames<F, E>(
    frames: &[FrameRef],
    rules: &SceneRules,
    workers: usize,
    fetch: F,
) -> Result<Vec<TaggedFrame>, E>
where
    F: Fn(&FrameRef) -> Result<Vec<Detection>, E> + Sync + Send,
    E: Send,
{
    par::map_ordered(frames, workers, |frame| {
        fetch(frame).map(|detections| TaggedFrame {
            scene: rules.classify_detections(&detections),
            detections,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::BBox;

    fn dets(labels: &[&str]) -> Vec<Detection> {
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        labels
            .iter()
            .map(|l| Detection::new(*l, 1.0, b).unwrap())
            .collect()
    }

    #[test]
    fn group_count_examples() {
        assert_eq!(group_counts(&dets(&["Car", "Van", "Pedestrian"])), GroupCounts::new(2, 1, 0));
        assert_eq!(group_counts(&dets(&["toothbrush", "Tram"])), GroupCounts::new(0, 0, 1));
        assert_eq!(group_counts(&[]), GroupCounts::default());
        // exact match only
        assert_eq!(group_counts(&dets(&["car", "Misc"])), GroupCounts::default());
    }

    #[test]
    fn ladder_examples() {
        let c = |v, p, u| classify_frame(&GroupCounts::new(v, p, u));
        assert_eq!(c(4, 4, 1), SceneCategory::City);
        assert_eq!(c(0, 2, 0), SceneCategory::PedestrianTraffic);
        assert_eq!(c(3, 0, 0), SceneCategory::Freeway);
        assert_eq!(c(1, 2, 0), SceneCategory::Rural);
        assert_eq!(c(0, 0, 0), SceneCategory::Unknown);
        assert_eq!(c(2, 0, 0), SceneCategory::Freeway);
        assert_eq!(c(1, 0, 0), SceneCategory::Rural);
        assert_eq!(c(2, 5, 0), SceneCategory::City);
    }

    #[test]
    fn sequence_tie_break_and_unknown() {
        let map = |cats: &[SceneCategory]| -> BTreeMap<String, SceneCategory> {
            cats.iter().enumerate().map(|(i, c)| (format!("{i:06}"), *c)).collect()
        };
        use SceneCategory::*;
        let tied = classify_sequence(&map(&[Rural, Freeway, City, PedestrianTraffic])).unwrap();
        assert_eq!(tied.final_category, City);
        let tied = classify_sequence(&map(&[Rural, Freeway, PedestrianTraffic])).unwrap();
        assert_eq!(tied.final_category, Freeway);
        let mostly_unknown = classify_sequence(&map(&[Unknown, Unknown, Unknown, Rural])).unwrap();
        assert_eq!(mostly_unknown.final_category, Rural);
        let only_unknown = classify_sequence(&map(&[Unknown, Unknown])).unwrap();
        assert_eq!(only_unknown.final_category, Unknown);
        assert_eq!(only_unknown.histogram[&Unknown], 100.0);
        assert!(classify_sequence(&BTreeMap::new()).is_err());
    }

    #[test]
    fn rules_file_round_trip_and_override() {
        let rules = SceneRules::default();
        assert_eq!(SceneRules::from_yaml(&rules.to_yaml()).unwrap(), rules);

        let custom = "
groups:
  vehicles: [Car]
  people: [Pedestrian]
  urban_vehicle: [Bus]
rules:
  - category: Freeway
    priority: 2
    vehicles: {min: 1}
  - category: City
    priority: 1
    urban_vehicle: {min: 1}
";
        let r = SceneRules::from_yaml(custom).unwrap();
        assert_eq!(r.rules[0].category, SceneCategory::City);
        assert_eq!(r.classify_detections(&dets(&["Bus", "Car"])), SceneCategory::City);
        assert_eq!(r.classify_detections(&dets(&["Car"])), SceneCategory::Freeway);
        assert_eq!(r.classify_detections(&dets(&["Van"])), SceneCategory::Unknown);

        assert!(SceneRules::from_yaml("rules: []").is_err());
        let dup = "rules:\n  - {category: City, priority: 1}\n  - {category: Rural, priority: 1}\n";
        assert!(SceneRules::from_yaml(dup).is_err());
        let inverted = "rules:\n  - {category: City, priority: 1, people: {min: 3, max: 1}}\n";
        assert!(SceneRules::from_yaml(inverted).is_err());
    }

    #[test]
    fn category_parsing() {
        assert_eq!("Pedestrian".parse::<SceneCategory>().unwrap(), SceneCategory::PedestrianTraffic);
        assert_eq!("freeway".parse::<SceneCategory>().unwrap(), SceneCategory::Freeway);
        assert!("Highway".parse::<SceneCategory>().is_err());
    }
}
