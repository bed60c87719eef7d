//! Experiment materials: participant z-scoring, calibration-set selection,
//! list assembly, and sense-pair construction.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream, Stream};

/// Minimum score gap, in standard deviations, between two calibration
/// sentences that share a verb.
pub const MIN_VERB_GAP_SD: f64 = 0.5;
pub const MAX_PER_VERB: usize = 2;
pub const DEFAULT_CALIBRATION_SIZE: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StimulusError {
    #[error("rating {rating} by `{participant_id}` for `{sentence_id}` is outside [0, 1]")]
    RatingOutOfRange {
        participant_id: String,
        sentence_id: String,
        rating: f64,
    },
    #[error("target cap {cap} must be positive and below the list total {total}")]
    InvalidListParams { cap: usize, total: usize },
    #[error("list {list} needs {needed} calibration items but only {available} are available after the block")]
    CalibrationExhausted {
        list: usize,
        needed: usize,
        available: usize,
    },
    #[error("duplicate target id `{0}`")]
    DuplicateTarget(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub participant_id: String,
    pub sentence_id: String,
    pub rating: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub sentence_id: String,
    pub verb: String,
    /// Mean of the participant-z-scored ratings.
    pub score: f64,
    pub n_raters: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Standardizes each participant's ratings with their own mean and
/// population standard deviation, then averages per sentence. A
/// participant whose ratings do not vary contributes z = 0. Output is
/// sorted by sentence id.
pub fn zscore_by_participant(
    ratings: &[RatingRecord],
) -> Result<Vec<SentenceScore>, StimulusError> {
    let mut by_participant: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in ratings {
        if !(0.0..=1.0).contains(&r.rating) {
            return Err(StimulusError::RatingOutOfRange {
                participant_id: r.participant_id.clone(),
                sentence_id: r.sentence_id.clone(),
                rating: r.rating,
            });
        }
        by_participant.entry(&r.participant_id).or_default().push(r);
    }
    let mut z_by_sentence: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut verb_of: HashMap<&str, &str> = HashMap::new();
    for rs in by_participant.values() {
        let xs: Vec<f64> = rs.iter().map(|r| r.rating).collect();
        let (m, sd) = (mean(&xs), population_sd(&xs));
        for r in rs {
            let z = if sd > 0.0 { (r.rating - m) / sd } else { 0.0 };
            z_by_sentence.entry(&r.sentence_id).or_default().push(z);
            if let Some(v) = r.verb.as_deref() {
                verb_of.entry(&r.sentence_id).or_insert(v);
            }
        }
    }
    Ok(z_by_sentence
        .into_iter()
        .map(|(id, zs)| SentenceScore {
            sentence_id: id.to_string(),
            verb: verb_of.get(id).copied().unwrap_or_default().to_string(),
            score: mean(&zs),
            n_raters: zs.len(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    /// Selected ids in admission order.
    pub selected: Vec<String>,
    /// The first `block` selections, shown before any target.
    pub initial_block: Vec<String>,
    /// True when fewer than the requested number were admissible.
    pub shortfall: bool,
}

/// Greedy calibration selection. Sentences are visited by increasing
/// distance from the mean score; a sentence is admitted when it does not
/// pull the subset mean away from the overall mean, its verb has fewer
/// than two admitted sentences, and a second sentence of a verb differs
/// from the first by at least half a standard deviation. Ties in distance
/// are visited by sentence id.
pub fn select_calibration(scores: &[SentenceScore], k: usize, block: usize) -> CalibrationSet {
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let (m, sd) = if values.is_empty() {
        (0.0, 0.0)
    } else {
        (mean(&values), population_sd(&values))
    };
    let mut order: Vec<&SentenceScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        (a.score - m)
            .abs()
            .total_cmp(&(b.score - m).abs())
            .then_with(|| a.sentence_id.cmp(&b.sentence_id))
    });
    let mut selected: Vec<String> = Vec::new();
    let mut per_verb: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut sum = 0.0;
    for s in order {
        if selected.len() == k {
            break;
        }
        if !selected.is_empty() {
            let subset_mean = sum / selected.len() as f64;
            if (s.score - subset_mean) * (m - subset_mean) < 0.0 {
                continue;
            }
        }
        let prior = per_verb.get(s.verb.as_str()).map_or(&[][..], Vec::as_slice);
        if prior.len() >= MAX_PER_VERB
            || prior
                .iter()
                .any(|p| (p - s.score).abs() < MIN_VERB_GAP_SD * sd)
        {
            continue;
        }
        per_verb.entry(&s.verb).or_default().push(s.score);
        sum += s.score;
        selected.push(s.sentence_id.clone());
    }
    CalibrationSet {
        initial_block: selected.iter().take(block).cloned().collect(),
        shortfall: selected.len() < k,
        selected,
    }
}

/// Post-hoc check of the calibration constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAudit {
    pub global_mean: f64,
    pub subset_mean: f64,
    pub max_per_verb: usize,
    /// Smallest same-verb score gap in standard deviations, if any verb
    /// appears twice.
    pub min_same_verb_gap_sd: Option<f64>,
}

impl CalibrationAudit {
    pub fn satisfied(&self) -> bool {
        self.max_per_verb <= MAX_PER_VERB
            && self
                .min_same_verb_gap_sd
                .is_none_or(|g| g >= MIN_VERB_GAP_SD)
    }
}

pub fn audit_calibration(set: &CalibrationSet, scores: &[SentenceScore]) -> CalibrationAudit {
    let by_id: HashMap<&str, &SentenceScore> =
        scores.iter().map(|s| (s.sentence_id.as_str(), s)).collect();
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let sd = population_sd(&values);
    let chosen: Vec<&SentenceScore> = set
        .selected
        .iter()
        .filter_map(|id| by_id.get(id.as_str()).copied())
        .collect();
    let mut per_verb: HashMap<&str, Vec<f64>> = HashMap::new();
    for s in &chosen {
        per_verb.entry(&s.verb).or_default().push(s.score);
    }
    let mut min_gap: Option<f64> = None;
    for v in per_verb.values() {
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let g = if sd > 0.0 {
                    (v[i] - v[j]).abs() / sd
                } else {
                    0.0
                };
                min_gap = Some(min_gap.map_or(g, |m: f64| m.min(g)));
            }
        }
    }
    let chosen_values: Vec<f64> = chosen.iter().map(|s| s.score).collect();
    CalibrationAudit {
        global_mean: mean(&values),
        subset_mean: if chosen_values.is_empty() {
            f64::NAN
        } else {
            mean(&chosen_values)
        },
        max_per_verb: per_verb.values().map(Vec::len).max().unwrap_or(0),
        min_same_verb_gap_sd: min_gap,
    }
}

/// Shape of one survey list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListParams {
    /// Items per list after the calibration block.
    pub total: usize,
    /// Most targets (or pairs) allowed in one list.
    pub target_cap: usize,
    /// Calibration items shown before the targets.
    pub block: usize,
    pub practice: usize,
}

impl ListParams {
    pub const RATING: ListParams = ListParams {
        total: 89,
        target_cap: 59,
        block: 8,
        practice: 3,
    };
    pub const PAIRS: ListParams = ListParams {
        total: 62,
        target_cap: 60,
        block: 6,
        practice: 2,
    };

    /// Items a participant sees: practice, calibration block, and list.
    pub fn survey_length(&self) -> usize {
        self.total + self.block + self.practice
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Target,
    Calibration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListItem {
    pub id: String,
    pub kind: ItemKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusList {
    /// 1-based.
    pub list_number: usize,
    /// Calibration block shown before the list.
    pub block: Vec<String>,
    pub items: Vec<ListItem>,
    pub target_count: usize,
    pub total: usize,
    /// Positions of calibration items within `items`.
    pub calibration_positions: Vec<usize>,
}

/// Splits shuffled targets into the fewest lists that respect the cap,
/// with sizes differing by at most one, and pads each list with the
/// post-block calibration items in selection order. Calibration items
/// are interleaved at seeded random positions. When `cycle` is set a
/// short calibration pool is reused from its start.
pub fn make_lists(
    targets: &[String],
    calibration: &CalibrationSet,
    params: ListParams,
    seed: u64,
    cycle: bool,
) -> Result<Vec<StimulusList>, StimulusError> {
    if params.target_cap == 0 || params.target_cap >= params.total {
        return Err(StimulusError::InvalidListParams {
            cap: params.target_cap,
            total: params.total,
        });
    }
    let mut seen = std::collections::HashSet::new();
    for t in targets {
        if !seen.insert(t) {
            return Err(StimulusError::DuplicateTarget(t.clone()));
        }
    }
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let mut shuffled = targets.to_vec();
    shuffled.shuffle(&mut substream(seed, Stream::Shuffle));

    let n_lists = targets.len().div_ceil(params.target_cap);
    let base = targets.len() / n_lists;
    let extra = targets.len() % n_lists;
    let block: Vec<String> = calibration
        .selected
        .iter()
        .take(params.block)
        .cloned()
        .collect();
    let pool = &calibration.selected[block.len()..];
    let mut interleave = substream(seed, Stream::Interleave);

    let mut lists = Vec::with_capacity(n_lists);
    let mut next = 0;
    for list in 0..n_lists {
        let size = base + usize::from(list < extra);
        let chunk = &shuffled[next..next + size];
        next += size;
        let needed = params.total - size;
        if needed > pool.len() && (!cycle || pool.is_empty()) {
            return Err(StimulusError::CalibrationExhausted {
                list: list + 1,
                needed,
                available: pool.len(),
            });
        }
        let padding: Vec<&String> = pool.iter().cycle().take(needed).collect();
        let mut slots: Vec<bool> = (0..params.total).map(|i| i < needed).collect();
        slots.shuffle(&mut interleave);
        let (mut ti, mut ci) = (0, 0);
        let mut items = Vec::with_capacity(params.total);
        let mut positions = Vec::with_capacity(needed);
        for (pos, is_cal) in slots.into_iter().enumerate() {
            if is_cal {
                items.push(ListItem {
                    id: padding[ci].clone(),
                    kind: ItemKind::Calibration,
                });
                positions.push(pos);
                ci += 1;
            } else {
                items.push(ListItem {
                    id: chunk[ti].clone(),
                    kind: ItemKind::Target,
                });
                ti += 1;
            }
        }
        lists.push(StimulusList {
            list_number: list + 1,
            block: block.clone(),
            items,
            target_count: size,
            total: params.total,
            calibration_positions: positions,
        });
    }
    Ok(lists)
}

/// One scored sentence available for pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCandidate {
    pub sentence_id: String,
    pub verb: String,
    pub sense_id: String,
    /// Sum of the z-scored naturalness and typicality ratings.
    pub z_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairType {
    SameSense,
    DifferentSense,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub pair_id: String,
    pub sentence_a: String,
    pub sentence_b: String,
    pub verb: String,
    pub pair_type: PairType,
    pub senses: (String, String),
}

/// Sums two score tables over the sentences present in both.
pub fn z_sums(a: &[SentenceScore], b: &[SentenceScore]) -> BTreeMap<String, f64> {
    let b: HashMap<&str, f64> = b
        .iter()
        .map(|s| (s.sentence_id.as_str(), s.score))
        .collect();
    a.iter()
        .filter_map(|s| {
            b.get(s.sentence_id.as_str())
                .map(|y| (s.sentence_id.clone(), s.score + y))
        })
        .collect()
}

/// Builds same-sense pairs from the two best sentences of each sense and
/// different-sense pairs from the best sentence of every two senses of a
/// verb. Senses with one sentence give no same-sense pair. Ranking is by
/// descending z-sum, ties by sentence id.
pub fn make_pairs(candidates: &[PairCandidate]) -> Vec<SentencePair> {
    let mut by_verb: BTreeMap<&str, BTreeMap<&str, Vec<&PairCandidate>>> = BTreeMap::new();
    for c in candidates {
        by_verb
            .entry(&c.verb)
            .or_default()
            .entry(&c.sense_id)
            .or_default()
            .push(c);
    }
    let mut pairs = Vec::new();
    for (verb, senses) in &mut by_verb {
        for list in senses.values_mut() {
            list.sort_by(|a, b| {
                b.z_sum
                    .total_cmp(&a.z_sum)
                    .then_with(|| a.sentence_id.cmp(&b.sentence_id))
            });
        }
        for (sense, list) in senses.iter() {
            if list.len() >= 2 {
                pairs.push(SentencePair {
                    pair_id: format!("{verb}:{sense}:{sense}"),
                    sentence_a: list[0].sentence_id.clone(),
                    sentence_b: list[1].sentence_id.clone(),
                    verb: verb.to_string(),
                    pair_type: PairType::SameSense,
                    senses: (sense.to_string(), sense.to_string()),
                });
            }
        }
        let tops: Vec<(&str, &PairCandidate)> = senses.iter().map(|(s, l)| (*s, l[0])).collect();
        for i in 0..tops.len() {
            for j in i + 1..tops.len() {
                let ((sa, a), (sb, b)) = (tops[i], tops[j]);
                pairs.push(SentencePair {
                    pair_id: format!("{verb}:{sa}:{sb}"),
                    sentence_a: a.sentence_id.clone(),
                    sentence_b: b.sentence_id.clone(),
                    verb: verb.to_string(),
                    pair_type: PairType::DifferentSense,
                    senses: (sa.to_string(), sb.to_string()),
                });
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(p: &str, s: &str, x: f64) -> RatingRecord {
        RatingRecord {
            participant_id: p.into(),
            sentence_id: s.into(),
            rating: x,
            verb: None,
        }
    }

    #[test]
    fn two_point_z() {
        let out = zscore_by_participant(&[r("p", "a", 0.2), r("p", "b", 0.8)]).unwrap();
        assert!((out[0].score + 1.0).abs() < 1e-12);
        assert!((out[1].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_use_cancels() {
        let a =
            zscore_by_participant(&[r("p", "a", 0.1), r("p", "b", 0.3), r("p", "c", 0.2)]).unwrap();
        let b =
            zscore_by_participant(&[r("q", "a", 0.5), r("q", "b", 0.9), r("q", "c", 0.7)]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.score - y.score).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_rater_is_zero_and_range_checked() {
        let out = zscore_by_participant(&[r("p", "a", 0.5), r("p", "b", 0.5)]).unwrap();
        assert!(out.iter().all(|s| s.score == 0.0));
        assert!(zscore_by_participant(&[r("p", "a", 1.5)]).is_err());
    }

    fn score(id: &str, verb: &str, x: f64) -> SentenceScore {
        SentenceScore {
            sentence_id: id.into(),
            verb: verb.into(),
            score: x,
            n_raters: 5,
        }
    }

    #[test]
    fn closest_first() {
        let s = [
            score("a", "v1", -1.0),
            score("b", "v2", 0.1),
            score("c", "v3", 1.0),
            score("d", "v4", -0.1),
        ];
        let c = select_calibration(&s, 4, 2);
        assert_eq!(c.selected[0], "b");
        assert_eq!(c.initial_block.len(), 2);
    }

    #[test]
    fn same_verb_gap_enforced() {
        let s = [
            score("a", "v", 0.0),
            score("b", "v", 0.05),
            score("c", "w", 1.0),
            score("d", "x", -1.0),
        ];
        let c = select_calibration(&s, 4, 8);
        assert!(!c.selected.contains(&"b".to_string()));
        assert!(c.shortfall);
        assert!(audit_calibration(&c, &s).satisfied());
    }

    fn cal(n: usize) -> CalibrationSet {
        let selected: Vec<String> = (0..n).map(|i| format!("cal{i}")).collect();
        CalibrationSet {
            initial_block: selected[..8].to_vec(),
            selected,
            shortfall: false,
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn list_arithmetic() {
        let lists = make_lists(&ids(367), &cal(50), ListParams::RATING, 0, false).unwrap();
        assert_eq!(lists.len(), 7);
        assert!(lists
            .iter()
            .all(|l| l.items.len() == 89 && l.target_count <= 59));
        let lists = make_lists(&ids(59), &cal(50), ListParams::RATING, 0, false).unwrap();
        assert_eq!((lists.len(), lists[0].target_count), (1, 59));
        let sizes: Vec<usize> = make_lists(&ids(120), &cal(50), ListParams::RATING, 0, true)
            .unwrap()
            .iter()
            .map(|l| l.target_count)
            .collect();
        assert_eq!(sizes, [40, 40, 40]);
        assert_eq!(ListParams::RATING.survey_length(), 100);
        assert_eq!(ListParams::PAIRS.survey_length(), 70);
    }

    #[test]
    fn padding_follows_calibration_order() {
        let lists = make_lists(&ids(110), &cal(50), ListParams::RATING, 4, false).unwrap();
        for l in &lists {
            let pads: Vec<&str> = l
                .items
                .iter()
                .filter(|i| i.kind == ItemKind::Calibration)
                .map(|i| i.id.as_str())
                .collect();
            let expected: Vec<String> = (8..8 + pads.len()).map(|i| format!("cal{i}")).collect();
            assert_eq!(
                pads,
                expected.iter().map(String::as_str).collect::<Vec<_>>()
            );
            for &p in &l.calibration_positions {
                assert_eq!(l.items[p].kind, ItemKind::Calibration);
            }
        }
    }

    #[test]
    fn exhausted_calibration() {
        assert!(matches!(
            make_lists(&ids(10), &cal(20), ListParams::RATING, 0, false),
            Err(StimulusError::CalibrationExhausted { .. })
        ));
        let lists = make_lists(&ids(10), &cal(20), ListParams::RATING, 0, true).unwrap();
        assert_eq!(lists[0].items.len(), 89);
    }

    fn pc(id: &str, verb: &str, sense: &str, z: f64) -> PairCandidate {
        PairCandidate {
            sentence_id: id.into(),
            verb: verb.into(),
            sense_id: sense.into(),
            z_sum: z,
        }
    }

    #[test]
    fn pair_counts() {
        let mut c = Vec::new();
        for s in 0..3 {
            for k in 0..3 {
                c.push(pc(
                    &format!("s{s}k{k}"),
                    "hit",
                    &format!("hit.0{s}"),
                    k as f64,
                ));
            }
        }
        let pairs = make_pairs(&c);
        assert_eq!(pairs.len(), 6);
        let same: Vec<_> = pairs
            .iter()
            .filter(|p| p.pair_type == PairType::SameSense)
            .collect();
        assert_eq!(same.len(), 3);
        assert_eq!(
            (same[0].sentence_a.as_str(), same[0].sentence_b.as_str()),
            ("s0k2", "s0k1")
        );
        assert_eq!(
            make_pairs(&[
                pc("a", "kick", "kick.01", 1.0),
                pc("b", "kick", "kick.01", 0.0)
            ])
            .len(),
            1
        );
    }
}
