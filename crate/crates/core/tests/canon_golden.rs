use stimgen::canon::{
    canonicalize_all, read_jsonl, select_per_sense, underfilled, CanonError, CanonSentence,
    FilterConfig, VerbFormLexicon,
};
use stimgen::lm::TableLm;

const CORPUS: &str = include_str!("fixtures/corpus.jsonl");

fn matches_template(s: &str) -> bool {
    let Some(body) = s.strip_prefix("The ").and_then(|r| r.strip_suffix('.')) else {
        return false;
    };
    let parts: Vec<&str> = body.split(' ').collect();
    let word = |w: &str| !w.is_empty() && w.chars().all(|c| c.is_alphanumeric() || c == '_');
    parts.len() == 4 && word(parts[0]) && word(parts[1]) && parts[2] == "the" && word(parts[3])
}

#[test]
fn worked_examples_are_reproduced() {
    let (records, errors) = read_jsonl(CORPUS);
    assert_eq!(records.len(), 6);
    assert!(matches!(
        errors.as_slice(),
        [CanonError::Json { line: 7, .. }]
    ));

    let cfg = FilterConfig::new(["hit", "smash"]);
    let (out, errors) = canonicalize_all(&records, &cfg, &VerbFormLexicon::default());
    assert_eq!(errors.len(), 1, "{errors:?}");
    assert!(
        matches!(&errors[0], CanonError::Malformed { source_id, .. } if source_id == "reddit-0005")
    );

    let rendered: Vec<(&str, &str)> = out
        .iter()
        .map(|c| (c.source_id.as_str(), c.rendered.as_str()))
        .collect();
    assert_eq!(
        rendered,
        [
            ("reddit-0001", "The resolutioners hit the gym."),
            ("reddit-0002", "The body hit the floor."),
            ("reddit-0006", "The kids smashed the window."),
        ]
    );
    assert_eq!(out[0].sense_tag, "hit.03");
    assert_eq!(out[1].sense_tag, "hit.02");
    assert!(out.iter().all(|c| matches_template(&c.rendered)));
}

#[test]
fn restricting_targets_drops_other_verbs() {
    let (records, _) = read_jsonl(CORPUS);
    let (out, _) = canonicalize_all(
        &records,
        &FilterConfig::new(["hit"]),
        &VerbFormLexicon::default(),
    );
    assert_eq!(out.len(), 2);
}

#[test]
fn template_checker_rejects_near_misses() {
    assert!(matches_template("The body hit the floor."));
    assert!(!matches_template("The body hit a floor."));
    assert!(!matches_template("The body hit the floor"));
    assert!(!matches_template("The big body hit the floor."));
}

fn cand(id: &str, tag: &str, subj: &str) -> CanonSentence {
    CanonSentence {
        subject_noun: subj.into(),
        verb_past: "hit".into(),
        object_noun: "wall".into(),
        rendered: format!("The {subj} hit the wall."),
        sense_tag: tag.into(),
        surprisal: None,
        source_id: id.into(),
    }
}

#[test]
fn selection_keeps_lowest_surprisal_per_sense() {
    // subject probabilities fall with the index, so surprisal rises
    let weights: Vec<f64> = (1..=10).map(|i| 1.0 / i as f64).collect();
    let z: f64 = weights.iter().sum();
    let subj: Vec<String> = (0..10).map(|i| format!("n{i}")).collect();
    let row = subj
        .iter()
        .zip(&weights)
        .map(|(s, w)| format!("\"{s}\": {}", w / z))
        .collect::<Vec<_>>()
        .join(", ");
    let verb_rows: String = subj
        .iter()
        .map(|s| format!(r#", "{s}": {{"hit": 1.0}}"#))
        .collect();
    let lm = TableLm::from_json(&format!(
        r#"{{"": {{"the": 1.0}}, "the": {{{row}}}, "hit the": {{"wall": 1.0}}, "wall": {{"</s>": 1.0}}{verb_rows}}}"#
    ))
    .unwrap();
    let mut cands: Vec<CanonSentence> = (0..10)
        .rev()
        .map(|i| cand(&format!("a{i}"), "hit.01", &subj[i]))
        .collect();
    cands.extend((0..3).map(|i| cand(&format!("b{i}"), "hit.02", &subj[i])));
    let sel = select_per_sense(&cands, &lm, 4);
    assert_eq!(sel.len(), 2);
    let ids: Vec<&str> = sel["hit.01"].iter().map(|c| c.source_id.as_str()).collect();
    assert_eq!(ids, ["a0", "a1", "a2", "a3"]);
    assert_eq!(sel["hit.02"].len(), 3);
    assert!(!sel.contains_key("hit.03"));
    assert_eq!(underfilled(&sel, 4), ["hit.02"]);
    let s: Vec<f64> = sel["hit.01"].iter().map(|c| c.surprisal.unwrap()).collect();
    assert!(s.windows(2).all(|w| w[0] < w[1]));
}
