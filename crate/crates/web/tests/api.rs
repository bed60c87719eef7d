use serde_json::Value;
use stimgen_web::{chain_explorer, constraint_table, generate};

const GRAMMAR: &str = "S -> the N hit the N\nN -> cat (0.5) | dog (0.5)\n";
const MODEL: &str = r#"{"": {"the": 1.0}, "the": {"cat": 0.8, "dog": 0.2}, "cat": {"hit": 1.0},
    "dog": {"hit": 1.0}, "hit": {"the": 1.0}, "cat hit the": {"cat": 0.5, "dog": 0.5},
    "dog hit the": {"cat": 0.5, "dog": 0.5}, "hit the cat": {"</s>": 1.0}, "hit the dog": {"</s>": 1.0}}"#;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn table_shows_product_of_constraint_and_model() {
    let v = parse(&constraint_table(GRAMMAR, MODEL, "", "the").unwrap());
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let cat = rows.iter().find(|r| r["token"] == "cat").unwrap();
    assert_eq!(cat["constraint"], 0.5);
    assert!((cat["product"].as_f64().unwrap() - 0.8).abs() < 1e-12);
    assert_eq!(v["dead_end"], false);
    let forced = parse(&constraint_table(GRAMMAR, MODEL, "", "the cat").unwrap());
    assert_eq!(forced["rows"][0]["product"], 1.0);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(constraint_table("S ->", MODEL, "", "")
        .unwrap_err()
        .starts_with("grammar"));
    assert!(constraint_table(GRAMMAR, "[", "", "")
        .unwrap_err()
        .starts_with("model"));
    assert!(constraint_table(GRAMMAR, MODEL, "", "hit")
        .unwrap_err()
        .starts_with("prefix"));
    assert!(chain_explorer(GRAMMAR, MODEL, "", "", r#"{"top_p": 2}"#).is_err());
}

#[test]
fn chain_truncates() {
    let v = parse(&chain_explorer(GRAMMAR, MODEL, "", "the", r#"{"top_k": 1}"#).unwrap());
    assert_eq!(v["before"].as_array().unwrap().len(), 2);
    assert_eq!(v["after"].as_array().unwrap().len(), 1);
    assert_eq!(v["after"][0]["token"], "cat");
}

#[test]
fn generation_is_seeded_and_grammatical() {
    let a = generate(GRAMMAR, MODEL, "", r#"{"seed": 3}"#, 5).unwrap();
    assert_eq!(
        a,
        generate(GRAMMAR, MODEL, "", r#"{"seed": 3}"#, 5).unwrap()
    );
    for s in parse(&a).as_array().unwrap() {
        let text = s["text"].as_str().unwrap();
        assert!(
            text.starts_with("The ") && text.contains(" hit the "),
            "{text}"
        );
    }
}
