//! Browser demo. Each exported function takes plain strings and returns a
//! JSON string, so the page needs no bindings beyond `wasm-bindgen`.

use serde_json::{json, Value};
use stimgen::lm::{
    apply_sampler_chain, conditional_surprisal, lookup, render_sentence, tokenize, LanguageModel,
    ModelFile, SamplerConfig, REPEAT_WINDOW,
};
use stimgen::sampler::{constrained_dist, sample_constrained};
use stimgen::{parse_grammar, Next, Parser, ParserState, TokenDist};
use wasm_bindgen::prelude::*;

fn load(grammar: &str, model: &str) -> Result<(Parser, ModelFile), String> {
    let lm = ModelFile::from_json(model).map_err(|e| format!("model: {e}"))?;
    let mut g = parse_grammar(grammar).map_err(|e| format!("grammar: {e}"))?;
    if g.has_wildcards() {
        g = g
            .desugar_wildcards(&lm.vocab().content_tokens())
            .map_err(|e| format!("grammar: {e}"))?;
    }
    let parser = Parser::new(&g).map_err(|e| format!("grammar: {e}"))?;
    Ok((parser, lm))
}

fn walk(parser: &Parser, prefix: &[String]) -> Result<ParserState, String> {
    let mut state = parser.start();
    for t in prefix {
        state = state.advance(t).map_err(|e| format!("prefix: {e}"))?;
    }
    Ok(state)
}

fn sampler_config(config: &str) -> Result<SamplerConfig, String> {
    let cfg: SamplerConfig = if config.trim().is_empty() {
        SamplerConfig::default()
    } else {
        serde_json::from_str(config).map_err(|e| format!("config: {e}"))?
    };
    cfg.validate().map_err(|e| format!("config: {e}"))?;
    Ok(cfg)
}

fn label(n: &Next) -> String {
    n.token().unwrap_or("</s>").to_string()
}

fn rows(d: &TokenDist) -> Vec<Value> {
    let mut out: Vec<(String, f64)> = d.outcomes().map(|(n, p)| (label(&n), p)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.into_iter()
        .map(|(t, p)| json!({"token": t, "p": p}))
        .collect()
}

/// Next-token table after `prefix`: parser constraint, model probability,
/// and their renormalized product.
pub fn constraint_table(
    grammar: &str,
    model: &str,
    prompt: &str,
    prefix: &str,
) -> Result<String, String> {
    let (parser, lm) = load(grammar, model)?;
    let prefix = tokenize(prefix);
    let state = walk(&parser, &prefix)?;
    let mut context = tokenize(prompt);
    context.extend(prefix.iter().cloned());
    let c = state.next_dist();
    let q = lm.next_token_dist(&context);
    let product = constrained_dist(&lm, &state, &context);
    let table: Vec<Value> = c
        .outcomes()
        .map(|(n, pc)| {
            json!({
                "token": label(&n),
                "constraint": pc,
                "lm": lookup(lm.vocab(), &q, &n),
                "product": product.as_ref().map_or(0.0, |d| d.outcome_prob(&n)),
            })
        })
        .collect();
    Ok(json!({
        "prefix_probability": state.prefix_probability(),
        "string_probability": state.string_probability(),
        "dead_end": product.is_none(),
        "rows": table,
    })
    .to_string())
}

/// The constrained distribution after `prefix`, before and after the
/// sampler chain.
pub fn chain_explorer(
    grammar: &str,
    model: &str,
    prompt: &str,
    prefix: &str,
    config: &str,
) -> Result<String, String> {
    let (parser, lm) = load(grammar, model)?;
    let cfg = sampler_config(config)?;
    let prefix = tokenize(prefix);
    let state = walk(&parser, &prefix)?;
    let mut context = tokenize(prompt);
    context.extend(prefix.iter().cloned());
    let before =
        constrained_dist(&lm, &state, &context).ok_or("dead end: no token is allowed by both")?;
    let history = &context[context.len().saturating_sub(REPEAT_WINDOW)..];
    let after = apply_sampler_chain(&before, &cfg, history);
    Ok(json!({"before": rows(&before), "after": rows(&after)}).to_string())
}

/// Draws `n` constrained samples with consecutive seeds starting at the
/// configured one.
pub fn generate(
    grammar: &str,
    model: &str,
    prompt: &str,
    config: &str,
    n: u32,
) -> Result<String, String> {
    let (parser, lm) = load(grammar, model)?;
    let base = sampler_config(config)?;
    let prompt = tokenize(prompt);
    let mut out = Vec::new();
    for i in 0..u64::from(n) {
        let cfg = SamplerConfig {
            seed: base.seed.wrapping_add(i),
            ..base.clone()
        };
        let entry = match sample_constrained(&lm, &parser, &prompt, &cfg) {
            Ok(s) => json!({
                "seed": cfg.seed,
                "text": render_sentence(&s.tokens),
                "terminated": s.terminated,
                "surprisal": conditional_surprisal(&lm, &prompt, &s.tokens),
            }),
            Err(e) => json!({"seed": cfg.seed, "error": e.to_string()}),
        };
        out.push(entry);
    }
    Ok(Value::Array(out).to_string())
}

#[wasm_bindgen(js_name = constraintTable)]
pub fn constraint_table_js(
    grammar: &str,
    model: &str,
    prompt: &str,
    prefix: &str,
) -> Result<String, JsError> {
    constraint_table(grammar, model, prompt, prefix).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = chainExplorer)]
pub fn chain_explorer_js(
    grammar: &str,
    model: &str,
    prompt: &str,
    prefix: &str,
    config: &str,
) -> Result<String, JsError> {
    chain_explorer(grammar, model, prompt, prefix, config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = generate)]
pub fn generate_js(
    grammar: &str,
    model: &str,
    prompt: &str,
    config: &str,
    n: u32,
) -> Result<String, JsError> {
    generate(grammar, model, prompt, config, n).map_err(|e| JsError::new(&e))
}
