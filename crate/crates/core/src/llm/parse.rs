//! Extraction of the answer, probability and explanation from a model reply.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub answer: bool,
    /// Fraction in `[0, 1]` parsed from a percentage.
    pub probability: Option<f64>,
    pub explanation: String,
}

static ANSWER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\banswer\s*:\s*\**\s*(yes|no)\b").unwrap());
static PROBABILITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bprobability\s+score\s*:\s*\**\s*([0-9]+(?:\.[0-9]+)?)\s*%").unwrap());

/// Uses the last `Answer:` and `Probability score:` tokens in the text; the
/// explanation is everything else, trimmed.
pub fn parse_response(text: &str) -> Result<ParsedPrediction> {
    let Some(ans) = ANSWER.captures_iter(text).last() else {
        return Err(Error::Parse {
            reason: "no `Answer: yes|no` token".into(),
            raw: text.to_string(),
        });
    };
    let answer = ans[1].eq_ignore_ascii_case("yes");
    let mut cut = vec![ans.get(0).unwrap().range()];
    let mut probability = None;
    if let Some(p) = PROBABILITY.captures_iter(text).last() {
        let pct: f64 = p[1].parse().map_err(|_| Error::Parse {
            reason: format!("bad probability `{}`", &p[1]),
            raw: text.to_string(),
        })?;
        if pct > 100.0 {
            return Err(Error::Parse {
                reason: format!("probability {pct}% exceeds 100%"),
                raw: text.to_string(),
            });
        }
        probability = Some(pct / 100.0);
        cut.push(p.get(0).unwrap().range());
    }
    cut.sort_by_key(|r| r.start);
    let mut explanation = String::new();
    let mut pos = 0;
    for r in cut {
        explanation.push_str(&text[pos..r.start]);
        pos = r.end;
    }
    explanation.push_str(&text[pos..]);
    Ok(ParsedPrediction {
        answer,
        probability,
        explanation: explanation.trim().to_string(),
    })
}

fn format_percent(p: f64) -> String {
    let s = format!("{:.10}", p * 100.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Renders a prediction in the required output format.
pub fn render(pred: &ParsedPrediction) -> String {
    let mut out = format!("Answer: {}", if pred.answer { "Yes" } else { "No" });
    if let Some(p) = pred.probability {
        out.push_str(&format!("\nProbability score: {}%", format_percent(p)));
    }
    if !pred.explanation.is_empty() {
        out.push('\n');
        out.push_str(&pred.explanation);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercase_answer() {
        let p = parse_response("answer: no\nProbability score: 10%").unwrap();
        assert!(!p.answer);
        assert_eq!(p.probability, Some(0.10));
        assert_eq!(p.explanation, "");
    }

    #[test]
    fn missing_answer_is_an_error() {
        match parse_response("I cannot determine.") {
            Err(Error::Parse { raw, .. }) => assert_eq!(raw, "I cannot determine."),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn probability_is_optional() {
        let p = parse_response("Some reasoning.\nAnswer: Yes").unwrap();
        assert!(p.answer);
        assert_eq!(p.probability, None);
        assert_eq!(p.explanation, "Some reasoning.");
    }

    #[test]
    fn decimal_percent_and_bold_markers() {
        let p = parse_response("**Answer:** yes\n**Probability score:** 62.5 %").unwrap();
        assert!(p.answer);
        assert_eq!(p.probability, Some(0.625));
        assert!(parse_response("Answer: Yes\nProbability score: 150%").is_err());
    }

    #[test]
    fn render_then_parse() {
        for (answer, pct) in [(true, 75u32), (false, 0), (true, 100), (false, 33)] {
            let gold = ParsedPrediction {
                answer,
                probability: Some(pct as f64 / 100.0),
                explanation: "Because.".into(),
            };
            let back = parse_response(&render(&gold)).unwrap();
            assert_eq!(back, gold);
        }
    }
}
