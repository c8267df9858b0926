//! Deterministic local backends.
//!
//! The two oracle stubs read the same rendered prompts a live model would
//! and answer by fixed rules tied to the fixture corpus conventions:
//!
//! - [`StyleOracle`] classifies by style alone: genre-marker densities for
//!   the genre task, sentence-direction statistics for the detection task.
//!   Style survives any topic shift, so it scores perfectly in every
//!   condition and anchors the top of the accuracy scale.
//! - [`TopicBiasedOracle`] classifies by distinctive topical vocabulary
//!   gleaned from the demonstration examples, falling back to Class 1 when
//!   neither class has the edge. It collapses toward chance exactly when
//!   the examples stop sharing the test topic, reproducing the
//!   out-of-domain gap mechanically.
//!
//! [`Reverser`] and [`EchoParaphrase`] back the generation and paraphrase
//! flows offline; [`ScriptedReplay`] replays canned responses by request
//! digest for transport tests.

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;

use regex::Regex;

use super::{cache_key, content_tokens, AttemptError, Backend, Decoding, GatewayError};
use crate::corpus::Genre;
use crate::fixture;

pub const STYLE_ORACLE_ID: &str = "stub:style_oracle";
pub const TOPIC_BIASED_ORACLE_ID: &str = "stub:topic_biased_oracle";
pub const REVERSER_ID: &str = "stub:reverser";
pub const ECHO_PARAPHRASE_ID: &str = "stub:echo_paraphrase";
pub const SCRIPTED_ID: &str = "stub:scripted";

const CLASS1_HEADER: &str = "Here are some example texts of Class 1:";
const CLASS2_HEADER: &str = "Here are some example texts of Class 2:";
const GENRE_TEST_HEADER: &str = "Test Texts for Classification:";
const DETECTION_TEST_MARKER: &str = "Below, there are";
const CRITERIA_REQUEST_MARKER: &str = "list at least three criteria";

/// Stage-1 answer for the criteria-elicitation prompts. Uses dotted
/// numbering so it never collides with the `k: Class N` label format.
const CANNED_CRITERIA: &str = "1. How sentences are constructed and how the text flows.\n\
2. The perspective and voice the writing takes toward the reader.\n\
3. How formal the wording is and how the text is organized.";

fn section<'a>(text: &'a str, start: &str, ends: &[&str]) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    let end = ends
        .iter()
        .filter_map(|e| rest.find(e))
        .min()
        .unwrap_or(rest.len());
    Some(&rest[..end])
}

/// The demonstration texts of both classes, in prompt order.
fn extract_examples(prompt: &str) -> (Vec<String>, Vec<String>) {
    let example_re = Regex::new(r"(?m)^Example \d+: (.*)$").unwrap();
    let grab = |block: Option<&str>| -> Vec<String> {
        block
            .map(|b| {
                example_re
                    .captures_iter(b)
                    .map(|c| c[1].to_string())
                    .collect()
            })
            .unwrap_or_default()
    };
    let class1 = grab(section(prompt, CLASS1_HEADER, &[CLASS2_HEADER]));
    let class2 = grab(section(
        prompt,
        CLASS2_HEADER,
        &[GENRE_TEST_HEADER, DETECTION_TEST_MARKER, "Instructions:"],
    ));
    (class1, class2)
}

/// Numbered test texts. Lines of the output-format example ("1: Class 1")
/// are excluded by content.
fn extract_test_items(prompt: &str) -> Vec<(usize, String)> {
    let item_re = Regex::new(r"(?m)^(\d+): (.*)$").unwrap();
    item_re
        .captures_iter(prompt)
        .filter_map(|c| {
            let text = c[2].trim().to_string();
            if text == "Class 1" || text == "Class 2" {
                return None;
            }
            c[1].parse::<usize>().ok().map(|idx| (idx, text))
        })
        .collect()
}

fn render_labels(items: &[(usize, &'static str)]) -> String {
    items
        .iter()
        .map(|(idx, label)| format!("{idx}: {label}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Occurrences of each genre marker word in a text.
fn marker_counts(text: &str) -> [usize; 6] {
    let mut counts = [0usize; 6];
    for token in text.split_whitespace() {
        let token = token.trim_end_matches('.').to_lowercase();
        for (i, (_, marker)) in fixture::GENRE_MARKERS.iter().enumerate() {
            if token == *marker {
                counts[i] += 1;
            }
        }
    }
    counts
}

fn dominant_marker(texts: &[String]) -> usize {
    let mut total = [0usize; 6];
    for text in texts {
        let counts = marker_counts(text);
        for i in 0..6 {
            total[i] += counts[i];
        }
    }
    total
        .iter()
        .enumerate()
        .max_by_key(|(_, &c)| c)
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Fraction of sentence-final tokens followed by a capitalized token; 1.0
/// for text in natural order, near 0.0 for word-reversed text.
fn forward_score(text: &str) -> f64 {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut boundaries = 0usize;
    let mut forward = 0usize;
    for pair in tokens.windows(2) {
        if pair[0].ends_with('.') {
            boundaries += 1;
            if pair[1].chars().next().is_some_and(|c| c.is_uppercase()) {
                forward += 1;
            }
        }
    }
    if boundaries == 0 {
        1.0
    } else {
        forward as f64 / boundaries as f64
    }
}

fn mean_forward(texts: &[String]) -> f64 {
    if texts.is_empty() {
        return 0.5;
    }
    texts.iter().map(|t| forward_score(t)).sum::<f64>() / texts.len() as f64
}

/// Labels test excerpts by the hidden stylistic rule the fixture corpus
/// encodes per class; ignores every instruction in the prompt.
pub struct StyleOracle;

impl Backend for StyleOracle {
    fn id(&self) -> &str {
        STYLE_ORACLE_ID
    }

    fn complete_once(&self, prompt: &str, _decoding: &Decoding) -> Result<String, AttemptError> {
        let items = extract_test_items(prompt);
        if items.is_empty() {
            if prompt.contains(CRITERIA_REQUEST_MARKER) {
                return Ok(CANNED_CRITERIA.to_string());
            }
            return Err(AttemptError::Fatal(GatewayError::Protocol {
                backend: STYLE_ORACLE_ID.to_string(),
                detail: "no test items found in prompt".to_string(),
            }));
        }
        let (class1, class2) = extract_examples(prompt);
        let detection = prompt.contains(DETECTION_TEST_MARKER);
        let labeled: Vec<(usize, &'static str)> = if detection {
            // Whichever class reads in natural order is the human one.
            let class1_is_forward = mean_forward(&class1) >= mean_forward(&class2);
            items
                .iter()
                .map(|(idx, text)| {
                    let item_forward = forward_score(text) >= 0.5;
                    let label = if item_forward == class1_is_forward {
                        "Class 1"
                    } else {
                        "Class 2"
                    };
                    (*idx, label)
                })
                .collect()
        } else {
            let m1 = dominant_marker(&class1);
            let m2 = dominant_marker(&class2);
            items
                .iter()
                .map(|(idx, text)| {
                    let counts = marker_counts(text);
                    let label = if counts[m1] >= counts[m2] { "Class 1" } else { "Class 2" };
                    (*idx, label)
                })
                .collect()
        };
        Ok(render_labels(&labeled))
    }
}

/// Labels test excerpts by topical keyword overlap with the demonstration
/// examples: an example-derived distinctive vocabulary per class, Class 1
/// on ties. Degrades toward chance when examples are off-topic.
pub struct TopicBiasedOracle;

impl Backend for TopicBiasedOracle {
    fn id(&self) -> &str {
        TOPIC_BIASED_ORACLE_ID
    }

    fn complete_once(&self, prompt: &str, _decoding: &Decoding) -> Result<String, AttemptError> {
        let items = extract_test_items(prompt);
        if items.is_empty() {
            if prompt.contains(CRITERIA_REQUEST_MARKER) {
                return Ok(CANNED_CRITERIA.to_string());
            }
            return Err(AttemptError::Fatal(GatewayError::Protocol {
                backend: TOPIC_BIASED_ORACLE_ID.to_string(),
                detail: "no test items found in prompt".to_string(),
            }));
        }
        let (class1, class2) = extract_examples(prompt);
        let types = |texts: &[String]| -> HashSet<String> {
            texts.iter().flat_map(|t| content_tokens(t)).collect()
        };
        let t1 = types(&class1);
        let t2 = types(&class2);
        let d1: HashSet<&String> = t1.difference(&t2).collect();
        let d2: HashSet<&String> = t2.difference(&t1).collect();
        let labeled: Vec<(usize, &'static str)> = items
            .iter()
            .map(|(idx, text)| {
                let item_types: HashSet<String> = content_tokens(text).into_iter().collect();
                let s1 = item_types.iter().filter(|t| d1.contains(t)).count();
                let s2 = item_types.iter().filter(|t| d2.contains(t)).count();
                let label = if s1 >= s2 { "Class 1" } else { "Class 2" };
                (*idx, label)
            })
            .collect();
        Ok(render_labels(&labeled))
    }
}

/// Offline text generator: answers a generation request with the source
/// excerpt's words in reverse order. Same vocabulary (hence same topic),
/// detectably different style.
pub struct Reverser;

pub const GENERATION_SOURCE_START: &str = "Here is a text:\n\n";
pub const GENERATION_SOURCE_END: &str = "\n\nWrite a new text";

impl Backend for Reverser {
    fn id(&self) -> &str {
        REVERSER_ID
    }

    fn complete_once(&self, prompt: &str, _decoding: &Decoding) -> Result<String, AttemptError> {
        let source = section(prompt, GENERATION_SOURCE_START, &[GENERATION_SOURCE_END])
            .ok_or_else(|| {
                AttemptError::Fatal(GatewayError::Protocol {
                    backend: REVERSER_ID.to_string(),
                    detail: "no source text found in generation prompt".to_string(),
                })
            })?;
        let mut words: Vec<&str> = source.split_whitespace().collect();
        words.reverse();
        Ok(words.join(" "))
    }
}

/// Identity paraphraser: returns the text-to-reword unchanged.
pub struct EchoParaphrase;

pub const PARAPHRASE_TEXT_MARKER: &str = "Text to reword:\n\n";

impl Backend for EchoParaphrase {
    fn id(&self) -> &str {
        ECHO_PARAPHRASE_ID
    }

    fn complete_once(&self, prompt: &str, _decoding: &Decoding) -> Result<String, AttemptError> {
        prompt
            .split_once(PARAPHRASE_TEXT_MARKER)
            .map(|(_, rest)| rest.to_string())
            .ok_or_else(|| {
                AttemptError::Fatal(GatewayError::Protocol {
                    backend: ECHO_PARAPHRASE_ID.to_string(),
                    detail: "no reword marker in paraphrase prompt".to_string(),
                })
            })
    }
}

/// Replays canned responses keyed by request digest.
#[derive(Default)]
pub struct ScriptedReplay {
    responses: Mutex<HashMap<String, String>>,
}

impl ScriptedReplay {
    pub fn new() -> ScriptedReplay {
        ScriptedReplay::default()
    }

    pub fn script(&self, prompt: &str, decoding: &Decoding, response: &str) {
        let digest = cache_key(SCRIPTED_ID, prompt, decoding);
        self.responses
            .lock()
            .unwrap()
            .insert(digest, response.to_string());
    }
}

impl Backend for ScriptedReplay {
    fn id(&self) -> &str {
        SCRIPTED_ID
    }

    fn complete_once(&self, prompt: &str, decoding: &Decoding) -> Result<String, AttemptError> {
        let digest = cache_key(SCRIPTED_ID, prompt, decoding);
        self.responses
            .lock()
            .unwrap()
            .get(&digest)
            .cloned()
            .ok_or_else(|| {
                AttemptError::Fatal(GatewayError::Protocol {
                    backend: SCRIPTED_ID.to_string(),
                    detail: format!("no scripted response for digest {digest}"),
                })
            })
    }
}

/// Genre with the marker that dominates a text; used by fixture-aware tests.
pub fn genre_by_marker(text: &str) -> Option<Genre> {
    let counts = marker_counts(text);
    let (idx, &max) = counts.iter().enumerate().max_by_key(|(_, &c)| c)?;
    (max > 0).then(|| fixture::GENRE_MARKERS[idx].0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{make_document, FIXTURE_SEED};

    #[test]
    fn forward_score_separates_natural_from_reversed() {
        let doc = make_document(Genre::News, 5, FIXTURE_SEED);
        assert!(forward_score(&doc.text) > 0.9);
        let mut words: Vec<&str> = doc.text.split_whitespace().collect();
        words.reverse();
        let reversed = words.join(" ");
        assert!(forward_score(&reversed) < 0.1);
    }

    #[test]
    fn marker_counts_identify_genre() {
        let doc = make_document(Genre::Pers, 9, FIXTURE_SEED);
        assert_eq!(genre_by_marker(&doc.text), Some(Genre::Pers));
    }

    #[test]
    fn style_oracle_answers_criteria_requests() {
        let prompt = "Instructions:\n\nFirst, based on the examples of texts of Class 1 and \
                      texts of Class 2 above, list at least three criteria by which Class 1 \
                      and Class 2 texts are different from each other.";
        let out = StyleOracle.complete_once(prompt, &Decoding::default()).unwrap();
        assert!(out.contains("1."));
    }

    #[test]
    fn style_oracle_labels_by_marker() {
        let arg = make_document(Genre::Arg, 1, FIXTURE_SEED);
        let pers = make_document(Genre::Pers, 2, FIXTURE_SEED);
        let test_arg = make_document(Genre::Arg, 30, FIXTURE_SEED);
        let test_pers = make_document(Genre::Pers, 31, FIXTURE_SEED);
        let prompt = format!(
            "{CLASS1_HEADER}\n\nExample 1: {}\n\n{CLASS2_HEADER}\n\nExample 1: {}\n\n\
             {GENRE_TEST_HEADER}\n\n1: {}\n\n2: {}\n\nCriteria:",
            arg.text, pers.text, test_pers.text, test_arg.text
        );
        let out = StyleOracle.complete_once(&prompt, &Decoding::default()).unwrap();
        assert_eq!(out, "1: Class 2\n2: Class 1");
    }

    #[test]
    fn topic_oracle_prefers_shared_vocabulary() {
        // Class 1 examples share the test's theme words; class 2 does not.
        let prompt = format!(
            "{CLASS1_HEADER}\n\nExample 1: The insurance mortgage ledger invoice payroll.\n\n\
             {CLASS2_HEADER}\n\nExample 1: The melody concert rhythm chorus guitar.\n\n\
             {GENRE_TEST_HEADER}\n\n1: The mortgage payroll budget credit deposit.\n\n\
             2: The concert guitar tempo vinyl encore.\n\nCriteria:"
        );
        let out = TopicBiasedOracle
            .complete_once(&prompt, &Decoding::default())
            .unwrap();
        assert_eq!(out, "1: Class 1\n2: Class 2");
    }

    #[test]
    fn topic_oracle_defaults_to_class1_without_evidence() {
        let prompt = format!(
            "{CLASS1_HEADER}\n\nExample 1: The habitat predator migration plumage.\n\n\
             {CLASS2_HEADER}\n\nExample 1: The castle dynasty monument relic.\n\n\
             {GENRE_TEST_HEADER}\n\n1: The compiler debugger kernel algorithm.\n\nCriteria:"
        );
        let out = TopicBiasedOracle
            .complete_once(&prompt, &Decoding::default())
            .unwrap();
        assert_eq!(out, "1: Class 1");
    }

    #[test]
    fn reverser_permutes_the_source() {
        let prompt = format!("{GENERATION_SOURCE_START}alpha beta gamma{GENERATION_SOURCE_END} ...");
        let out = Reverser.complete_once(&prompt, &Decoding::default()).unwrap();
        assert_eq!(out, "gamma beta alpha");
    }

    #[test]
    fn scripted_replay_is_keyed_by_digest() {
        let replay = ScriptedReplay::new();
        let decoding = Decoding::default();
        replay.script("p1", &decoding, "r1");
        assert_eq!(replay.complete_once("p1", &decoding).unwrap(), "r1");
        assert!(replay.complete_once("p2", &decoding).is_err());
    }
}
