//! Prompt rendering: three indicator-control tiers for both tasks, plus
//! ablated and paraphrased variants.
//!
//! Canonical texts live in plain-text template files under `templates/`
//! with named placeholders (`{CLASS1_EXAMPLES}`, `{CLASS2_EXAMPLES}`,
//! `{TEST_TEXTS}`, `{ASPECT_BULLETS}`, ...). The genre task renders two
//! stages: stage 1 elicits at least three distinguishing criteria from the
//! demonstration examples; stage 2 re-presents the trial with a
//! `{CRITERIA}` slot for the stage-1 answer and asks for list-format
//! labels. The detection task is a single stage.
//!
//! Control tiers nest: the simple tier adds one clause to the basic prompt;
//! the detailed tier prepends the stylistic-aspect preamble and the topical
//! prohibition block. Class descriptions and genre names never appear.
//!
//! Every rendered stage is carried as instruction/content segments so that
//! paraphrasing rewrites only instruction text and leaves embedded
//! excerpts byte-identical.

use serde::{Deserialize, Serialize};

use crate::gateway::{BackendSpec, ClassLabel, Gateway, GatewayError};
use crate::splitter::{TaskKind, Trial};

const GENRE_STAGE1_TEMPLATE: &str = include_str!("../templates/genre_stage1.txt");
const GENRE_STAGE2_TEMPLATE: &str = include_str!("../templates/genre_stage2.txt");
const DETAILED_PREAMBLE_TEMPLATE: &str = include_str!("../templates/genre_detailed_preamble.txt");
const ASPECT_BULLETS: &str = include_str!("../templates/aspect_bullets.txt");
const DETECTION_TEMPLATE: &str = include_str!("../templates/detection.txt");
const PARAPHRASE_META_TEMPLATE: &str = include_str!("../templates/paraphrase_meta.txt");

/// Clause appended to the criteria request by the simple and detailed tiers.
const GENRE_CONTROL_CLAUSE: &str =
    " in terms of genre (writing style), but not in topics or length";

/// Sentence inserted by the detection simple tier.
const DETECTION_SIMPLE_CONTROL: &str =
    "When classifying, don't use the topic of the text as a criteria. ";

/// Prohibition block appended by the detection detailed tier.
const DETECTION_DETAILED_EXTRA: &str = "You SHOULD NOT be using topical content or size of the \
texts for classification!  The focus should be on how the texts are written, not what they are \
about. The examples above can be limited to particular topics. However, your classification \
should be universally applicable to any text regardless of the specific topical area such as \
business, finances, entertainment, universities, markets, science, politics, travel, health, \
councils, software, sports, religion, arts, law, nature, history, engineering, school, etc. ";

/// Block removed by the topical-definition ablation: the definition and
/// examples of what counts as topical, inside the Important Note.
const TOPICAL_DEFINITION_BLOCK: &str = "Do not mention specific fields or areas such as \
business, finances, entertainment, universities, markets, science, politics, travel, health, \
councils, software, sports, religion, arts, law, nature, history, engineering, school, etc. in \
your analysis. ";

/// Slot in the stage-2 text that receives the stage-1 completion.
pub const CRITERIA_SLOT: &str = "{CRITERIA}";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("operation expects a {expected} trial, got {got}")]
    WrongTask { expected: &'static str, got: &'static str },
    #[error("ablations apply only to the detailed genre prompt")]
    NotDetailedPrompt,
    #[error("backend error during paraphrase: {0}")]
    Backend(#[from] GatewayError),
}

/// The three indicator-control tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLevel {
    Basic,
    Simple,
    Detailed,
}

impl ControlLevel {
    pub const ALL: [ControlLevel; 3] =
        [ControlLevel::Basic, ControlLevel::Simple, ControlLevel::Detailed];

    pub fn as_str(&self) -> &'static str {
        match self {
            ControlLevel::Basic => "basic",
            ControlLevel::Simple => "simple",
            ControlLevel::Detailed => "detailed",
        }
    }
}

/// Prompt components removable for the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    DropTopicalDefinition,
    DropGenreFeatures,
    HalveGenreFeatures,
}

impl AblationKind {
    pub const ALL: [AblationKind; 3] = [
        AblationKind::DropTopicalDefinition,
        AblationKind::DropGenreFeatures,
        AblationKind::HalveGenreFeatures,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationKind::DropTopicalDefinition => "drop_topical_definition",
            AblationKind::DropGenreFeatures => "drop_genre_features",
            AblationKind::HalveGenreFeatures => "halve_genre_features",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Canonical,
    Ablation(AblationKind),
    Paraphrase(u8),
}

impl Variant {
    pub fn as_string(&self) -> String {
        match self {
            Variant::Canonical => "canonical".to_string(),
            Variant::Ablation(kind) => format!("ablation({})", kind.as_str()),
            Variant::Paraphrase(run) => format!("paraphrase({run})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Task instructions; rewritten by paraphrasing, edited by ablations.
    Instruction,
    /// Embedded demonstration and test material; never modified.
    Content,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub segments: Vec<Segment>,
}

impl Stage {
    pub fn text(&self) -> String {
        self.segments.iter().map(|s| s.text.as_str()).collect()
    }

    /// Only the embedded material (examples, tests, output block).
    pub fn content_text(&self) -> String {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Content)
            .map(|s| s.text.as_str())
            .collect()
    }
}

/// The rendered prompt(s) of one trial under one control tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub task: TaskKind,
    pub control_level: ControlLevel,
    pub stages: Vec<Stage>,
    pub trial_ref: String,
    pub variant: Variant,
    pub n_test: usize,
}

impl PromptBundle {
    pub fn stage_texts(&self) -> Vec<String> {
        self.stages.iter().map(|s| s.text()).collect()
    }
}

fn render_examples(excerpts: &[crate::corpus::TextExcerpt]) -> String {
    excerpts
        .iter()
        .enumerate()
        .map(|(i, e)| format!("Example {}: {}", i + 1, e.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_tests(trial: &Trial) -> String {
    trial
        .test_items
        .iter()
        .enumerate()
        .map(|(i, item)| format!("{}: {}", i + 1, item.excerpt.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_output_example(n_test: usize) -> String {
    (1..=n_test)
        .map(|i| {
            let label = if i % 2 == 1 { ClassLabel::Class1 } else { ClassLabel::Class2 };
            format!("{i}: {}", label.as_str())
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn detailed_preamble() -> String {
    DETAILED_PREAMBLE_TEMPLATE.replace("{ASPECT_BULLETS}", ASPECT_BULLETS)
}

/// Splits a rendered genre stage into instruction/content segments at the
/// fixed section markers.
fn segment_genre_stage(text: &str, has_output_block: bool) -> Stage {
    let examples_at = text
        .find("\n\nHere are some example texts of Class 1:")
        .expect("template has the class 1 header");
    let instructions_at = text
        .rfind("\n\nInstructions:")
        .expect("template has the instructions header");
    let mut segments = vec![
        Segment {
            kind: SegmentKind::Instruction,
            text: text[..examples_at].to_string(),
        },
        Segment {
            kind: SegmentKind::Content,
            text: text[examples_at..instructions_at + 2].to_string(),
        },
    ];
    if has_output_block {
        let output_at = text
            .rfind("\n\nExample of output:")
            .expect("stage 2 has the output block");
        segments.push(Segment {
            kind: SegmentKind::Instruction,
            text: text[instructions_at + 2..output_at].to_string(),
        });
        segments.push(Segment {
            kind: SegmentKind::Content,
            text: text[output_at..].to_string(),
        });
    } else {
        segments.push(Segment {
            kind: SegmentKind::Instruction,
            text: text[instructions_at + 2..].to_string(),
        });
    }
    Stage { segments }
}

/// Renders the two-stage genre-classification prompt bundle.
pub fn render_genre_prompt(
    trial: &Trial,
    control_level: ControlLevel,
) -> Result<PromptBundle, PromptError> {
    if trial.task != TaskKind::Genre {
        return Err(PromptError::WrongTask {
            expected: "genre",
            got: trial.task.as_str(),
        });
    }
    let preamble = match control_level {
        ControlLevel::Detailed => detailed_preamble(),
        _ => String::new(),
    };
    let clause = match control_level {
        ControlLevel::Basic => "",
        ControlLevel::Simple | ControlLevel::Detailed => GENRE_CONTROL_CLAUSE,
    };
    let class1 = render_examples(&trial.class1_examples);
    let class2 = render_examples(&trial.class2_examples);
    let n_test = trial.test_items.len();

    let stage1 = GENRE_STAGE1_TEMPLATE
        .replace("{DETAILED_PREAMBLE}", &preamble)
        .replace("{CLASS1_EXAMPLES}", &class1)
        .replace("{CLASS2_EXAMPLES}", &class2)
        .replace("{CONTROL_CLAUSE}", clause);
    let stage2 = GENRE_STAGE2_TEMPLATE
        .replace("{DETAILED_PREAMBLE}", &preamble)
        .replace("{CLASS1_EXAMPLES}", &class1)
        .replace("{CLASS2_EXAMPLES}", &class2)
        .replace("{TEST_TEXTS}", &render_tests(trial))
        .replace("{OUTPUT_EXAMPLE}", &render_output_example(n_test));

    Ok(PromptBundle {
        task: TaskKind::Genre,
        control_level,
        stages: vec![
            segment_genre_stage(&stage1, false),
            segment_genre_stage(&stage2, true),
        ],
        trial_ref: trial.id(),
        variant: Variant::Canonical,
        n_test,
    })
}

/// Renders the single-stage generated-text-detection prompt bundle.
pub fn render_detection_prompt(
    trial: &Trial,
    control_level: ControlLevel,
) -> Result<PromptBundle, PromptError> {
    if trial.task != TaskKind::Detection {
        return Err(PromptError::WrongTask {
            expected: "detection",
            got: trial.task.as_str(),
        });
    }
    let control = match control_level {
        ControlLevel::Basic => String::new(),
        ControlLevel::Simple => DETECTION_SIMPLE_CONTROL.to_string(),
        ControlLevel::Detailed => {
            format!("{DETECTION_SIMPLE_CONTROL}{DETECTION_DETAILED_EXTRA}")
        }
    };
    let n_test = trial.test_items.len();
    let text = DETECTION_TEMPLATE
        .replace("{CLASS1_EXAMPLES}", &render_examples(&trial.class1_examples))
        .replace("{CLASS2_EXAMPLES}", &render_examples(&trial.class2_examples))
        .replace("{N_TEST}", &n_test.to_string())
        .replace("{CONTROL}", &control)
        .replace("{OUTPUT_EXAMPLE}", &render_output_example(n_test))
        .replace("{TEST_TEXTS}", &render_tests(trial));

    let below_at = text.find("Below, there are").expect("template has the task sentence");
    let output_at = text.rfind("\n\nExample of output:").expect("template has the output block");
    let stage = Stage {
        segments: vec![
            Segment {
                kind: SegmentKind::Content,
                text: text[..below_at].to_string(),
            },
            Segment {
                kind: SegmentKind::Instruction,
                text: text[below_at..output_at].to_string(),
            },
            Segment {
                kind: SegmentKind::Content,
                text: text[output_at..].to_string(),
            },
        ],
    };
    Ok(PromptBundle {
        task: TaskKind::Detection,
        control_level,
        stages: vec![stage],
        trial_ref: trial.id(),
        variant: Variant::Canonical,
        n_test,
    })
}

/// The last six aspect bullets, removed by the halving ablation.
fn second_half_bullets() -> String {
    let bullets: Vec<&str> = ASPECT_BULLETS.split("\n\n").collect();
    assert_eq!(bullets.len(), 12, "aspect list must hold 12 bullets");
    format!("\n\n{}", bullets[6..].join("\n\n"))
}

/// Applies one prompt ablation to a detailed genre bundle. The result
/// differs from the canonical render by exactly one contiguous removed
/// region per stage; all other text is byte-identical.
pub fn apply_ablation(
    bundle: &PromptBundle,
    kind: AblationKind,
) -> Result<PromptBundle, PromptError> {
    if bundle.task != TaskKind::Genre || bundle.control_level != ControlLevel::Detailed {
        return Err(PromptError::NotDetailedPrompt);
    }
    let (needle, replacement): (String, &str) = match kind {
        AblationKind::DropTopicalDefinition => (TOPICAL_DEFINITION_BLOCK.to_string(), ""),
        AblationKind::DropGenreFeatures => (format!("{ASPECT_BULLETS}\n\n"), ""),
        AblationKind::HalveGenreFeatures => (second_half_bullets(), ""),
    };
    let mut out = bundle.clone();
    let mut hits = 0usize;
    for stage in &mut out.stages {
        for segment in &mut stage.segments {
            if segment.kind == SegmentKind::Instruction && segment.text.contains(needle.as_str()) {
                segment.text = segment.text.replacen(needle.as_str(), replacement, 1);
                hits += 1;
            }
        }
    }
    if hits == 0 {
        return Err(PromptError::NotDetailedPrompt);
    }
    out.variant = Variant::Ablation(kind);
    Ok(out)
}

/// Builds the meta-prompt that asks a backend to reword one instruction
/// segment. The run index is part of the prompt, so the three paraphrase
/// runs occupy three distinct cache keys.
pub fn paraphrase_meta_prompt(instruction: &str, run_index: u8) -> String {
    // The instruction text is the prompt's final content; trailing template
    // whitespace would leak into echoed rewordings.
    PARAPHRASE_META_TEMPLATE
        .trim_end()
        .replace("{RUN_INDEX}", &run_index.to_string())
        .replace("{TEXT}", instruction)
}

/// Rewords the instruction segments of a bundle through a backend; the
/// embedded examples and test excerpts pass through untouched. Results are
/// cached like any other completion.
pub fn paraphrase_prompt(
    bundle: &PromptBundle,
    gateway: &Gateway,
    backend: &BackendSpec,
    run_index: u8,
) -> Result<PromptBundle, PromptError> {
    let mut out = bundle.clone();
    for stage in &mut out.stages {
        for segment in &mut stage.segments {
            if segment.kind != SegmentKind::Instruction || segment.text.trim().is_empty() {
                continue;
            }
            let meta = paraphrase_meta_prompt(&segment.text, run_index);
            let completion = gateway.complete(backend, &meta)?;
            segment.text = completion.raw_text;
        }
    }
    out.variant = Variant::Paraphrase(run_index);
    Ok(out)
}

/// Renders the request that asks a generator backend for a stylistic and
/// topical twin of a source excerpt.
pub fn render_generation_request(source_text: &str) -> String {
    include_str!("../templates/generation_request.txt").replace("{SOURCE}", source_text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ExcerptMode, TextExcerpt};
    use crate::gateway::{cache_key, Decoding};
    use crate::splitter::TestItem;

    fn excerpt(id: &str, text: &str) -> TextExcerpt {
        TextExcerpt {
            document_id: id.to_string(),
            start_offset: 0,
            text: text.to_string(),
            mode: ExcerptMode::Prefix,
        }
    }

    pub(crate) fn demo_trial(task: TaskKind) -> Trial {
        Trial {
            topic_index: 0,
            task,
            class1_examples: vec![
                excerpt("a1", "The ledger however credit deposit and payroll budget."),
                excerpt("a2", "The refund however savings between taxation mortgage."),
            ],
            class2_examples: vec![
                excerpt("b1", "The melody honestly chorus and tempo encore vinyl."),
                excerpt("b2", "The guitar honestly drummer within ballad rhythm."),
            ],
            test_items: vec![
                TestItem {
                    item_id: "t1".into(),
                    excerpt: excerpt("t1", "The invoice however pension about budget credit."),
                    gold: ClassLabel::Class1,
                },
                TestItem {
                    item_id: "t2".into(),
                    excerpt: excerpt("t2", "The concert honestly festival through orchestra."),
                    gold: ClassLabel::Class2,
                },
            ],
        }
    }

    #[test]
    fn every_grid_cell_renders() {
        for control in ControlLevel::ALL {
            let genre = render_genre_prompt(&demo_trial(TaskKind::Genre), control).unwrap();
            assert_eq!(genre.stages.len(), 2);
            let detection =
                render_detection_prompt(&demo_trial(TaskKind::Detection), control).unwrap();
            assert_eq!(detection.stages.len(), 1);
        }
    }

    #[test]
    fn wrong_task_is_rejected() {
        assert!(matches!(
            render_genre_prompt(&demo_trial(TaskKind::Detection), ControlLevel::Basic),
            Err(PromptError::WrongTask { .. })
        ));
        assert!(matches!(
            render_detection_prompt(&demo_trial(TaskKind::Genre), ControlLevel::Basic),
            Err(PromptError::WrongTask { .. })
        ));
    }

    #[test]
    fn genre_anchor_sentences_are_verbatim() {
        let trial = demo_trial(TaskKind::Genre);
        let basic = render_genre_prompt(&trial, ControlLevel::Basic).unwrap();
        let stage1 = basic.stages[0].text();
        assert!(stage1.contains(
            "list at least three criteria by which Class 1 and Class 2 texts are different from each other"
        ));
        assert!(!stage1.contains("in terms of genre"));

        let simple = render_genre_prompt(&trial, ControlLevel::Simple).unwrap();
        assert!(simple.stages[0]
            .text()
            .contains("in terms of genre (writing style), but not in topics or length"));

        let detailed = render_genre_prompt(&trial, ControlLevel::Detailed).unwrap();
        let text = detailed.stages[0].text();
        assert!(text.contains(
            "You SHOULD NOT be using topical content or size of the texts for classification!"
        ));
        assert!(text.contains("should be applicable to the texts on ANY topic"));
        assert!(text.contains("Formality and Tone"));
    }

    #[test]
    fn detection_anchor_sentences_are_verbatim() {
        let trial = demo_trial(TaskKind::Detection);
        let basic = render_detection_prompt(&trial, ControlLevel::Basic).unwrap();
        let text = basic.stages[0].text();
        assert!(text.contains("Classify each of them into either Class 1 or Class 2"));
        assert!(text.contains("Present your response in the list format as in the example below"));
        assert!(text.contains("No explanations are needed"));
        assert!(!text.contains("don't use the topic of the text"));

        let simple = render_detection_prompt(&trial, ControlLevel::Simple).unwrap();
        assert!(simple.stages[0].text().contains("don't use the topic of the text"));

        let detailed = render_detection_prompt(&trial, ControlLevel::Detailed).unwrap();
        let text = detailed.stages[0].text();
        assert!(text.contains("don't use the topic of the text"));
        assert!(text.contains("The focus should be on how the texts are written, not what they are about."));
        assert!(text.contains("business, finances, entertainment, universities, markets"));
    }

    #[test]
    fn simple_tier_is_basic_plus_one_clause() {
        let trial = demo_trial(TaskKind::Genre);
        let basic = render_genre_prompt(&trial, ControlLevel::Basic).unwrap();
        let simple = render_genre_prompt(&trial, ControlLevel::Simple).unwrap();
        for (b, s) in basic.stages.iter().zip(&simple.stages) {
            assert_eq!(s.text().replace(GENRE_CONTROL_CLAUSE, ""), b.text());
        }

        let trial = demo_trial(TaskKind::Detection);
        let basic = render_detection_prompt(&trial, ControlLevel::Basic).unwrap();
        let simple = render_detection_prompt(&trial, ControlLevel::Simple).unwrap();
        assert_eq!(
            simple.stages[0].text().replace(DETECTION_SIMPLE_CONTROL, ""),
            basic.stages[0].text()
        );
    }

    #[test]
    fn genre_prompts_never_name_genres() {
        let trial = demo_trial(TaskKind::Genre);
        for control in ControlLevel::ALL {
            let bundle = render_genre_prompt(&trial, control).unwrap();
            for stage in &bundle.stages {
                let text = stage.text();
                for label in ["ARG", "INSTR", "NEWS", "PERS", "INFO", "REVIEW", "Review", "genre name"] {
                    assert!(!text.contains(label), "{control:?} leaked {label}");
                }
            }
        }
    }

    /// Text-diff oracle: `canonical` must equal `ablated` with exactly one
    /// contiguous region inserted back.
    fn assert_one_contiguous_removal(canonical: &str, ablated: &str) -> String {
        assert!(canonical.len() > ablated.len());
        let canonical_bytes = canonical.as_bytes();
        let ablated_bytes = ablated.as_bytes();
        let mut prefix = 0;
        while prefix < ablated_bytes.len() && canonical_bytes[prefix] == ablated_bytes[prefix] {
            prefix += 1;
        }
        let mut suffix = 0;
        while suffix < ablated_bytes.len() - prefix
            && canonical_bytes[canonical_bytes.len() - 1 - suffix]
                == ablated_bytes[ablated_bytes.len() - 1 - suffix]
        {
            suffix += 1;
        }
        let removed = &canonical[prefix..canonical.len() - suffix];
        let rebuilt = format!(
            "{}{}{}",
            &ablated[..prefix],
            removed,
            &ablated[prefix..]
        );
        assert_eq!(rebuilt, canonical, "diff is not one contiguous region");
        removed.to_string()
    }

    #[test]
    fn ablations_remove_one_contiguous_block() {
        let trial = demo_trial(TaskKind::Genre);
        let canonical = render_genre_prompt(&trial, ControlLevel::Detailed).unwrap();
        for kind in AblationKind::ALL {
            let ablated = apply_ablation(&canonical, kind).unwrap();
            assert_eq!(ablated.variant, Variant::Ablation(kind));
            for (c, a) in canonical.stages.iter().zip(&ablated.stages) {
                assert_one_contiguous_removal(&c.text(), &a.text());
            }
        }
    }

    #[test]
    fn drop_genre_features_removes_every_aspect() {
        let trial = demo_trial(TaskKind::Genre);
        let canonical = render_genre_prompt(&trial, ControlLevel::Detailed).unwrap();
        let ablated = apply_ablation(&canonical, AblationKind::DropGenreFeatures).unwrap();
        let text = ablated.stages[0].text();
        assert!(!text.contains("Formality and Tone"));
        assert!(!text.contains("Use of active voice"));
        // Prohibition block survives.
        assert!(text.contains("You SHOULD NOT be using topical content"));
    }

    #[test]
    fn halving_keeps_exactly_six_bullets() {
        let trial = demo_trial(TaskKind::Genre);
        let canonical = render_genre_prompt(&trial, ControlLevel::Detailed).unwrap();
        let ablated = apply_ablation(&canonical, AblationKind::HalveGenreFeatures).unwrap();
        let text = ablated.stages[0].text();
        let kept = [
            "Formality and Tone",
            "Structure and Flow",
            "Complexity of Language",
            "Purpose and Interaction",
            "Sentence Structure",
            "Use of first- , third-, or second- person perspectives.",
        ];
        let dropped = [
            "Use of active voice.",
            "Soliciting feedback or further questions.",
            "Dialogue-driven style.",
            "Use of citations and references to studies.",
            "Sharing personal experiences, or giving step-by-step advice.",
            "Direct questions to the reader or community",
        ];
        for bullet in kept {
            assert!(text.contains(bullet), "missing kept bullet {bullet}");
        }
        for bullet in dropped {
            assert!(!text.contains(bullet), "bullet not dropped: {bullet}");
        }
    }

    #[test]
    fn drop_topical_definition_keeps_the_prohibition() {
        let trial = demo_trial(TaskKind::Genre);
        let canonical = render_genre_prompt(&trial, ControlLevel::Detailed).unwrap();
        let ablated = apply_ablation(&canonical, AblationKind::DropTopicalDefinition).unwrap();
        let text = ablated.stages[0].text();
        assert!(!text.contains("Do not mention specific fields or areas"));
        assert!(text.contains("You SHOULD NOT be using topical content"));
        assert!(text.contains("applicable to the texts on ANY topic"));
    }

    #[test]
    fn ablation_requires_detailed_genre() {
        let trial = demo_trial(TaskKind::Genre);
        let basic = render_genre_prompt(&trial, ControlLevel::Basic).unwrap();
        assert!(matches!(
            apply_ablation(&basic, AblationKind::DropGenreFeatures),
            Err(PromptError::NotDetailedPrompt)
        ));
    }

    #[test]
    fn identity_paraphrase_reproduces_the_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = Gateway::new(dir.path());
        let backend = BackendSpec::stub("stub:echo_paraphrase");
        let trial = demo_trial(TaskKind::Genre);
        let canonical = render_genre_prompt(&trial, ControlLevel::Detailed).unwrap();
        let rephrased = paraphrase_prompt(&canonical, &gateway, &backend, 1).unwrap();
        assert_eq!(rephrased.variant, Variant::Paraphrase(1));
        for (c, r) in canonical.stages.iter().zip(&rephrased.stages) {
            assert_eq!(c.text(), r.text());
        }
    }

    #[test]
    fn paraphrase_leaves_embedded_texts_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = Gateway::new(dir.path());
        let backend = BackendSpec::stub("stub:echo_paraphrase");
        let trial = demo_trial(TaskKind::Detection);
        let canonical = render_detection_prompt(&trial, ControlLevel::Detailed).unwrap();
        let rephrased = paraphrase_prompt(&canonical, &gateway, &backend, 2).unwrap();
        assert_eq!(
            canonical.stages[0].content_text(),
            rephrased.stages[0].content_text()
        );
    }

    #[test]
    fn paraphrase_runs_occupy_distinct_cache_keys() {
        let instruction = "Classify the texts.";
        let decoding = Decoding::default();
        let keys: Vec<String> = [1u8, 2, 3]
            .iter()
            .map(|run| {
                cache_key(
                    "stub:echo_paraphrase",
                    &paraphrase_meta_prompt(instruction, *run),
                    &decoding,
                )
            })
            .collect();
        assert_ne!(keys[0], keys[1]);
        assert_ne!(keys[1], keys[2]);
        assert_ne!(keys[0], keys[2]);
    }

    #[test]
    fn generation_request_embeds_source_and_instruction() {
        let prompt = render_generation_request("The sample source text.");
        assert!(prompt.contains("on the same topic and in the same style"));
        assert!(prompt.contains("The sample source text."));
    }

    #[test]
    fn segments_reassemble_to_the_full_text() {
        let trial = demo_trial(TaskKind::Genre);
        for control in ControlLevel::ALL {
            let bundle = render_genre_prompt(&trial, control).unwrap();
            for stage in &bundle.stages {
                let joined: String = stage.segments.iter().map(|s| s.text.as_str()).collect();
                assert_eq!(joined, stage.text());
            }
        }
    }
}
