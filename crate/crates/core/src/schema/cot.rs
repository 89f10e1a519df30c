//! The four-section reasoning document: tokenization, serialization and the
//! total parser used on model output.

use super::{BinaryLabel, CoTAnnotation, HarmCategory, Verdict};

pub const SECTION_HEADERS: [&str; 4] = ["QUESTION:", "CAPTION:", "REASONING:", "JUDGEMENT:"];

/// Fixed body of the QUESTION section.
pub const RUBRIC: &str = "Assess all five categories.";

/// Lower-cased tokens preceding the label word of the judgement sentence.
pub const JUDGEMENT_PREFIX: [&str; 4] = ["the", "image's", "label", "is"];

const NOT_APPLICABLE: &str = "Not applicable.";

/// Splits on whitespace and detaches trailing periods as their own tokens.
///
/// `tokenize(&detokenize(t)) == t` for any sequence of whitespace-free tokens
/// whose only trailing punctuation is a standalone `"."`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let core = word.trim_end_matches('.');
        let dots = word.len() - core.len();
        if core.is_empty() {
            out.extend(std::iter::repeat_n(".".to_string(), dots));
        } else {
            out.push(core.to_string());
            out.extend(std::iter::repeat_n(".".to_string(), dots));
        }
    }
    out
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        let t = t.as_ref();
        if i > 0 && t != "." {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Question,
    Caption,
    Reasoning,
    Judgement,
}

fn section_of(token: &str) -> Option<Section> {
    const KINDS: [Section; 4] = [
        Section::Question,
        Section::Caption,
        Section::Reasoning,
        Section::Judgement,
    ];
    SECTION_HEADERS
        .iter()
        .position(|h| h.eq_ignore_ascii_case(token))
        .map(|i| KINDS[i])
}

fn category_of(token: &str) -> Option<HarmCategory> {
    HarmCategory::from_name(token.strip_suffix(':').unwrap_or(token))
}

/// Tokens that free-text fields (captions, rationales) may not contain.
pub fn is_reserved_token(token: &str) -> bool {
    section_of(token).is_some() || category_of(token).is_some()
}

/// Renders an annotation as the four-section document, one section or
/// category per line.
pub fn serialize_cot(ann: &CoTAnnotation) -> String {
    let mut doc = String::new();
    doc.push_str("QUESTION: ");
    doc.push_str(RUBRIC);
    doc.push_str("\nCAPTION: ");
    doc.push_str(ann.caption.trim());
    doc.push_str(".\nREASONING:\n");
    for c in HarmCategory::ALL {
        doc.push_str(c.name());
        doc.push_str(": ");
        match ann.verdicts.get(&c) {
            Some(Verdict::Applicable { rationale }) => {
                doc.push_str("Applicable. ");
                doc.push_str(rationale.trim());
                doc.push('.');
            }
            _ => doc.push_str(NOT_APPLICABLE),
        }
        doc.push('\n');
    }
    doc.push_str("JUDGEMENT: The image's label is ");
    doc.push_str(ann.judgement.as_str());
    doc.push('.');
    doc
}

/// Per-category verdict recovered from model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParsedVerdict {
    Applicable,
    NotApplicable,
    Missing,
}

impl ParsedVerdict {
    /// Whether the verdict agrees with gold membership. `Missing` never does.
    pub fn matches(self, gold_applicable: bool) -> bool {
        match self {
            ParsedVerdict::Applicable => gold_applicable,
            ParsedVerdict::NotApplicable => !gold_applicable,
            ParsedVerdict::Missing => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Judgement {
    Harmful,
    Nonharmful,
    Unparseable,
}

impl Judgement {
    pub fn label(self) -> Option<BinaryLabel> {
        match self {
            Judgement::Harmful => Some(BinaryLabel::Harmful),
            Judgement::Nonharmful => Some(BinaryLabel::Nonharmful),
            Judgement::Unparseable => None,
        }
    }
}

impl From<BinaryLabel> for Judgement {
    fn from(label: BinaryLabel) -> Self {
        match label {
            BinaryLabel::Harmful => Judgement::Harmful,
            BinaryLabel::Nonharmful => Judgement::Nonharmful,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub raw_tokens: Vec<String>,
    pub caption: Option<String>,
    /// Indexed by [`HarmCategory::index`].
    pub verdicts: [ParsedVerdict; 5],
    pub judgement: Judgement,
}

impl ParsedResponse {
    pub fn verdict(&self, c: HarmCategory) -> ParsedVerdict {
        self.verdicts[c.index()]
    }

    pub fn any_applicable(&self) -> bool {
        self.verdicts.contains(&ParsedVerdict::Applicable)
    }

    /// All four headers present exactly once and in order, a caption, a
    /// verdict for every category and a parseable judgement.
    pub fn is_well_formed(&self) -> bool {
        let headers: Vec<Section> = self
            .raw_tokens
            .iter()
            .filter_map(|t| section_of(t))
            .collect();
        headers
            == [
                Section::Question,
                Section::Caption,
                Section::Reasoning,
                Section::Judgement,
            ]
            && self.caption.is_some()
            && !self.verdicts.contains(&ParsedVerdict::Missing)
            && self.judgement != Judgement::Unparseable
    }
}

/// Body of the first occurrence of `section`, up to the next header.
fn section_body(tokens: &[String], section: Section) -> Option<&[String]> {
    let start = tokens.iter().position(|t| section_of(t) == Some(section))? + 1;
    let len = tokens[start..]
        .iter()
        .position(|t| section_of(t).is_some())
        .unwrap_or(tokens.len() - start);
    Some(&tokens[start..start + len])
}

fn word_eq(token: &str, word: &str) -> bool {
    token.trim_end_matches('.').eq_ignore_ascii_case(word)
}

fn marker_after(body: &[String], mut k: usize) -> Option<ParsedVerdict> {
    if body.get(k).is_some_and(|t| t == ":") {
        k += 1;
    }
    let first = body.get(k)?;
    if word_eq(first, "applicable") {
        Some(ParsedVerdict::Applicable)
    } else if word_eq(first, "not") && body.get(k + 1).is_some_and(|t| word_eq(t, "applicable")) {
        Some(ParsedVerdict::NotApplicable)
    } else {
        None
    }
}

fn parse_verdicts(tokens: &[String]) -> [ParsedVerdict; 5] {
    let mut verdicts = [ParsedVerdict::Missing; 5];
    let Some(body) = section_body(tokens, Section::Reasoning) else {
        return verdicts;
    };
    let mut seen: [Option<ParsedVerdict>; 5] = [None; 5];
    let mut conflict = [false; 5];
    for (j, tok) in body.iter().enumerate() {
        let Some(c) = category_of(tok) else { continue };
        let Some(mark) = marker_after(body, j + 1) else {
            continue;
        };
        let i = c.index();
        match seen[i] {
            None => seen[i] = Some(mark),
            Some(prev) if prev != mark => conflict[i] = true,
            Some(_) => {}
        }
    }
    for i in 0..5 {
        if let (Some(v), false) = (seen[i], conflict[i]) {
            verdicts[i] = v;
        }
    }
    verdicts
}

fn parse_judgement(tokens: &[String]) -> Judgement {
    let mut harmful = false;
    let mut nonharmful = false;
    for w in tokens.windows(JUDGEMENT_PREFIX.len() + 1) {
        if !w
            .iter()
            .zip(JUDGEMENT_PREFIX)
            .all(|(t, p)| t.eq_ignore_ascii_case(p))
        {
            continue;
        }
        let label = &w[JUDGEMENT_PREFIX.len()];
        if word_eq(label, "harmful") {
            harmful = true;
        } else if word_eq(label, "nonharmful") {
            nonharmful = true;
        }
    }
    match (harmful, nonharmful) {
        (true, false) => Judgement::Harmful,
        (false, true) => Judgement::Nonharmful,
        _ => Judgement::Unparseable,
    }
}

/// Total parser: every token sequence yields a response; absent structure
/// shows up as `Missing` verdicts or an `Unparseable` judgement.
///
/// A category whose name appears with contradictory markers is `Missing`.
pub fn parse_response<S: AsRef<str>>(tokens: &[S]) -> ParsedResponse {
    let raw_tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let caption = section_body(&raw_tokens, Section::Caption).and_then(|body| {
        let mut body = body;
        while let Some((last, rest)) = body.split_last() {
            if last == "." || last.starts_with('<') {
                body = rest;
            } else {
                break;
            }
        }
        (!body.is_empty()).then(|| detokenize(body))
    });
    let verdicts = parse_verdicts(&raw_tokens);
    let judgement = parse_judgement(&raw_tokens);
    ParsedResponse {
        raw_tokens,
        caption,
        verdicts,
        judgement,
    }
}
