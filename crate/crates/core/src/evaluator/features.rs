//! Fixed-order numeric features of a submission.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::domain::Difficulty;
use crate::textsim::{text_cosine, Vectorizer};

/// Identifies the slot layout below; stored in every trained model.
pub const FEATURE_SCHEMA_VERSION: &str = "fv1";
pub const FEATURE_COUNT: usize = 10;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "line_count",
    "token_count",
    "unique_identifier_count",
    "max_nesting_depth",
    "branch_keyword_count",
    "comment_ratio",
    "mean_line_length",
    "qa_similarity",
    "rubric_similarity",
    "difficulty_ordinal",
];

pub const BRANCH_KEYWORDS: [&str; 11] =
    ["if", "elif", "else", "for", "while", "case", "match", "except", "catch", "and", "or"];

/// Reserved words never counted as identifiers (Python plus common C-family words).
const RESERVED: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in",
    "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while", "with",
    "yield", "case", "match", "catch", "switch", "do", "const", "let", "var", "function", "new",
    "this", "void", "int", "float", "double", "char", "bool", "true", "false", "null", "public",
    "private", "static", "struct", "fn", "mut", "impl", "use", "pub",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub line_count: f64,
    pub token_count: f64,
    pub unique_identifier_count: f64,
    pub max_nesting_depth: f64,
    pub branch_keyword_count: f64,
    pub comment_ratio: f64,
    pub mean_line_length: f64,
    pub qa_similarity: f64,
    pub rubric_similarity: f64,
    pub difficulty_ordinal: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.line_count,
            self.token_count,
            self.unique_identifier_count,
            self.max_nesting_depth,
            self.branch_keyword_count,
            self.comment_ratio,
            self.mean_line_length,
            self.qa_similarity,
            self.rubric_similarity,
            self.difficulty_ordinal,
        ]
    }

    pub fn from_array(v: [f64; FEATURE_COUNT]) -> Self {
        Self {
            line_count: v[0],
            token_count: v[1],
            unique_identifier_count: v[2],
            max_nesting_depth: v[3],
            branch_keyword_count: v[4],
            comment_ratio: v[5],
            mean_line_length: v[6],
            qa_similarity: v[7],
            rubric_similarity: v[8],
            difficulty_ordinal: v[9],
        }
    }

    pub fn schema_version(&self) -> &'static str {
        FEATURE_SCHEMA_VERSION
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

fn is_comment_line(trimmed: &str) -> bool {
    trimmed.starts_with('#')
        || trimmed.starts_with("//")
        || trimmed.starts_with("/*")
        || trimmed == "*"
        || trimmed.starts_with("* ")
        || trimmed.starts_with("*/")
}

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Word(&'a str),
    Str,
    Punct(char),
}

/// Lexes one line of code, dropping trailing `#` / `//` comments. Brackets
/// update `depth`; the deepest point reached is returned.
fn lex_line<'a>(line: &'a str, depth: &mut i64, toks: &mut Vec<Tok<'a>>) -> i64 {
    let bytes: Vec<(usize, char)> = line.char_indices().collect();
    let mut max_depth = *depth;
    let mut i = 0;
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        if c == '#' || (c == '/' && bytes.get(i + 1).map(|b| b.1) == Some('/')) {
            break;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            i += 1;
            while i < bytes.len() && bytes[i].1 != quote {
                if bytes[i].1 == '\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
            toks.push(Tok::Str);
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            let start = pos;
            let mut end = line.len();
            while i < bytes.len() {
                let ch = bytes[i].1;
                let cont = ch.is_alphanumeric() || ch == '_' || (ch == '.' && c.is_ascii_digit());
                if !cont {
                    end = bytes[i].0;
                    break;
                }
                i += 1;
            }
            toks.push(Tok::Word(&line[start..end]));
            continue;
        }
        if !c.is_whitespace() {
            match c {
                '(' | '[' | '{' => {
                    *depth += 1;
                    max_depth = max_depth.max(*depth);
                }
                ')' | ']' | '}' => *depth = (*depth - 1).max(0),
                _ => {}
            }
            toks.push(Tok::Punct(c));
        }
        i += 1;
    }
    max_depth
}

fn indent_width(line: &str) -> usize {
    line.chars()
        .take_while(|c| c.is_whitespace())
        .map(|c| if c == '\t' { 4 } else { 1 })
        .sum()
}

/// Static code metrics plus the two similarity features.
///
/// Nesting is the larger of the deepest bracket nesting `([{` and the deepest
/// indentation level, where one level is the smallest nonzero indentation
/// seen in the file. Comment lines are lines whose first non-blank characters
/// are `#`, `//`, `/*` or a block-comment `*`.
pub fn extract_features(
    code: &str,
    question: &str,
    rubric: &str,
    difficulty: Difficulty,
    vectorizer: &dyn Vectorizer,
) -> FeatureVector {
    let lines: Vec<&str> = code.lines().collect();
    let mut toks = Vec::new();
    let mut depth = 0i64;
    let mut max_bracket = 0i64;
    let mut comment_lines = 0usize;
    let mut widths = Vec::new();

    for line in &lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if is_comment_line(trimmed) {
            comment_lines += 1;
            continue;
        }
        widths.push(indent_width(line));
        max_bracket = max_bracket.max(lex_line(line, &mut depth, &mut toks));
    }

    let unit = widths.iter().copied().filter(|w| *w > 0).min();
    let max_indent = match unit {
        Some(u) => widths.iter().map(|w| w / u).max().unwrap_or(0),
        None => 0,
    };

    let mut identifiers = HashSet::new();
    let mut branches = 0usize;
    for t in &toks {
        if let Tok::Word(w) = t {
            if BRANCH_KEYWORDS.contains(w) {
                branches += 1;
            }
            let starts_ident = w.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_');
            if starts_ident && !RESERVED.contains(w) {
                identifiers.insert(*w);
            }
        }
    }

    let line_count = lines.len();
    let total_chars: usize = lines.iter().map(|l| l.chars().count()).sum();
    let (qa, rub) = if code.trim().is_empty() {
        (0.0, 0.0)
    } else {
        (text_cosine(vectorizer, code, question), text_cosine(vectorizer, code, rubric))
    };

    FeatureVector {
        line_count: line_count as f64,
        token_count: toks.len() as f64,
        unique_identifier_count: identifiers.len() as f64,
        max_nesting_depth: (max_indent as i64).max(max_bracket) as f64,
        branch_keyword_count: branches as f64,
        comment_ratio: comment_lines as f64 / line_count.max(1) as f64,
        mean_line_length: if line_count == 0 { 0.0 } else { total_chars as f64 / line_count as f64 },
        qa_similarity: qa,
        rubric_similarity: rub,
        difficulty_ordinal: f64::from(difficulty.ordinal()),
    }
}
