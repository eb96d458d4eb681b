//! Rule-based thought-action consistency.
//!
//! Intent cues are whole-token, case-insensitive keyword hits. When several
//! action families are mentioned the highest-priority one wins:
//! terminate > system button > type > swipe > click.

use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionKind, Button};
use crate::reward::swipe::{quantize_direction, Direction};
use crate::reward::text::normalize_text;

/// Score for a thought whose stated intent matches the action.
pub const CONSISTENT_SCORE: f64 = 1.0;
/// Score when the intent family matches but an argument cue conflicts.
pub const ARGUMENT_CONFLICT_SCORE: f64 = -0.5;
/// Score when the intent family disagrees with the action kind.
pub const TYPE_CONFLICT_SCORE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyLabel {
    Consistent,
    Neutral,
    Contradictory,
}

impl ConsistencyLabel {
    fn from_score(s: f64) -> Self {
        if s > 0.0 {
            ConsistencyLabel::Consistent
        } else if s < 0.0 {
            ConsistencyLabel::Contradictory
        } else {
            ConsistencyLabel::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub label: ConsistencyLabel,
    pub s: f64,
    /// Extracted cues, e.g. `intent:type(type)`, `quote:hello`, `direction:up`.
    pub cues: Vec<String>,
}

impl ConsistencyVerdict {
    pub fn from_score(s: f64, cues: Vec<String>) -> Self {
        let s = s.clamp(-1.0, 1.0);
        ConsistencyVerdict {
            label: ConsistencyLabel::from_score(s),
            s,
            cues,
        }
    }

    pub fn neutral() -> Self {
        Self::from_score(0.0, Vec::new())
    }
}

/// Families in priority order, each with its keyword lexicon.
const LEXICON: [(ActionKind, &[&str]); 5] = [
    (
        ActionKind::Terminate,
        &["terminate", "stop", "task complete", "finish", "infeasible"],
    ),
    (
        ActionKind::SystemButton,
        &["back", "home", "navigate back", "go back"],
    ),
    (ActionKind::Type, &["type", "enter", "input", "fill"]),
    (ActionKind::Swipe, &["swipe", "scroll", "drag"]),
    (ActionKind::Click, &["click", "tap", "press", "select"]),
];

fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let words: Vec<&str> = phrase.split(' ').collect();
    tokens
        .windows(words.len())
        .any(|w| w.iter().zip(&words).all(|(t, p)| t == p))
}

/// Quoted spans: "...", “...”, and '...' where the single quotes sit on word
/// boundaries (so apostrophes in "I'll" do not open a quote).
fn quoted_spans(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let close = match chars[i] {
            '"' => Some('"'),
            '\u{201C}' => Some('\u{201D}'),
            '\u{2018}' => Some('\u{2019}'),
            '\'' if i == 0 || !chars[i - 1].is_alphanumeric() => Some('\''),
            _ => None,
        };
        let Some(close) = close else {
            i += 1;
            continue;
        };
        let end = (i + 1..chars.len()).find(|&j| {
            chars[j] == close
                && (close != '\'' || chars.get(j + 1).is_none_or(|c| !c.is_alphanumeric()))
        });
        match end {
            Some(j) => {
                let span: String = chars[i + 1..j].iter().collect();
                if !span.trim().is_empty() {
                    out.push(span);
                }
                i = j + 1;
            }
            None => i += 1,
        }
    }
    out
}

fn stated_direction(tokens: &[String]) -> Option<Direction> {
    tokens.iter().find_map(|t| match t.as_str() {
        "up" => Some(Direction::Up),
        "down" => Some(Direction::Down),
        "left" => Some(Direction::Left),
        "right" => Some(Direction::Right),
        _ => None,
    })
}

/// Scores how well `predicted` instantiates the intent stated in `thought`.
pub fn score_consistency(thought: &str, predicted: &Action) -> ConsistencyVerdict {
    let tokens = tokenize(thought);
    let mut cues = Vec::new();
    let mut intent = None;
    for (family, words) in LEXICON {
        for word in words.iter().filter(|w| contains_phrase(&tokens, w)) {
            cues.push(format!("intent:{family}({word})"));
            intent.get_or_insert(family);
        }
    }
    let Some(intent) = intent else {
        return ConsistencyVerdict::from_score(0.0, cues);
    };
    if intent != predicted.kind() {
        return ConsistencyVerdict::from_score(TYPE_CONFLICT_SCORE, cues);
    }

    let conflict = match predicted {
        Action::Type { text } => {
            let quotes = quoted_spans(thought);
            let typed = normalize_text(text);
            for q in &quotes {
                cues.push(format!("quote:{q}"));
            }
            !quotes.is_empty()
                && !quotes
                    .iter()
                    .any(|q| typed.contains(normalize_text(q).as_str()))
        }
        Action::Swipe { from, to } => match stated_direction(&tokens) {
            Some(stated) => {
                cues.push(format!("direction:{stated}"));
                quantize_direction(*from, *to) != Some(stated)
            }
            None => false,
        },
        Action::SystemButton { button } => {
            let back = tokens.iter().any(|t| t == "back");
            let home = tokens.iter().any(|t| t == "home");
            let named = match (back, home) {
                (true, false) => Some(Button::Back),
                (false, true) => Some(Button::Home),
                _ => None,
            };
            if let Some(named) = named {
                cues.push(format!("button:{}", named.as_str()));
            }
            named.is_some_and(|b| b != *button)
        }
        _ => false,
    };
    let s = if conflict {
        ARGUMENT_CONFLICT_SCORE
    } else {
        CONSISTENT_SCORE
    };
    ConsistencyVerdict::from_score(s, cues)
}

/// Rescales `s` from `[-1, 1]` to `[0, 1]`.
pub fn consistency_reward(verdict: &ConsistencyVerdict) -> f64 {
    (verdict.s.clamp(-1.0, 1.0) + 1.0) / 2.0
}
