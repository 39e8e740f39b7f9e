//! Token mask that keeps generated line bodies well formed.

use trajlang_core::codec::{classify, CharClass, SymbolKind, DELIMITER, FINAL_HOME, SEPARATOR, TEMP_HOME};
use trajlang_core::tokenizer::BpeVocab;

use crate::generate::TokenConstraint;

/// Position in the body grammar `cell ( [,] _ interval cell )* .`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyState {
    /// Inside a cell with this many levels written (5 means complete).
    Cell(u8),
    AfterTempHome,
    AfterSeparator,
    Done,
}

impl BodyState {
    pub const START: BodyState = BodyState::Cell(0);

    /// State after one character, or `None` when the character is illegal.
    pub fn step(self, c: char) -> Option<BodyState> {
        let class = classify(c)?;
        match (self, class) {
            (BodyState::Cell(k), CharClass::Symbol(SymbolKind::Level(l))) if k < 5 && l == k + 1 => Some(BodyState::Cell(l)),
            (BodyState::Cell(5), CharClass::Grammar(FINAL_HOME)) => Some(BodyState::Done),
            (BodyState::Cell(5), CharClass::Grammar(TEMP_HOME)) => Some(BodyState::AfterTempHome),
            (BodyState::Cell(5) | BodyState::AfterTempHome, CharClass::Grammar(SEPARATOR)) => {
                Some(BodyState::AfterSeparator)
            }
            (BodyState::AfterSeparator, CharClass::Symbol(SymbolKind::Interval)) => Some(BodyState::Cell(0)),
            _ => None,
        }
    }

    pub fn run(self, text: &str) -> Option<BodyState> {
        text.chars().try_fold(self, |s, c| s.step(c))
    }

    /// State at the end of a line prefix (conditioning included).
    pub fn after_prefix(text: &str) -> Option<BodyState> {
        let body = match text.rfind(DELIMITER) {
            Some(i) => &text[i + DELIMITER.len_utf8()..],
            None => text,
        };
        BodyState::START.run(body)
    }
}

/// Token surfaces of a vocabulary, for fast state transitions.
#[derive(Debug, Clone)]
pub struct LineGrammar {
    surfaces: Vec<String>,
}

impl LineGrammar {
    pub fn new(vocab: &BpeVocab) -> Self {
        let surfaces = (0..vocab.len() as u32).map(|i| vocab.surface(i).map(str::to_string).unwrap_or_default()).collect();
        Self { surfaces }
    }

    pub fn next_state(&self, state: BodyState, token: u32) -> Option<BodyState> {
        let s = self.surfaces.get(token as usize)?;
        if s.is_empty() {
            return None;
        }
        state.run(s)
    }

    pub fn constraint(&self, state: BodyState) -> GrammarConstraint<'_> {
        GrammarConstraint { grammar: self, state }
    }
}

#[derive(Debug, Clone)]
pub struct GrammarConstraint<'g> {
    grammar: &'g LineGrammar,
    state: BodyState,
}

impl GrammarConstraint<'_> {
    pub fn state(&self) -> BodyState {
        self.state
    }
}

impl TokenConstraint for GrammarConstraint<'_> {
    fn allowed(&self, token: u32) -> bool {
        self.grammar.next_state(self.state, token).is_some()
    }

    fn advance(&mut self, token: u32) {
        self.state = self.grammar.next_state(self.state, token).unwrap_or(BodyState::Done);
    }
}
