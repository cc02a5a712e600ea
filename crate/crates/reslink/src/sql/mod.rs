//! SQL frontend: a closed SELECT subset with a hand-written lexer, parser
//! and canonical renderer. See [`GRAMMAR`] for the full grammar text.

pub mod ast;
mod lexer;
mod parser;
mod render;

pub use parser::parse;
pub use render::render;

/// The grammar document, served verbatim by the `query_help` tool.
pub const GRAMMAR: &str = include_str!("../../../../docs/query-grammar.txt");

/// Hard cap on query text size, checked before lexing.
pub const MAX_QUERY_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// Malformed input.
    Syntax,
    /// Recognized SQL that the subset deliberately excludes.
    Unsupported,
    /// INSERT, UPDATE, DDL and friends. Always rejected.
    WriteRejected,
}

impl ParseErrorKind {
    pub fn label(&self) -> &'static str {
        match self {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::Unsupported => "unsupported construct",
            ParseErrorKind::WriteRejected => "write statement rejected",
        }
    }
}

/// A parse failure with the byte offset it was detected at. The position
/// is surfaced to callers so hosts can point models at the exact spot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
    pub message: String,
}

impl ParseError {
    pub fn syntax(position: usize, message: impl Into<String>) -> Self {
        Self { kind: ParseErrorKind::Syntax, position, message: message.into() }
    }

    pub fn unsupported(position: usize, message: impl Into<String>) -> Self {
        Self { kind: ParseErrorKind::Unsupported, position, message: message.into() }
    }

    pub fn write_rejected(position: usize, message: impl Into<String>) -> Self {
        Self { kind: ParseErrorKind::WriteRejected, position, message: message.into() }
    }
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at byte {}: {}", self.kind.label(), self.position, self.message)
    }
}

impl std::error::Error for ParseError {}
