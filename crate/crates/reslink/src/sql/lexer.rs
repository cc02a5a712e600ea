//! Tokenizer for the SELECT subset. Every token carries its byte offset
//! so parse errors can point at the offending position.

use super::ParseError;

/// Keywords the grammar uses, plus two recognized-but-rejected classes:
/// write-statement openers and constructs outside the subset. Classifying
/// them here lets the parser produce precise errors instead of generic
/// "unexpected identifier" noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Select,
    From,
    Where,
    And,
    Or,
    As,
    Inner,
    Join,
    On,
    Group,
    Order,
    By,
    Asc,
    Desc,
    Limit,
    Offset,
    Count,
    Sum,
    Avg,
    Min,
    Max,
    // write statements — rejected as a class
    Insert,
    Update,
    Delete,
    Drop,
    Create,
    Alter,
    Merge,
    Truncate,
    Grant,
    Revoke,
    Replace,
    Set,
    Call,
    Exec,
    Begin,
    Commit,
    Rollback,
    // recognized constructs outside the grammar
    Union,
    Like,
    In,
    Exists,
    Having,
    Distinct,
    Left,
    Right,
    Full,
    Outer,
    Cross,
    Between,
    Not,
    Null,
    Is,
    Case,
    Cast,
    With,
}

impl Keyword {
    pub fn lookup(word: &str) -> Option<Keyword> {
        use Keyword::*;
        let kw = match word.to_ascii_uppercase().as_str() {
            "SELECT" => Select,
            "FROM" => From,
            "WHERE" => Where,
            "AND" => And,
            "OR" => Or,
            "AS" => As,
            "INNER" => Inner,
            "JOIN" => Join,
            "ON" => On,
            "GROUP" => Group,
            "ORDER" => Order,
            "BY" => By,
            "ASC" => Asc,
            "DESC" => Desc,
            "LIMIT" => Limit,
            "OFFSET" => Offset,
            "COUNT" => Count,
            "SUM" => Sum,
            "AVG" => Avg,
            "MIN" => Min,
            "MAX" => Max,
            "INSERT" => Insert,
            "UPDATE" => Update,
            "DELETE" => Delete,
            "DROP" => Drop,
            "CREATE" => Create,
            "ALTER" => Alter,
            "MERGE" => Merge,
            "TRUNCATE" => Truncate,
            "GRANT" => Grant,
            "REVOKE" => Revoke,
            "REPLACE" => Replace,
            "SET" => Set,
            "CALL" => Call,
            "EXEC" | "EXECUTE" => Exec,
            "BEGIN" => Begin,
            "COMMIT" => Commit,
            "ROLLBACK" => Rollback,
            "UNION" => Union,
            "LIKE" => Like,
            "IN" => In,
            "EXISTS" => Exists,
            "HAVING" => Having,
            "DISTINCT" => Distinct,
            "LEFT" => Left,
            "RIGHT" => Right,
            "FULL" => Full,
            "OUTER" => Outer,
            "CROSS" => Cross,
            "BETWEEN" => Between,
            "NOT" => Not,
            "NULL" => Null,
            "IS" => Is,
            "CASE" => Case,
            "CAST" => Cast,
            "WITH" => With,
            _ => return None,
        };
        Some(kw)
    }

    /// Opens a statement kind that writes or alters state.
    pub fn is_write_statement(&self) -> bool {
        use Keyword::*;
        matches!(
            self,
            Insert
                | Update
                | Delete
                | Drop
                | Create
                | Alter
                | Merge
                | Truncate
                | Grant
                | Revoke
                | Replace
                | Set
                | Call
                | Exec
                | Begin
                | Commit
                | Rollback
        )
    }

    /// Recognized SQL that the subset deliberately excludes.
    pub fn is_unsupported(&self) -> bool {
        use Keyword::*;
        matches!(
            self,
            Union
                | Like
                | In
                | Exists
                | Having
                | Distinct
                | Left
                | Right
                | Full
                | Outer
                | Cross
                | Between
                | Not
                | Null
                | Is
                | Case
                | Cast
                | With
        )
    }

    pub fn name(&self) -> String {
        format!("{self:?}").to_ascii_uppercase()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Keyword(Keyword),
    Ident(String),
    Integer(i64),
    Float(f64),
    Str(String),
    Comma,
    Dot,
    Star,
    LParen,
    RParen,
    Semicolon,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Token {
    pub fn describe(&self) -> String {
        match self {
            Token::Keyword(kw) => format!("keyword {}", kw.name()),
            Token::Ident(name) => format!("identifier '{name}'"),
            Token::Integer(v) => format!("integer {v}"),
            Token::Float(v) => format!("float {v}"),
            Token::Str(_) => "string literal".to_string(),
            Token::Comma => "','".to_string(),
            Token::Dot => "'.'".to_string(),
            Token::Star => "'*'".to_string(),
            Token::LParen => "'('".to_string(),
            Token::RParen => "')'".to_string(),
            Token::Semicolon => "';'".to_string(),
            Token::Eq => "'='".to_string(),
            Token::Ne => "'!='".to_string(),
            Token::Lt => "'<'".to_string(),
            Token::Le => "'<='".to_string(),
            Token::Gt => "'>'".to_string(),
            Token::Ge => "'>='".to_string(),
        }
    }
}

/// A token plus the byte offset where it starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub token: Token,
    pub position: usize,
}

pub fn tokenize(input: &str) -> Result<Vec<Spanned>, ParseError> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;

    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
            }
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                return Err(ParseError::syntax(start, "comments are not supported"));
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                return Err(ParseError::syntax(start, "comments are not supported"));
            }
            b'#' => {
                return Err(ParseError::syntax(start, "comments are not supported"));
            }
            b',' => {
                tokens.push(Spanned { token: Token::Comma, position: start });
                i += 1;
            }
            b'.' => {
                tokens.push(Spanned { token: Token::Dot, position: start });
                i += 1;
            }
            b'*' => {
                tokens.push(Spanned { token: Token::Star, position: start });
                i += 1;
            }
            b'(' => {
                tokens.push(Spanned { token: Token::LParen, position: start });
                i += 1;
            }
            b')' => {
                tokens.push(Spanned { token: Token::RParen, position: start });
                i += 1;
            }
            b';' => {
                tokens.push(Spanned { token: Token::Semicolon, position: start });
                i += 1;
            }
            b'=' => {
                tokens.push(Spanned { token: Token::Eq, position: start });
                i += 1;
            }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Spanned { token: Token::Ne, position: start });
                    i += 2;
                } else {
                    return Err(ParseError::syntax(start, "expected '=' after '!'"));
                }
            }
            b'<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Spanned { token: Token::Le, position: start });
                    i += 2;
                } else if bytes.get(i + 1) == Some(&b'>') {
                    return Err(ParseError::unsupported(
                        start,
                        "operator '<>' is not supported; use '!='",
                    ));
                } else {
                    tokens.push(Spanned { token: Token::Lt, position: start });
                    i += 1;
                }
            }
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Spanned { token: Token::Ge, position: start });
                    i += 2;
                } else {
                    tokens.push(Spanned { token: Token::Gt, position: start });
                    i += 1;
                }
            }
            b'\'' => {
                let (token, next) = lex_string(input, start)?;
                tokens.push(Spanned { token, position: start });
                i = next;
            }
            b'-' | b'0'..=b'9' => {
                if b == b'-' && !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                    return Err(ParseError::syntax(start, "expected digits after '-'"));
                }
                let (token, next) = lex_number(input, start)?;
                tokens.push(Spanned { token, position: start });
                i = next;
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let mut end = i + 1;
                while end < bytes.len()
                    && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                let word = &input[i..end];
                let token = match Keyword::lookup(word) {
                    Some(kw) => Token::Keyword(kw),
                    None => Token::Ident(word.to_string()),
                };
                tokens.push(Spanned { token, position: start });
                i = end;
            }
            b'"' | b'`' => {
                return Err(ParseError::unsupported(
                    start,
                    "quoted identifiers are not supported",
                ));
            }
            _ => {
                return Err(ParseError::syntax(
                    start,
                    format!("unexpected character {:?}", input[start..].chars().next().unwrap()),
                ));
            }
        }
    }
    Ok(tokens)
}

fn lex_string(input: &str, start: usize) -> Result<(Token, usize), ParseError> {
    let bytes = input.as_bytes();
    let mut value = String::new();
    let mut i = start + 1;
    loop {
        match bytes.get(i) {
            None => return Err(ParseError::syntax(start, "unterminated string literal")),
            Some(b'\'') => {
                if bytes.get(i + 1) == Some(&b'\'') {
                    value.push('\'');
                    i += 2;
                } else {
                    return Ok((Token::Str(value), i + 1));
                }
            }
            Some(_) => {
                // copy the full UTF-8 character, not just one byte
                let ch = input[i..].chars().next().unwrap();
                value.push(ch);
                i += ch.len_utf8();
            }
        }
    }
}

fn lex_number(input: &str, start: usize) -> Result<(Token, usize), ParseError> {
    let bytes = input.as_bytes();
    let mut i = start;
    if bytes[i] == b'-' {
        i += 1;
    }
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut is_float = false;
    if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
        is_float = true;
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            is_float = true;
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    let text = &input[start..i];
    if is_float {
        let value: f64 = text
            .parse()
            .map_err(|_| ParseError::syntax(start, format!("invalid number '{text}'")))?;
        if !value.is_finite() {
            return Err(ParseError::syntax(start, format!("number '{text}' is out of range")));
        }
        Ok((Token::Float(value), i))
    } else {
        let value: i64 = text.parse().map_err(|_| {
            ParseError::syntax(start, format!("integer '{text}' is out of range"))
        })?;
        Ok((Token::Integer(value), i))
    }
}
