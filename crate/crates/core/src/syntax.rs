//! Tokenizer shared by the fact text format and the rule language.

use std::fmt;

/// A 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl serde::Serialize for Pos {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    /// Identifier or keyword. Words that start with a digit followed by
    /// letters (`2p`) are lexed as identifiers too.
    Ident(String),
    Int(i64),
    /// Double-quoted text literal.
    Text(String),
    /// Single-quoted symbol literal.
    QuotedSym(String),
    /// `@name` machine address.
    Addr(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Colon,
    /// `:-`
    Turnstile,
    Bang,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Star,
    Underscore,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Text(s) => write!(f, "{s:?}"),
            Tok::QuotedSym(s) => write!(f, "'{s}'"),
            Tok::Addr(s) => write!(f, "`@{s}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Turnstile => f.write_str("`:-`"),
            Tok::Bang => f.write_str("`!`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Ne => f.write_str("`!=`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Underscore => f.write_str("`_`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{pos}: {message}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
}

impl SyntaxError {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        SyntaxError { pos, message: message.into() }
    }
}

pub fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// True if `s` can be written bare as an identifier.
pub fn is_plain_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if is_ident_start(c) => chars.all(is_ident_char) && s != "_",
        _ => false,
    }
}

pub fn tokenize(src: &str) -> Result<Vec<(Tok, Pos)>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    macro_rules! bump {
        () => {{
            let c = chars[i];
            i += 1;
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos::new(line, col);
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let peek = chars.get(i + 1).copied();
        let tok = match c {
            '(' => {
                bump!();
                Tok::LParen
            }
            ')' => {
                bump!();
                Tok::RParen
            }
            '{' => {
                bump!();
                Tok::LBrace
            }
            '}' => {
                bump!();
                Tok::RBrace
            }
            ',' => {
                bump!();
                Tok::Comma
            }
            '.' => {
                bump!();
                Tok::Dot
            }
            '*' => {
                bump!();
                Tok::Star
            }
            '=' => {
                bump!();
                Tok::Eq
            }
            ':' if peek == Some('-') => {
                bump!();
                bump!();
                Tok::Turnstile
            }
            ':' => {
                bump!();
                Tok::Colon
            }
            '!' if peek == Some('=') => {
                bump!();
                bump!();
                Tok::Ne
            }
            '!' => {
                bump!();
                Tok::Bang
            }
            '<' if peek == Some('=') => {
                bump!();
                bump!();
                Tok::Le
            }
            '<' => {
                bump!();
                Tok::Lt
            }
            '>' if peek == Some('=') => {
                bump!();
                bump!();
                Tok::Ge
            }
            '>' => {
                bump!();
                Tok::Gt
            }
            '"' | '\'' => {
                let quote = bump!();
                let mut s = String::new();
                loop {
                    if i >= chars.len() {
                        return Err(SyntaxError::new(pos, "unterminated quoted literal"));
                    }
                    let ch = bump!();
                    if ch == quote {
                        break;
                    }
                    if ch == '\\' {
                        if i >= chars.len() {
                            return Err(SyntaxError::new(pos, "unterminated quoted literal"));
                        }
                        let esc = bump!();
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                    } else {
                        s.push(ch);
                    }
                }
                if quote == '"' {
                    Tok::Text(s)
                } else {
                    Tok::QuotedSym(s)
                }
            }
            '@' => {
                bump!();
                let mut s = String::new();
                while i < chars.len() && is_ident_char(chars[i]) {
                    s.push(bump!());
                }
                if s.is_empty() {
                    return Err(SyntaxError::new(pos, "expected address name after `@`"));
                }
                Tok::Addr(s)
            }
            '-' if peek.is_some_and(|p| p.is_ascii_digit()) => {
                bump!();
                let digits = take_digits(&chars, &mut i, &mut col);
                let v: i64 =
                    format!("-{digits}").parse().map_err(|_| SyntaxError::new(pos, "integer literal out of range"))?;
                Tok::Int(v)
            }
            d if d.is_ascii_digit() => {
                let digits = take_digits(&chars, &mut i, &mut col);
                if i < chars.len() && is_ident_start(chars[i]) {
                    let mut word = digits;
                    while i < chars.len() && is_ident_char(chars[i]) {
                        word.push(bump!());
                    }
                    Tok::Ident(word)
                } else {
                    Tok::Int(digits.parse().map_err(|_| SyntaxError::new(pos, "integer literal out of range"))?)
                }
            }
            s if is_ident_start(s) => {
                let mut word = String::new();
                while i < chars.len() && is_ident_char(chars[i]) {
                    word.push(bump!());
                }
                if word == "_" {
                    Tok::Underscore
                } else {
                    Tok::Ident(word)
                }
            }
            other => return Err(SyntaxError::new(pos, format!("unexpected character `{other}`"))),
        };
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos::new(line, col)));
    Ok(out)
}

fn take_digits(chars: &[char], i: &mut usize, col: &mut u32) -> String {
    let mut s = String::new();
    while *i < chars.len() && chars[*i].is_ascii_digit() {
        s.push(chars[*i]);
        *i += 1;
        *col += 1;
    }
    s
}

/// Cursor over a token stream with one-token lookahead.
pub struct Cursor {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Cursor {
    pub fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(Cursor { toks: tokenize(src)?, at: 0 })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    pub fn peek_at(&self, n: usize) -> &Tok {
        let idx = (self.at + n).min(self.toks.len() - 1);
        &self.toks[idx].0
    }

    pub fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    pub fn bump(&mut self) -> (Tok, Pos) {
        let item = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        item
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: &Tok) -> Result<Pos, SyntaxError> {
        if self.peek() == tok {
            Ok(self.bump().1)
        } else {
            Err(SyntaxError::new(self.pos(), format!("expected {tok}, found {}", self.peek())))
        }
    }

    pub fn expect_ident(&mut self) -> Result<(String, Pos), SyntaxError> {
        match self.bump() {
            (Tok::Ident(s), p) => Ok((s, p)),
            (t, p) => Err(SyntaxError::new(p, format!("expected identifier, found {t}"))),
        }
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }
}
