//! Minimal hand-rolled lexer shared by the rule and program parsers.
//!
//! `#` starts a comment running to end of line. String literals use double
//! quotes and contain no escapes or newlines.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    /// Identifier or keyword; case is inspected by the parsers.
    Word(String),
    Str(String),
    Int(i64),
    /// Punctuation, longest match first: `:=` `==` `=>` before `:` `=`.
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::Int(i) => write!(f, "{i}"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Lexed {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("lex error at {line}:{col}: {message}")]
pub(crate) struct LexError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

const SYMBOLS: &[&str] = &[
    ":=", "==", "=>", "(", ")", "{", "}", "[", "]", ",", ";", ":", "|", "*", "+", "?", "/",
    "=", ".",
];

pub(crate) fn lex(text: &str) -> Result<Vec<Lexed>, LexError> {
    let mut out = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut chars = text.chars().peekable();

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        if c == '#' {
            while let Some(&n) = chars.peek() {
                if n == '\n' {
                    break;
                }
                bump!();
            }
            continue;
        }
        if c.is_whitespace() {
            bump!();
            continue;
        }
        let (tline, tcol) = (line, col);
        if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match chars.peek() {
                    Some('"') => {
                        bump!();
                        break;
                    }
                    Some('\n') | None => {
                        return Err(LexError {
                            line: tline,
                            col: tcol,
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some(&ch) => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            out.push(Lexed {
                tok: Tok::Str(s),
                line: tline,
                col: tcol,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_ascii_digit() {
                    s.push(d);
                    bump!();
                } else {
                    break;
                }
            }
            let value = s.parse::<i64>().map_err(|_| LexError {
                line: tline,
                col: tcol,
                message: format!("integer literal out of range: {s}"),
            })?;
            out.push(Lexed {
                tok: Tok::Int(value),
                line: tline,
                col: tcol,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    s.push(d);
                    bump!();
                } else {
                    break;
                }
            }
            out.push(Lexed {
                tok: Tok::Word(s),
                line: tline,
                col: tcol,
            });
            continue;
        }
        // Punctuation, longest match first.
        let mut matched = None;
        for sym in SYMBOLS {
            let mut probe = chars.clone();
            if sym.chars().all(|sc| probe.next() == Some(sc)) {
                matched = Some(*sym);
                break;
            }
        }
        match matched {
            Some(sym) => {
                for _ in 0..sym.len() {
                    bump!();
                }
                out.push(Lexed {
                    tok: Tok::Sym(sym),
                    line: tline,
                    col: tcol,
                });
            }
            None => {
                return Err(LexError {
                    line: tline,
                    col: tcol,
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    out.push(Lexed {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

/// Cursor over a lexed token stream with single-token lookahead.
pub(crate) struct Cursor {
    toks: Vec<Lexed>,
    pos: usize,
}

impl Cursor {
    pub fn new(toks: Vec<Lexed>) -> Self {
        Self { toks, pos: 0 }
    }

    pub fn peek(&self) -> &Lexed {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    pub fn peek2(&self) -> &Lexed {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)]
    }

    pub fn next(&mut self) -> Lexed {
        let t = self.toks[self.pos.min(self.toks.len() - 1)].clone();
        if self.pos < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn at_sym(&self, sym: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(s) if *s == sym)
    }

    pub fn at_word(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(w) if w == word)
    }

    pub fn eat_sym(&mut self, sym: &str) -> bool {
        if self.at_sym(sym) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn eat_word(&mut self, word: &str) -> bool {
        if self.at_word(word) {
            self.next();
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_symbols_longest_first() {
        let toks = lex("a := b == 1 => c;").unwrap();
        let syms: Vec<_> = toks
            .iter()
            .filter_map(|t| match &t.tok {
                Tok::Sym(s) => Some(*s),
                _ => None,
            })
            .collect();
        assert_eq!(syms, vec![":=", "==", "=>", ";"]);
    }

    #[test]
    fn comments_and_positions() {
        let toks = lex("# header\nfoo \"bar\"").unwrap();
        assert_eq!(toks[0].tok, Tok::Word("foo".into()));
        assert_eq!((toks[0].line, toks[0].col), (2, 1));
        assert_eq!(toks[1].tok, Tok::Str("bar".into()));
    }

    #[test]
    fn unterminated_string_is_an_error() {
        assert!(lex("\"oops").is_err());
    }
}
