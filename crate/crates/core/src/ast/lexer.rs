use super::parser::SyntaxError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Keyword(&'static str),
    Int(String),
    Float(String),
    Str(String),
    Char(String),
    Punct(&'static str),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Keyword(k) => format!("`{k}`"),
            Tok::Int(s) | Tok::Float(s) => format!("number `{s}`"),
            Tok::Str(s) => format!("string {s}"),
            Tok::Char(s) => format!("character {s}"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

const KEYWORDS: &[&str] = &[
    "break", "char", "const", "continue", "do", "double", "else", "enum", "extern", "float", "for",
    "if", "int", "long", "return", "short", "signed", "sizeof", "static", "struct", "union",
    "unsigned", "void", "volatile", "while", "bool", "inline", "register",
];

// Longest first so that maximal munch falls out of a linear scan.
const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "(", ")", "{", "}", "[", "]", ";", ",", ".", "+",
    "-", "*", "/", "%", "&", "|", "^", "!", "~", "<", ">", "=", "?", ":",
];

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else if (b & 0xC0) != 0x80 {
            // count characters, not UTF-8 continuation bytes
            self.col += 1;
        }
        Some(b)
    }

    fn error(&self, expected: &[&str], found: &str) -> SyntaxError {
        SyntaxError {
            line: self.line,
            col: self.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: found.to_string(),
        }
    }
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut cur = Cursor {
        src: text.as_bytes(),
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        skip_trivia(&mut cur)?;
        let (line, col) = (cur.line, cur.col);
        let Some(b) = cur.peek() else {
            out.push(Token {
                tok: Tok::Eof,
                line,
                col,
                end_line: line,
                end_col: col,
            });
            return Ok(out);
        };
        let start = cur.pos;
        let mut end = (line, col);
        let tok = if b.is_ascii_alphabetic() || b == b'_' {
            while matches!(cur.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                end = (cur.line, cur.col);
                cur.bump();
            }
            let word = &text[start..cur.pos];
            match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Keyword(k),
                None => Tok::Ident(word.to_string()),
            }
        } else if b.is_ascii_digit()
            || (b == b'.' && cur.peek_at(1).is_some_and(|c| c.is_ascii_digit()))
        {
            let mut is_float = false;
            if b == b'0' && matches!(cur.peek_at(1), Some(b'x' | b'X')) {
                end = (cur.line, cur.col + 1);
                cur.bump();
                cur.bump();
                while matches!(cur.peek(), Some(c) if c.is_ascii_hexdigit()) {
                    end = (cur.line, cur.col);
                    cur.bump();
                }
            } else {
                while let Some(c) = cur.peek() {
                    let exp_sign = matches!(c, b'+' | b'-')
                        && matches!(cur.src.get(cur.pos.wrapping_sub(1)), Some(b'e' | b'E'))
                        && is_float;
                    if c.is_ascii_digit() || c == b'.' || exp_sign {
                        is_float |= c == b'.';
                    } else if matches!(c, b'e' | b'E') {
                        is_float = true;
                    } else {
                        break;
                    }
                    end = (cur.line, cur.col);
                    cur.bump();
                }
            }
            while matches!(cur.peek(), Some(b'u' | b'U' | b'l' | b'L' | b'f' | b'F')) {
                end = (cur.line, cur.col);
                cur.bump();
            }
            let lit = text[start..cur.pos].to_string();
            if is_float {
                Tok::Float(lit)
            } else {
                Tok::Int(lit)
            }
        } else if b == b'"' || b == b'\'' {
            let quote = b;
            cur.bump();
            loop {
                match cur.peek() {
                    None | Some(b'\n') => {
                        return Err(
                            cur.error(&[if quote == b'"' { "`\"`" } else { "`'`" }], "end of line")
                        )
                    }
                    Some(b'\\') => {
                        cur.bump();
                        cur.bump();
                    }
                    Some(c) if c == quote => {
                        end = (cur.line, cur.col);
                        cur.bump();
                        break;
                    }
                    Some(_) => {
                        cur.bump();
                    }
                }
            }
            let lit = text[start..cur.pos].to_string();
            if quote == b'"' {
                Tok::Str(lit)
            } else {
                Tok::Char(lit)
            }
        } else {
            let rest = &cur.src[cur.pos..];
            let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(p.as_bytes())) else {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(cur.error(&["token"], &format!("`{ch}`")));
            };
            for _ in 0..p.len() {
                end = (cur.line, cur.col);
                cur.bump();
            }
            Tok::Punct(p)
        };
        out.push(Token {
            tok,
            line,
            col,
            end_line: end.0,
            end_col: end.1,
        });
    }
}

fn skip_trivia(cur: &mut Cursor<'_>) -> Result<(), SyntaxError> {
    loop {
        match (cur.peek(), cur.peek_at(1)) {
            (Some(c), _) if c.is_ascii_whitespace() => {
                cur.bump();
            }
            (Some(b'/'), Some(b'/')) => {
                while !matches!(cur.peek(), None | Some(b'\n')) {
                    cur.bump();
                }
            }
            (Some(b'/'), Some(b'*')) => {
                cur.bump();
                cur.bump();
                loop {
                    match (cur.peek(), cur.peek_at(1)) {
                        (Some(b'*'), Some(b'/')) => {
                            cur.bump();
                            cur.bump();
                            break;
                        }
                        (Some(_), _) => {
                            cur.bump();
                        }
                        (None, _) => return Err(cur.error(&["`*/`"], "end of input")),
                    }
                }
            }
            _ => return Ok(()),
        }
    }
}
