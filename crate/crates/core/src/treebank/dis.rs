//! Reader for the parenthesized `.dis` format of the English RST treebank.

use crate::error::{Error, Result};

use super::raw::{RawChild, RawNode, RawTree, Role};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    Text(String),
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.char_indices().peekable(),
            src,
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }

    fn tokens(mut self) -> Result<(Vec<(Tok, Pos)>, Pos)> {
        let mut out = Vec::new();
        while let Some(&(offset, c)) = self.chars.peek() {
            let pos = self.pos();
            match c {
                c if c.is_whitespace() => {
                    self.bump();
                }
                '(' => {
                    self.bump();
                    out.push((Tok::Open, pos));
                }
                ')' => {
                    self.bump();
                    out.push((Tok::Close, pos));
                }
                '_' if self.src[offset..].starts_with("_!") => {
                    self.bump();
                    self.bump();
                    let start = offset + 2;
                    let Some(len) = self.src[start..].find("_!") else {
                        return Err(Error::Parse {
                            line: pos.line,
                            column: pos.column,
                            message: "unterminated text literal".into(),
                        });
                    };
                    let text = &self.src[start..start + len];
                    for _ in 0..text.chars().count() + 2 {
                        self.bump();
                    }
                    out.push((Tok::Text(clean_text(text)), pos));
                }
                _ => {
                    let mut atom = String::new();
                    while let Some(&(_, c)) = self.chars.peek() {
                        if c.is_whitespace() || c == '(' || c == ')' {
                            break;
                        }
                        atom.push(c);
                        self.bump();
                    }
                    out.push((Tok::Atom(atom), pos));
                }
            }
        }
        Ok((out, self.pos()))
    }
}

fn clean_text(text: &str) -> String {
    text.replace("<P>", " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    end: Pos,
}

impl Parser {
    fn err(&self, pos: Pos, message: impl Into<String>) -> Error {
        Error::Parse {
            line: pos.line,
            column: pos.column,
            message: message.into(),
        }
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.at).map(|t| t.1).unwrap_or(self.end)
    }

    fn peek(&self, ahead: usize) -> Option<&Tok> {
        self.toks.get(self.at + ahead).map(|t| &t.0)
    }

    fn next(&mut self) -> Result<Tok> {
        let tok = self
            .toks
            .get(self.at)
            .map(|t| t.0.clone())
            .ok_or_else(|| self.err(self.end, "unexpected end of input (unbalanced parentheses)"))?;
        self.at += 1;
        Ok(tok)
    }

    fn expect_close(&mut self) -> Result<()> {
        let pos = self.pos();
        match self.next()? {
            Tok::Close => Ok(()),
            other => Err(self.err(pos, format!("expected ')', found {other:?}"))),
        }
    }

    fn number(&mut self) -> Result<usize> {
        let pos = self.pos();
        match self.next()? {
            Tok::Atom(a) => a
                .parse()
                .map_err(|_| self.err(pos, format!("expected a number, found {a:?}"))),
            other => Err(self.err(pos, format!("expected a number, found {other:?}"))),
        }
    }

    /// Parses `( Tag attrs... children... )` after confirming the tag.
    fn node(&mut self) -> Result<(Role, Option<String>, RawNode)> {
        let open = self.pos();
        match self.next()? {
            Tok::Open => {}
            other => return Err(self.err(open, format!("expected '(', found {other:?}"))),
        }
        let tag_pos = self.pos();
        let role = match self.next()? {
            Tok::Atom(a) if a == "Root" => Role::Root,
            Tok::Atom(a) if a == "Nucleus" => Role::Nucleus,
            Tok::Atom(a) if a == "Satellite" => Role::Satellite,
            other => return Err(self.err(tag_pos, format!("unknown node tag {other:?}"))),
        };
        let mut leaf = None;
        let mut rel = None;
        let mut text = None;
        let mut children = Vec::new();
        loop {
            match self.peek(0) {
                Some(Tok::Close) => {
                    self.at += 1;
                    break;
                }
                Some(Tok::Open) => {}
                Some(other) => {
                    let pos = self.pos();
                    return Err(self.err(pos, format!("unexpected token {other:?}")));
                }
                None => return Err(self.err(self.end, "unexpected end of input (unbalanced parentheses)")),
            }
            let kw_pos = self.toks.get(self.at + 1).map(|t| t.1).unwrap_or(self.end);
            match self.peek(1) {
                Some(Tok::Atom(kw)) => match kw.as_str() {
                    "span" => {
                        self.at += 2;
                        self.number()?;
                        self.number()?;
                        self.expect_close()?;
                    }
                    "leaf" => {
                        self.at += 2;
                        leaf = Some(self.number()?);
                        self.expect_close()?;
                    }
                    "rel2par" => {
                        self.at += 2;
                        let pos = self.pos();
                        match self.next()? {
                            Tok::Atom(a) => rel = Some(a),
                            other => {
                                return Err(self.err(pos, format!("bad relation {other:?}")))
                            }
                        }
                        self.expect_close()?;
                    }
                    "text" => {
                        self.at += 2;
                        let mut parts = Vec::new();
                        while let Some(t) = self.peek(0) {
                            match t {
                                Tok::Close => break,
                                Tok::Text(s) | Tok::Atom(s) => parts.push(s.clone()),
                                Tok::Open => {
                                    let pos = self.pos();
                                    return Err(self.err(pos, "'(' inside text"));
                                }
                            }
                            self.at += 1;
                        }
                        text = Some(parts.join(" "));
                        self.expect_close()?;
                    }
                    "Root" | "Nucleus" | "Satellite" => children.push(self.node()?),
                    other => {
                        return Err(self.err(kw_pos, format!("unknown node tag {other:?}")))
                    }
                },
                Some(other) => {
                    return Err(self.err(kw_pos, format!("unknown node tag {other:?}")))
                }
                None => return Err(self.err(self.end, "unexpected end of input (unbalanced parentheses)")),
            }
        }
        if role == Role::Satellite && rel.is_none() {
            return Err(self.err(tag_pos, "Satellite without rel2par"));
        }
        let node = match leaf {
            Some(id) => {
                if !children.is_empty() {
                    return Err(self.err(open, "leaf node with children"));
                }
                RawNode::Leaf {
                    id,
                    text: text.unwrap_or_default(),
                }
            }
            None => {
                if children.is_empty() {
                    return Err(self.err(open, "internal node without children"));
                }
                RawNode::Group {
                    children: children
                        .into_iter()
                        .map(|(role, relation, node)| RawChild {
                            role,
                            relation,
                            node,
                        })
                        .collect(),
                }
            }
        };
        Ok((role, rel, node))
    }
}

/// Parses one `.dis` file.
pub fn parse_dis(text: &str) -> Result<RawTree> {
    let (toks, end) = Lexer::new(text).tokens()?;
    let mut parser = Parser { toks, at: 0, end };
    let (role, _, root) = parser.node()?;
    if role != Role::Root {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "top-level node must be Root".into(),
        });
    }
    if parser.at < parser.toks.len() {
        let pos = parser.pos();
        return Err(parser.err(pos, "trailing input after Root (unbalanced parentheses)"));
    }
    Ok(RawTree { roots: vec![root] })
}
