//! `.wproto` text format: line-oriented parser and canonical serializer.
//!
//! ```text
//! protocol photon-mirror
//! registers
//!   photon 2
//!   mirror 2
//! init photon=0 mirror=0
//! step superpose photon theta=0.7853981633974483 phi=0.0
//! step couple photon mirror
//! collapse-site mirror
//! reverse 1..2
//! measure all
//! expect photon=0 mirror=0 prob=1.0 tol=1e-9
//! ```
//!
//! `#` starts a comment. Register lines are indented (two spaces in
//! canonical form). Permutations and matrices are bracketed, one bracket per
//! source level or matrix row: `[1,0]`, `[0.0+1.0i,1.0-0.5i]`.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use num_complex::Complex64;
use thiserror::Error;

use crate::protocol::{MeasureTargets, Protocol, Step, MAX_INLINE_MATRIX};
use crate::statevec::{is_identifier, CMatrix};

/// 1-based line and column (in characters) plus 0-based byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub offset: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("expected {expected}, found {found}")]
    Syntax { expected: String, found: String },
    #[error("numeric literal {0:?} out of range")]
    NumericOverflow(String),
    #[error("duplicate register {0:?}")]
    DuplicateRegister(String),
    #[error("unknown register {0:?}")]
    UnknownRegister(String),
    #[error("matrix literal has {0} rows; at most {MAX_INLINE_MATRIX} allowed")]
    MatrixTooLarge(usize),
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{span}: {kind}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub kind: ParseErrorKind,
}

/// Parsed protocol plus the span of each step's line.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedProtocol {
    pub protocol: Protocol,
    pub registers_span: SourceSpan,
    pub init_span: SourceSpan,
    pub step_spans: Vec<SourceSpan>,
}

pub fn parse(text: &str) -> Result<Protocol, ParseError> {
    parse_with_spans(text).map(|p| p.protocol)
}

/// Parses raw bytes, reporting invalid UTF-8 at the first bad byte.
pub fn parse_bytes(bytes: &[u8]) -> Result<ParsedProtocol, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_with_spans(text),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).expect("valid prefix");
            Err(ParseError {
                span: span_of(valid, valid.len()),
                kind: ParseErrorKind::InvalidUtf8,
            })
        }
    }
}

pub fn parse_with_spans(text: &str) -> Result<ParsedProtocol, ParseError> {
    Parser::new(text)?.file()
}

fn span_of(text: &str, offset: usize) -> SourceSpan {
    let before = &text[..offset];
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    SourceSpan {
        line: before.matches('\n').count() + 1,
        column: before[line_start..].chars().count() + 1,
        offset,
    }
}

#[derive(Debug, Clone, Copy)]
struct Word<'a> {
    text: &'a str,
    offset: usize,
}

#[derive(Debug)]
struct Line<'a> {
    indented: bool,
    words: Vec<Word<'a>>,
    /// Offset just past the last significant character.
    end: usize,
}

fn describe(word: Option<&Word<'_>>) -> String {
    match word {
        Some(w) => format!("{:?}", w.text),
        None => "end of line".to_string(),
    }
}

struct Parser<'a> {
    text: &'a str,
    lines: Vec<Line<'a>>,
    pos: usize,
    registers: HashSet<String>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Result<Self, ParseError> {
        let mut lines = Vec::new();
        let mut start = 0;
        for raw in text.split_inclusive('\n') {
            let line = Self::tokenize(text, raw, start)?;
            if !line.words.is_empty() {
                lines.push(line);
            }
            start += raw.len();
        }
        Ok(Parser {
            text,
            lines,
            pos: 0,
            registers: HashSet::new(),
        })
    }

    fn tokenize(text: &'a str, raw: &'a str, start: usize) -> Result<Line<'a>, ParseError> {
        let body = raw.split('#').next().unwrap_or("");
        let body = body.trim_end_matches(['\n', '\r']);
        let bytes = body.as_bytes();
        let mut words = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b' ' || bytes[i] == b'\t' || bytes[i] == b'\r' {
                i += 1;
                continue;
            }
            let begin = i;
            if bytes[i] == b'[' {
                match body[i..].find(']') {
                    Some(close) => i += close + 1,
                    None => {
                        return Err(ParseError {
                            span: span_of(text, start + body.len()),
                            kind: ParseErrorKind::Syntax {
                                expected: "\"]\"".into(),
                                found: "end of line".into(),
                            },
                        })
                    }
                }
                if i < bytes.len() && !matches!(bytes[i], b' ' | b'\t' | b'\r') {
                    return Err(ParseError {
                        span: span_of(text, start + i),
                        kind: ParseErrorKind::Syntax {
                            expected: "whitespace after \"]\"".into(),
                            found: format!("{:?}", &body[i..i + body[i..].chars().next().map_or(1, char::len_utf8)]),
                        },
                    });
                }
            } else {
                while i < bytes.len() && !matches!(bytes[i], b' ' | b'\t' | b'\r') {
                    i += 1;
                }
            }
            words.push(Word {
                text: &body[begin..i],
                offset: start + begin,
            });
        }
        let indented = matches!(bytes.first(), Some(b' ' | b'\t'));
        Ok(Line {
            indented,
            words,
            end: start + body.trim_end().len(),
        })
    }

    fn err_at(&self, offset: usize, kind: ParseErrorKind) -> ParseError {
        ParseError {
            span: span_of(self.text, offset),
            kind,
        }
    }

    fn syntax(&self, offset: usize, expected: impl Into<String>, found: String) -> ParseError {
        self.err_at(
            offset,
            ParseErrorKind::Syntax {
                expected: expected.into(),
                found,
            },
        )
    }

    /// Error at `words[idx]` of the current line, or at its end.
    fn expected(&self, line: &Line<'_>, idx: usize, what: impl Into<String>) -> ParseError {
        let w = line.words.get(idx);
        self.syntax(w.map_or(line.end, |w| w.offset), what, describe(w))
    }

    fn eof_error(&self, what: &str) -> ParseError {
        self.syntax(self.text.len(), what, "end of file".into())
    }

    fn next_line(&mut self) -> Option<usize> {
        if self.pos < self.lines.len() {
            self.pos += 1;
            Some(self.pos - 1)
        } else {
            None
        }
    }

    fn keyword(&self, line: &Line<'_>, kw: &str) -> Result<(), ParseError> {
        match line.words.first() {
            Some(w) if w.text == kw => Ok(()),
            _ => Err(self.expected(line, 0, format!("{kw:?}"))),
        }
    }

    fn end_of_line(&self, line: &Line<'_>, idx: usize) -> Result<(), ParseError> {
        if idx < line.words.len() {
            Err(self.expected(line, idx, "end of line"))
        } else {
            Ok(())
        }
    }

    fn ident(&self, line: &Line<'_>, idx: usize) -> Result<String, ParseError> {
        match line.words.get(idx) {
            Some(w) if is_identifier(w.text) => Ok(w.text.to_string()),
            _ => Err(self.expected(line, idx, "identifier")),
        }
    }

    fn register_ref(&self, line: &Line<'_>, idx: usize) -> Result<String, ParseError> {
        let name = self.ident(line, idx)?;
        if !self.registers.contains(&name) {
            return Err(self.err_at(line.words[idx].offset, ParseErrorKind::UnknownRegister(name)));
        }
        Ok(name)
    }

    fn int(&self, text: &str, offset: usize) -> Result<usize, ParseError> {
        if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(self.syntax(offset, "integer", format!("{text:?}")));
        }
        text.parse()
            .map_err(|_| self.err_at(offset, ParseErrorKind::NumericOverflow(text.to_string())))
    }

    fn float(&self, text: &str, offset: usize) -> Result<f64, ParseError> {
        if !is_float_literal(text) {
            return Err(self.syntax(offset, "decimal number", format!("{text:?}")));
        }
        let v: f64 = text
            .parse()
            .map_err(|_| self.syntax(offset, "decimal number", format!("{text:?}")))?;
        if !v.is_finite() {
            return Err(self.err_at(offset, ParseErrorKind::NumericOverflow(text.to_string())));
        }
        Ok(v)
    }

    /// `key=FLOAT` at `words[idx]`.
    fn keyed_float(&self, line: &Line<'_>, idx: usize, key: &str) -> Result<f64, ParseError> {
        let expected = format!("\"{key}=\"");
        let w = line
            .words
            .get(idx)
            .ok_or_else(|| self.expected(line, idx, expected.clone()))?;
        match w.text.split_once('=') {
            Some((k, v)) if k == key => self.float(v, w.offset + k.len() + 1),
            _ => Err(self.expected(line, idx, expected)),
        }
    }

    /// `IDENT=INT` at `words[idx]`, for a declared register.
    fn assignment_word(&self, line: &Line<'_>, idx: usize) -> Result<(String, usize), ParseError> {
        let w = line.words[idx];
        let (name, value) = w
            .text
            .split_once('=')
            .filter(|(n, _)| is_identifier(n))
            .ok_or_else(|| self.expected(line, idx, "NAME=LEVEL"))?;
        if !self.registers.contains(name) {
            return Err(self.err_at(w.offset, ParseErrorKind::UnknownRegister(name.to_string())));
        }
        Ok((name.to_string(), self.int(value, w.offset + name.len() + 1)?))
    }

    /// Comma-separated entries of a bracketed word, with their offsets.
    fn bracket_items<'w>(&self, w: &Word<'w>, what: &str) -> Result<Vec<(&'w str, usize)>, ParseError> {
        let inner = w
            .text
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| self.syntax(w.offset, format!("bracketed {what}"), format!("{:?}", w.text)))?;
        let mut items = Vec::new();
        let mut at = w.offset + 1;
        for piece in inner.split(',') {
            let lead = piece.len() - piece.trim_start().len();
            let item = piece.trim();
            if item.is_empty() {
                return Err(self.syntax(at + lead, what.to_string(), "nothing".into()));
            }
            items.push((item, at + lead));
            at += piece.len() + 1;
        }
        Ok(items)
    }

    fn complex(&self, text: &str, offset: usize) -> Result<Complex64, ParseError> {
        let bad = || self.syntax(offset, "complex entry \"re+imi\"", format!("{text:?}"));
        let body = text.strip_suffix('i').ok_or_else(bad)?;
        let split = body
            .char_indices()
            .skip(1)
            .filter(|&(i, c)| (c == '+' || c == '-') && !matches!(body.as_bytes()[i - 1], b'e' | b'E'))
            .map(|(i, _)| i)
            .last()
            .ok_or_else(bad)?;
        let (re, im) = body.split_at(split);
        let im_digits = &im[1..];
        if im_digits.starts_with(['+', '-']) {
            return Err(bad());
        }
        let re = self.float(re, offset)?;
        let im_abs = self.float(im_digits, offset + split + 1)?;
        let im = if im.starts_with('-') { -im_abs } else { im_abs };
        Ok(Complex64::new(re, im))
    }

    fn file(mut self) -> Result<ParsedProtocol, ParseError> {
        // header
        let li = self.next_line().ok_or_else(|| self.eof_error("\"protocol\""))?;
        let line = &self.lines[li];
        self.keyword(line, "protocol")?;
        let name = self.ident(line, 1)?;
        self.end_of_line(line, 2)?;

        // registers
        let li = self.next_line().ok_or_else(|| self.eof_error("\"registers\""))?;
        let line = &self.lines[li];
        self.keyword(line, "registers")?;
        self.end_of_line(line, 1)?;
        let registers_span = span_of(self.text, line.words[0].offset);
        let mut registers = Vec::new();
        while self.pos < self.lines.len() && self.lines[self.pos].indented {
            let line = &self.lines[self.pos];
            let reg = self.ident(line, 0)?;
            let dim_word = line
                .words
                .get(1)
                .ok_or_else(|| self.expected(line, 1, "register dimension"))?;
            let dim = self.int(dim_word.text, dim_word.offset)?;
            self.end_of_line(line, 2)?;
            if !self.registers.insert(reg.clone()) {
                return Err(self.err_at(line.words[0].offset, ParseErrorKind::DuplicateRegister(reg)));
            }
            registers.push((reg, dim));
            self.pos += 1;
        }
        if registers.is_empty() {
            return Err(match self.lines.get(self.pos) {
                Some(line) => self.expected(line, 0, "indented register declaration"),
                None => self.eof_error("indented register declaration"),
            });
        }

        // init
        let li = self.next_line().ok_or_else(|| self.eof_error("\"init\""))?;
        let line = &self.lines[li];
        self.keyword(line, "init")?;
        let init_span = span_of(self.text, line.words[0].offset);
        if line.words.len() < 2 {
            return Err(self.expected(line, 1, "NAME=LEVEL"));
        }
        let init = (1..line.words.len())
            .map(|i| self.assignment_word(line, i))
            .collect::<Result<Vec<_>, _>>()?;

        // steps
        let mut steps = Vec::new();
        let mut step_spans = Vec::new();
        while let Some(li) = self.next_line() {
            let line = &self.lines[li];
            steps.push(self.step(line)?);
            step_spans.push(span_of(self.text, line.words[0].offset));
        }
        Ok(ParsedProtocol {
            protocol: Protocol {
                name,
                registers,
                init,
                steps,
            },
            registers_span,
            init_span,
            step_spans,
        })
    }

    fn step(&self, line: &Line<'_>) -> Result<Step, ParseError> {
        let head = line.words[0].text;
        let (step, used) = match head {
            "step" => self.matrix_step(line)?,
            "reverse" => {
                let w = line
                    .words
                    .get(1)
                    .ok_or_else(|| self.expected(line, 1, "range FROM..TO"))?;
                let (a, b) = w
                    .text
                    .split_once("..")
                    .ok_or_else(|| self.expected(line, 1, "range FROM..TO"))?;
                let from = self.int(a, w.offset)?;
                let to = self.int(b, w.offset + a.len() + 2)?;
                (Step::Reverse { from, to }, 2)
            }
            "collapse-site" => {
                let registers = self.register_list(line, 1)?;
                let n = registers.len();
                (Step::CollapseSite { registers }, 1 + n)
            }
            "check-factorized" => {
                let register = self.register_ref(line, 1)?;
                let tol = self.keyed_float(line, 2, "tol")?;
                (Step::CheckFactorized { register, tol }, 3)
            }
            "measure" => match line.words.get(1) {
                Some(w) if w.text == "all" => (Step::Measure(MeasureTargets::All), 2),
                _ => {
                    let regs = self.register_list(line, 1)?;
                    let n = regs.len();
                    (Step::Measure(MeasureTargets::Registers(regs)), 1 + n)
                }
            },
            "expect" => {
                let mut assignment = Vec::new();
                let mut i = 1;
                while i < line.words.len()
                    && !line.words[i].text.starts_with("prob=")
                    && !line.words[i].text.starts_with("tol=")
                {
                    assignment.push(self.assignment_word(line, i)?);
                    i += 1;
                }
                if assignment.is_empty() {
                    return Err(self.expected(line, 1, "NAME=LEVEL"));
                }
                let prob = self.keyed_float(line, i, "prob")?;
                let tol = self.keyed_float(line, i + 1, "tol")?;
                (Step::Expect { assignment, prob, tol }, i + 2)
            }
            _ => {
                return Err(self.expected(
                    line,
                    0,
                    "step, reverse, collapse-site, check-factorized, measure or expect",
                ))
            }
        };
        self.end_of_line(line, used)?;
        Ok(step)
    }

    fn register_list(&self, line: &Line<'_>, from: usize) -> Result<Vec<String>, ParseError> {
        if from >= line.words.len() {
            return Err(self.expected(line, from, "register name"));
        }
        (from..line.words.len()).map(|i| self.register_ref(line, i)).collect()
    }

    fn matrix_step(&self, line: &Line<'_>) -> Result<(Step, usize), ParseError> {
        let kind = line.words.get(1).map(|w| w.text);
        Ok(match kind {
            Some("superpose") => {
                let target = self.register_ref(line, 2)?;
                let theta = self.keyed_float(line, 3, "theta")?;
                let phi = self.keyed_float(line, 4, "phi")?;
                (Step::Superpose { target, theta, phi }, 5)
            }
            Some("couple") => {
                let control = self.register_ref(line, 2)?;
                let target = self.register_ref(line, 3)?;
                (Step::Couple { control, target }, 4)
            }
            Some("copy-into") => {
                let src = self.register_ref(line, 2)?;
                let dst = self.register_ref(line, 3)?;
                let mut perms = Vec::new();
                let mut i = 4;
                while let Some(w) = line.words.get(i) {
                    let perm = self
                        .bracket_items(w, "level")?
                        .into_iter()
                        .map(|(t, o)| self.int(t, o))
                        .collect::<Result<Vec<_>, _>>()?;
                    perms.push(perm);
                    i += 1;
                }
                if perms.is_empty() {
                    return Err(self.expected(line, 4, "bracketed permutation"));
                }
                (Step::CopyInto { src, dst, perms }, i)
            }
            Some("record-definite") => {
                let dst = self.register_ref(line, 2)?;
                (Step::RecordDefinite { dst }, 3)
            }
            Some("record-which") => {
                let src = self.register_ref(line, 2)?;
                let dst = self.register_ref(line, 3)?;
                (Step::RecordWhich { src, dst }, 4)
            }
            Some("unitary") => {
                let mut targets = Vec::new();
                let mut i = 2;
                while i < line.words.len() && !line.words[i].text.starts_with('[') {
                    targets.push(self.register_ref(line, i)?);
                    i += 1;
                }
                if targets.is_empty() {
                    return Err(self.expected(line, 2, "register name"));
                }
                let first_row = i;
                let n_rows = line.words.len() - first_row;
                if n_rows == 0 {
                    return Err(self.expected(line, i, "bracketed matrix row"));
                }
                if n_rows > MAX_INLINE_MATRIX {
                    return Err(self.err_at(line.words[first_row].offset, ParseErrorKind::MatrixTooLarge(n_rows)));
                }
                let mut rows = Vec::with_capacity(n_rows);
                for w in &line.words[first_row..] {
                    let items = self.bracket_items(w, "complex entry")?;
                    if items.len() != n_rows {
                        return Err(self.syntax(
                            w.offset,
                            format!("row of {n_rows} entries"),
                            format!("{} entries", items.len()),
                        ));
                    }
                    rows.push(
                        items
                            .into_iter()
                            .map(|(t, o)| self.complex(t, o))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                let matrix = CMatrix::from_rows(rows).expect("square by construction");
                (Step::Unitary { targets, matrix }, line.words.len())
            }
            _ => {
                return Err(self.expected(
                    line,
                    1,
                    "superpose, couple, copy-into, record-definite, record-which or unitary",
                ))
            }
        })
    }
}

/// `[+-]?digits[.digits][(e|E)[+-]digits]`
fn is_float_literal(text: &str) -> bool {
    let b = text.as_bytes();
    let mut i = 0;
    let digits = |i: &mut usize| {
        let s = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        *i > s
    };
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    if !digits(&mut i) {
        return false;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        if !digits(&mut i) {
            return false;
        }
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        if !digits(&mut i) {
            return false;
        }
    }
    i == b.len()
}

/// Shortest decimal that reads back to the same `f64` (at most 17
/// significant digits), exponent form outside `[1e-5, 1e16)`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

fn format_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", format_float(z.re), sign, format_float(z.im.abs()))
}

fn join_names(names: &[String]) -> String {
    names.join(" ")
}

fn join_assignment(a: &[(String, usize)]) -> String {
    a.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(" ")
}

fn bracket<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    let inner: Vec<String> = items.into_iter().map(|x| x.to_string()).collect();
    format!("[{}]", inner.join(","))
}

/// Canonical text form; `parse(serialize(p)) == p`.
pub fn serialize(protocol: &Protocol) -> String {
    let mut out = String::new();
    // writing to a String cannot fail
    let _ = writeln!(out, "protocol {}", protocol.name);
    let _ = writeln!(out, "registers");
    for (name, dim) in &protocol.registers {
        let _ = writeln!(out, "  {name} {dim}");
    }
    let _ = writeln!(out, "init {}", join_assignment(&protocol.init));
    for step in &protocol.steps {
        let line = match step {
            Step::Superpose { target, theta, phi } => format!(
                "step superpose {target} theta={} phi={}",
                format_float(*theta),
                format_float(*phi)
            ),
            Step::Couple { control, target } => format!("step couple {control} {target}"),
            Step::CopyInto { src, dst, perms } => {
                let perms: Vec<String> = perms.iter().map(bracket).collect();
                format!("step copy-into {src} {dst} {}", perms.join(" "))
            }
            Step::RecordDefinite { dst } => format!("step record-definite {dst}"),
            Step::RecordWhich { src, dst } => format!("step record-which {src} {dst}"),
            Step::Unitary { targets, matrix } => {
                let rows: Vec<String> = matrix
                    .rows()
                    .map(|r| bracket(r.iter().map(|z| format_complex(*z))))
                    .collect();
                format!("step unitary {} {}", join_names(targets), rows.join(" "))
            }
            Step::CollapseSite { registers } => format!("collapse-site {}", join_names(registers)),
            Step::CheckFactorized { register, tol } => {
                format!("check-factorized {register} tol={}", format_float(*tol))
            }
            Step::Reverse { from, to } => format!("reverse {from}..{to}"),
            Step::Measure(MeasureTargets::All) => "measure all".to_string(),
            Step::Measure(MeasureTargets::Registers(r)) => format!("measure {}", join_names(r)),
            Step::Expect { assignment, prob, tol } => format!(
                "expect {} prob={} tol={}",
                join_assignment(assignment),
                format_float(*prob),
                format_float(*tol)
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}
