//! Synthetic commit generator for desk-scale experiments.
//!
//! Every sample is one C file before and after a commit. Fixing commits
//! make a small structural repair at a memory-access site: a bounds check
//! around an indexed access, an early-return guard, or a loop bound changed
//! from `<=` to `<`. Non-fixing commits make larger label-neutral edits:
//! a local rename, added logging calls, re-indentation and comment edits.
//! None of the non-fixing edits adds a conditional.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::train::{CommitSample, Dataset, FileChange, FileVersion};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Signal {
    BoundsCheck,
    OffByOne,
    Mixed,
}

impl FromStr for Signal {
    type Err = String;

    fn from_str(s: &str) -> Result<Signal, String> {
        match s {
            "bounds-check" => Ok(Signal::BoundsCheck),
            "off-by-one" => Ok(Signal::OffByOne),
            "mixed" => Ok(Signal::Mixed),
            other => Err(format!(
                "unknown signal {other:?} (expected bounds-check, off-by-one or mixed)"
            )),
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signal::BoundsCheck => "bounds-check",
            Signal::OffByOne => "off-by-one",
            Signal::Mixed => "mixed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FixKind {
    Wrap,
    Guard,
    LoopBound,
}

const PREFIXES: &[&str] = &[
    "png", "ssl", "http", "zip", "xml", "sql", "img", "net", "tls", "jpg", "vfs", "usb",
];
const VERBS: &[&str] = &[
    "read", "write", "copy", "fill", "scan", "load", "store", "merge", "parse", "pack", "sum",
    "emit",
];
const NOUNS: &[&str] = &[
    "chunk", "header", "block", "frame", "entry", "row", "token", "field", "record", "page",
];
const LOCALS: &[&str] = &[
    "tmp", "acc", "val", "aux", "cur", "sz", "off", "res", "cnt", "slot",
];
const RENAMES: &[&str] = &[
    "value", "offset", "result", "current", "scratch", "length", "amount", "index",
];
const CAPS: &[&str] = &["BUF_SIZE", "MAX_LEN", "TABLE_SIZE", "CAPACITY", "MAX_ITEMS"];
const LOG_FNS: &[&str] = &["log_debug", "log_trace", "trace_event", "debug_print"];
const COMMENT_WORDS: &[&str] = &[
    "cleanup", "refactor", "style", "tidy", "note", "helper", "update", "docs",
];

/// A line of a function body.
#[derive(Clone, Debug)]
struct Line {
    depth: usize,
    text: String,
    /// A plain statement after which another statement may be inserted.
    stmt: bool,
}

impl Line {
    fn new(depth: usize, text: impl Into<String>) -> Line {
        Line {
            depth,
            text: text.into(),
            stmt: false,
        }
    }

    fn stmt(depth: usize, text: impl Into<String>) -> Line {
        Line {
            depth,
            text: text.into(),
            stmt: true,
        }
    }
}

#[derive(Clone, Debug)]
enum Site {
    /// `line` is an indexed access `array[index]` that a bounds check can
    /// protect.
    Access {
        line: usize,
        index: String,
        cap: String,
    },
    /// `line` holds a loop condition using `<`.
    Loop { line: usize },
}

#[derive(Clone, Debug)]
struct Function {
    name: String,
    returns_int: bool,
    lines: Vec<Line>,
    sites: Vec<Site>,
    locals: Vec<String>,
}

struct Names<'a> {
    rng: &'a mut ChaCha8Rng,
    prefix: &'a str,
}

impl Names<'_> {
    fn function(&mut self) -> String {
        format!(
            "{}_{}_{}",
            self.prefix,
            VERBS.choose(self.rng).unwrap(),
            NOUNS.choose(self.rng).unwrap()
        )
    }

    fn locals(&mut self, k: usize) -> Vec<String> {
        let mut pool = LOCALS.to_vec();
        pool.shuffle(self.rng);
        pool[..k].iter().map(|s| s.to_string()).collect()
    }
}

struct Globals {
    buf: String,
    table: String,
    counter: String,
    cap: String,
}

fn template(kind: usize, names: &mut Names<'_>, g: &Globals) -> Function {
    let name = names.function();
    let k = names.rng.gen_range(2..9);
    let l = names.locals(3);
    let (a, b, c) = (&l[0], &l[1], &l[2]);
    let mut sites = Vec::new();
    let (returns_int, sig, lines) = match kind {
        0 => {
            sites.push(Site::Access {
                line: 1,
                index: "idx".into(),
                cap: g.cap.clone(),
            });
            (
                false,
                format!("void {name}(int idx, int {b})"),
                vec![
                    Line::stmt(1, format!("int {a} = {b} * {k};")),
                    Line::stmt(1, format!("{}[idx] = {a};", g.buf)),
                    Line::stmt(1, format!("{0} = {0} + 1;", g.counter)),
                ],
            )
        }
        1 => {
            sites.push(Site::Loop { line: 2 });
            (
                true,
                format!("int {name}(int *dst, int *src, int n)"),
                vec![
                    Line::stmt(1, "int i;"),
                    Line::stmt(1, format!("int {a} = 0;")),
                    Line::new(1, "for (i = 0; i < n; i++) {"),
                    Line::stmt(2, "dst[i] = src[i];"),
                    Line::stmt(2, format!("{a} = {a} + src[i];")),
                    Line::new(1, "}"),
                    Line::new(1, format!("return {a};")),
                ],
            )
        }
        2 => {
            sites.push(Site::Access {
                line: 1,
                index: "pos".into(),
                cap: g.cap.clone(),
            });
            (
                true,
                format!("int {name}(int pos)"),
                vec![
                    Line::stmt(1, format!("int {a} = {k};")),
                    Line::stmt(1, format!("{a} = {a} + {}[pos];", g.table)),
                    Line::new(1, format!("return {a};")),
                ],
            )
        }
        3 => {
            sites.push(Site::Loop { line: 2 });
            (
                true,
                format!("int {name}(int *arr, int len)"),
                vec![
                    Line::stmt(1, "int j = 0;"),
                    Line::stmt(1, format!("int {a} = 0;")),
                    Line::new(1, "while (j < len) {"),
                    Line::stmt(2, format!("{a} = {a} + arr[j];")),
                    Line::stmt(2, "j++;"),
                    Line::new(1, "}"),
                    Line::new(1, format!("return {a};")),
                ],
            )
        }
        4 => (
            true,
            format!("int {name}(int {b}, int {c})"),
            vec![
                Line::stmt(1, format!("int {a} = {b} * {c};")),
                Line::new(1, format!("if ({a} > {}) {{", g.cap)),
                Line::stmt(2, format!("{a} = {};", g.cap)),
                Line::new(1, "}"),
                Line::new(1, format!("return {a};")),
            ],
        ),
        _ => {
            sites.push(Site::Loop { line: 1 });
            sites.push(Site::Access {
                line: 2,
                index: "i".into(),
                cap: g.cap.clone(),
            });
            (
                false,
                format!("void {name}(int {b})"),
                vec![
                    Line::stmt(1, "int i;"),
                    Line::new(1, "for (i = 0; i < count; i++) {"),
                    Line::stmt(2, format!("{}[i] = {b};", g.buf)),
                    Line::new(1, "}"),
                ],
            )
        }
    };
    let mut all = vec![Line::new(0, format!("{sig} {{"))];
    all.extend(lines);
    all.push(Line::new(0, "}"));
    // site line numbers above are relative to the body
    for s in &mut sites {
        match s {
            Site::Access { line, .. } | Site::Loop { line } => *line += 1,
        }
    }
    let renamed = if kind == 5 { b.clone() } else { a.clone() };
    Function {
        name,
        returns_int,
        lines: all,
        sites,
        locals: vec![renamed],
    }
}

#[derive(Clone)]
struct File {
    header: Vec<String>,
    functions: Vec<Function>,
    /// Indentation unit per function.
    indent: Vec<String>,
}

impl File {
    fn render(&self) -> String {
        let mut out = String::new();
        for h in &self.header {
            out.push_str(h);
            out.push('\n');
        }
        for (f, unit) in self.functions.iter().zip(&self.indent) {
            out.push('\n');
            for l in &f.lines {
                out.push_str(&unit.repeat(l.depth));
                out.push_str(&l.text);
                out.push('\n');
            }
        }
        out
    }
}

fn base_file(rng: &mut ChaCha8Rng, prefix: &str, unit: &str) -> File {
    let cap = CAPS.choose(rng).unwrap().to_string();
    let g = Globals {
        buf: format!("{prefix}_buf"),
        table: format!("{prefix}_table"),
        counter: format!("{prefix}_count"),
        cap: cap.clone(),
    };
    let header = vec![
        format!("int {}[{cap}];", g.buf),
        format!("int {}[{cap}];", g.table),
        format!("int {};", g.counter),
        "int count;".to_string(),
    ];
    let n = rng.gen_range(4..7);
    let mut names = Names { rng, prefix };
    let mut functions = Vec::with_capacity(n);
    // one function of each site kind, then random fillers
    for kind in [0, 1] {
        functions.push(template(kind, &mut names, &g));
    }
    while functions.len() < n {
        let kind = names.rng.gen_range(0..6);
        functions.push(template(kind, &mut names, &g));
    }
    functions.shuffle(rng);
    File {
        header,
        indent: vec![unit.to_string(); functions.len()],
        functions,
    }
}

/// Picks a site accepted by `want`; returns (function, site).
fn pick_site(rng: &mut ChaCha8Rng, file: &File, want: impl Fn(&Site) -> bool) -> (usize, Site) {
    let mut options = Vec::new();
    for (fi, f) in file.functions.iter().enumerate() {
        for s in &f.sites {
            if want(s) {
                options.push((fi, s.clone()));
            }
        }
    }
    options
        .choose(rng)
        .expect("every file has both site kinds")
        .clone()
}

/// Returns (vulnerable old version, repaired new version).
fn apply_fix(rng: &mut ChaCha8Rng, base: &File, kind: FixKind) -> (File, File) {
    let mut old = base.clone();
    let mut new = base.clone();
    match kind {
        FixKind::LoopBound => {
            let (fi, site) = pick_site(rng, base, |s| matches!(s, Site::Loop { .. }));
            let Site::Loop { line } = site else {
                unreachable!()
            };
            let text = &mut old.functions[fi].lines[line].text;
            *text = text.replacen(" < ", " <= ", 1);
        }
        FixKind::Wrap => {
            let (fi, site) = pick_site(rng, base, |s| matches!(s, Site::Access { .. }));
            let Site::Access { line, index, cap } = site else {
                unreachable!()
            };
            let f = &mut new.functions[fi];
            let orig = f.lines[line].clone();
            if rng.gen_bool(0.5) {
                f.lines[line] =
                    Line::new(orig.depth, format!("if ({index} < {cap}) {}", orig.text));
            } else {
                f.lines.splice(
                    line..=line,
                    [
                        Line::new(orig.depth, format!("if ({index} < {cap}) {{")),
                        Line::stmt(orig.depth + 1, orig.text),
                        Line::new(orig.depth, "}"),
                    ],
                );
            }
        }
        FixKind::Guard => {
            // only parameters can be checked before the first statement
            let (fi, site) = pick_site(
                rng,
                base,
                |s| matches!(s, Site::Access { index, .. } if index != "i"),
            );
            let Site::Access { index, cap, .. } = site else {
                unreachable!()
            };
            let f = &mut new.functions[fi];
            let ret = if f.returns_int {
                "return -1;"
            } else {
                "return;"
            };
            f.lines
                .insert(1, Line::new(1, format!("if ({index} >= {cap}) {ret}")));
        }
    }
    (old, new)
}

fn rename_word(text: &str, from: &str, to: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let is_word = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    let mut i = 0;
    while i < text.len() {
        if text[i..].starts_with(from)
            && (i == 0 || !is_word(bytes[i - 1]))
            && bytes.get(i + from.len()).is_none_or(|&b| !is_word(b))
        {
            out.push_str(to);
            i += from.len();
        } else {
            let ch = text[i..].chars().next().unwrap();
            out.push(ch);
            i += ch.len_utf8();
        }
    }
    out
}

/// Label-neutral edits: rename, logging, re-indentation, comments.
fn apply_chore(rng: &mut ChaCha8Rng, base: &File, other_unit: &str) -> File {
    let mut new = base.clone();
    let nf = new.functions.len();

    let fi = rng.gen_range(0..nf);
    let f = &mut new.functions[fi];
    let from = f.locals[0].clone();
    let to = RENAMES.choose(rng).unwrap().to_string();
    for l in &mut f.lines {
        l.text = rename_word(&l.text, &from, &to);
    }

    for _ in 0..rng.gen_range(3..6) {
        let fi = rng.gen_range(0..nf);
        let f = &mut new.functions[fi];
        let spots: Vec<usize> = f
            .lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.stmt)
            .map(|(i, _)| i)
            .collect();
        let Some(&at) = spots.choose(rng) else {
            continue;
        };
        let depth = f.lines[at].depth;
        let call = format!(
            "{}(\"{}\", {});",
            LOG_FNS.choose(rng).unwrap(),
            f.name,
            rng.gen_range(0..100)
        );
        f.lines.insert(at + 1, Line::new(depth, call));
    }

    let mut order: Vec<usize> = (0..nf).collect();
    order.shuffle(rng);
    for &fi in order
        .iter()
        .take(rng.gen_range(nf.saturating_sub(2).max(2)..=nf))
    {
        new.indent[fi] = other_unit.to_string();
    }

    for _ in 0..rng.gen_range(2..5) {
        let fi = rng.gen_range(0..nf);
        let words: Vec<&str> = (0..3)
            .map(|_| *COMMENT_WORDS.choose(rng).unwrap())
            .collect();
        new.functions[fi]
            .lines
            .insert(0, Line::new(0, format!("// {}", words.join(" "))));
    }
    new
}

/// `n` samples, alternating fixing and non-fixing, spread over about `n/10`
/// projects. Deterministic for a given seed.
pub fn generate(n: usize, signal: Signal, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_projects = n.div_ceil(10).max(2);
    let projects: Vec<(String, &str, &str, &str)> = (0..n_projects)
        .map(|p| {
            let prefix = PREFIXES[p % PREFIXES.len()];
            let (unit, other) = if rng.gen_bool(0.5) {
                ("    ", "  ")
            } else {
                ("\t", "    ")
            };
            (format!("{prefix}lib{p:03}"), prefix, unit, other)
        })
        .collect();
    let samples = (0..n)
        .map(|i| {
            let (project, prefix, unit, other) = &projects[rng.gen_range(0..n_projects)];
            let base = base_file(&mut rng, prefix, unit);
            let label = i % 2 == 0;
            let (old, new) = if label {
                let kind = match signal {
                    Signal::BoundsCheck => {
                        *[FixKind::Wrap, FixKind::Guard].choose(&mut rng).unwrap()
                    }
                    Signal::OffByOne => FixKind::LoopBound,
                    Signal::Mixed => *[FixKind::Wrap, FixKind::Guard, FixKind::LoopBound]
                        .choose(&mut rng)
                        .unwrap(),
                };
                apply_fix(&mut rng, &base, kind)
            } else {
                let new = apply_chore(&mut rng, &base, other);
                (base, new)
            };
            CommitSample {
                id: format!("synth-{i:05}"),
                project: project.clone(),
                label,
                files: vec![FileChange {
                    path: format!("src/{prefix}_{}.c", NOUNS[i % NOUNS.len()]),
                    old: FileVersion::Source(old.render()),
                    new: FileVersion::Source(new.render()),
                }],
                split: None,
            }
        })
        .collect();
    Dataset { samples }
}
