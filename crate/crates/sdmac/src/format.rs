//! Structured-text serialization of channel specifications.
//!
//! The format is line-oriented and diffable:
//!
//! ```text
//! format = 1
//!
//! [alphabets]
//! s = 0 1
//! t = -
//! ...
//!
//! [state_pmf]
//! 0 = 0.8
//! 1 = 0.2
//!
//! [degrade_kernel]
//! # given-tuple = row of target probabilities
//! 0 = 1
//! 1 = 1
//!
//! [channel_kernel]
//! # x1 x2 s = p(y,z) row-major over (y, z)
//! 0 0 0 = 0.63 0.27 0.07 0.03
//! ...
//! ```
//!
//! Probabilities are written with Rust's shortest round-trip float
//! formatting, so `load(save(x))` reproduces the tables bit for bit.
//! Symbols must not contain whitespace, `=`, `#`, or brackets.

use crate::channel::{ChannelError, SdMacSpec};
use crate::prob::{Alphabet, ConditionalPmf, JointPmf, Var};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("section `[{0}]` missing")]
    MissingSection(String),
    #[error("line {line}: row `{row}` in [{section}] sums to {sum} (must be 1 within 1e-9)")]
    RowNotNormalized { line: usize, section: String, row: String, sum: f64 },
    #[error("symbol `{0}` contains characters not allowed in spec files")]
    BadSymbol(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

fn err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

fn check_symbol(sym: &str) -> Result<(), FormatError> {
    let ok = !sym.is_empty()
        && !sym.chars().any(|c| c.is_whitespace() || "=#[]".contains(c));
    if ok {
        Ok(())
    } else {
        Err(FormatError::BadSymbol(sym.to_string()))
    }
}

/// One `key = value` line, with its source line number.
struct Entry {
    line: usize,
    key: String,
    value: String,
}

/// A parsed spec document: top-level entries plus named sections, each a
/// list of entries in file order.
struct Document {
    top: Vec<Entry>,
    sections: Vec<(String, Vec<Entry>)>,
}

impl Document {
    fn parse(text: &str) -> Result<Document, FormatError> {
        let mut doc = Document { top: Vec::new(), sections: Vec::new() };
        let mut current: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let body = body.trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(err(line, "empty section name"));
                }
                if doc.sections.iter().any(|(n, _)| n == name) {
                    return Err(err(line, format!("duplicate section `[{name}]`")));
                }
                doc.sections.push((name.to_string(), Vec::new()));
                current = Some(doc.sections.len() - 1);
                continue;
            }
            let eq = body
                .find('=')
                .ok_or_else(|| err(line, "expected `key = value`"))?;
            let key = body[..eq].trim().to_string();
            let value = body[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(err(line, "empty key"));
            }
            let entry = Entry { line, key, value };
            match current {
                Some(i) => doc.sections[i].1.push(entry),
                None => doc.top.push(entry),
            }
        }
        Ok(doc)
    }

    fn section(&self, name: &str) -> Result<&[Entry], FormatError> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e.as_slice())
            .ok_or_else(|| FormatError::MissingSection(name.to_string()))
    }

    fn top_value(&self, key: &str) -> Option<&Entry> {
        self.top.iter().find(|e| e.key == key)
    }
}

fn parse_probs(entry: &Entry, expect: usize, section: &str) -> Result<Vec<f64>, FormatError> {
    let mut out = Vec::with_capacity(expect);
    for tok in entry.value.split_whitespace() {
        let p: f64 = tok
            .parse()
            .map_err(|_| err(entry.line, format!("`{tok}` is not a number")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(err(entry.line, format!("probability {p} outside [0, 1]")));
        }
        out.push(p);
    }
    if out.len() != expect {
        return Err(err(
            entry.line,
            format!("row `{}` in [{section}] has {} entries, expected {expect}", entry.key, out.len()),
        ));
    }
    Ok(out)
}

fn check_row_sum(
    entry: &Entry,
    section: &str,
    probs: &[f64],
) -> Result<(), FormatError> {
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(FormatError::RowNotNormalized {
            line: entry.line,
            section: section.to_string(),
            row: entry.key.clone(),
            sum,
        });
    }
    Ok(())
}

/// Resolve a whitespace-separated given-tuple key against the alphabets in
/// order, returning the flat row index.
fn given_index(
    entry: &Entry,
    section: &str,
    givens: &[&Alphabet],
) -> Result<usize, FormatError> {
    let toks: Vec<&str> = entry.key.split_whitespace().collect();
    if toks.len() != givens.len() {
        return Err(err(
            entry.line,
            format!("key `{}` in [{section}] has {} symbols, expected {}", entry.key, toks.len(), givens.len()),
        ));
    }
    let mut idx = 0;
    for (tok, alpha) in toks.iter().zip(givens) {
        let k = alpha.index_of(tok).map_err(|_| {
            err(entry.line, format!("unknown symbol `{tok}` for `{}` in [{section}]", alpha.name()))
        })?;
        idx = idx * alpha.len() + k;
    }
    Ok(idx)
}

fn read_kernel(
    doc: &Document,
    section: &str,
    given: Vec<Var>,
    target: Vec<Var>,
) -> Result<ConditionalPmf, FormatError> {
    let givens: Vec<&Alphabet> = given.iter().map(|v| &v.alphabet).collect();
    let glen: usize = givens.iter().map(|a| a.len()).product();
    let tlen: usize = target.iter().map(|v| v.alphabet.len()).product();
    let entries = doc.section(section)?;
    let mut rows = vec![None; glen];
    for e in entries {
        let idx = given_index(e, section, &givens)?;
        if rows[idx].is_some() {
            return Err(err(e.line, format!("duplicate row `{}` in [{section}]", e.key)));
        }
        let probs = parse_probs(e, tlen, section)?;
        check_row_sum(e, section, &probs)?;
        rows[idx] = Some(probs);
    }
    let mut flat = Vec::with_capacity(glen * tlen);
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Some(r) => flat.extend(r),
            None => {
                return Err(FormatError::Parse {
                    line: 0,
                    msg: format!("[{section}] is missing row index {i}"),
                })
            }
        }
    }
    ConditionalPmf::new(given, target, flat)
        .map_err(|e| FormatError::Channel(ChannelError::Prob(e)))
}

pub fn parse_spec(text: &str) -> Result<SdMacSpec, FormatError> {
    let doc = Document::parse(text)?;
    match doc.top_value("format") {
        Some(e) if e.value == "1" => {}
        Some(e) => return Err(err(e.line, format!("unsupported format version `{}`", e.value))),
        None => return Err(err(1, "missing `format = 1` header")),
    }

    let mut alphabets: Vec<(String, Alphabet)> = Vec::new();
    for e in doc.section("alphabets")? {
        let symbols: Vec<&str> = e.value.split_whitespace().collect();
        if symbols.is_empty() {
            return Err(err(e.line, format!("alphabet `{}` has no symbols", e.key)));
        }
        for s in &symbols {
            check_symbol(s)?;
        }
        let alpha = Alphabet::new(&e.key, symbols)
            .map_err(|pe| err(e.line, pe.to_string()))?;
        if alphabets.iter().any(|(n, _)| *n == e.key) {
            return Err(err(e.line, format!("duplicate alphabet `{}`", e.key)));
        }
        alphabets.push((e.key.clone(), alpha));
    }
    let get = |name: &str| -> Result<Alphabet, FormatError> {
        alphabets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a.clone())
            .ok_or_else(|| FormatError::Parse {
                line: 0,
                msg: format!("[alphabets] must define `{name}`"),
            })
    };
    let s = get("s")?;
    let t = get("t")?;
    let x1 = get("x1")?;
    let x2 = get("x2")?;
    let y = get("y")?;
    let z = get("z")?;

    let sv = Var::new("s", s.clone());
    let entries = doc.section("state_pmf")?;
    let mut probs = vec![None; s.len()];
    let mut first_line = 0;
    for e in entries {
        if first_line == 0 {
            first_line = e.line;
        }
        let k = s
            .index_of(&e.key)
            .map_err(|_| err(e.line, format!("unknown state symbol `{}`", e.key)))?;
        if probs[k].is_some() {
            return Err(err(e.line, format!("duplicate state symbol `{}`", e.key)));
        }
        let row = parse_probs(e, 1, "state_pmf")?;
        probs[k] = Some(row[0]);
    }
    let probs: Vec<f64> = probs
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            p.ok_or_else(|| FormatError::Parse {
                line: 0,
                msg: format!("[state_pmf] is missing symbol `{}`", s.symbol(i)),
            })
        })
        .collect::<Result<_, _>>()?;
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(FormatError::RowNotNormalized {
            line: first_line,
            section: "state_pmf".into(),
            row: "state_pmf".into(),
            sum,
        });
    }
    let state_pmf = JointPmf::new(vec![sv.clone()], probs)
        .map_err(|e| FormatError::Channel(ChannelError::Prob(e)))?;

    let degrade_kernel = read_kernel(
        &doc,
        "degrade_kernel",
        vec![sv.clone()],
        vec![Var::new("t", t.clone())],
    )?;
    let channel_kernel = read_kernel(
        &doc,
        "channel_kernel",
        vec![
            Var::new("x1", x1.clone()),
            Var::new("x2", x2.clone()),
            sv,
        ],
        vec![Var::new("y", y.clone()), Var::new("z", z.clone())],
    )?;

    Ok(SdMacSpec::new(s, t, x1, x2, y, z, state_pmf, degrade_kernel, channel_kernel)?)
}

fn write_kernel(
    out: &mut String,
    section: &str,
    kernel: &ConditionalPmf,
) {
    let _ = writeln!(out, "[{section}]");
    let givens: Vec<&Alphabet> = kernel.given().iter().map(|v| &v.alphabet).collect();
    for g in 0..kernel.given_len() {
        let mut idx = g;
        let mut key = vec![String::new(); givens.len()];
        for (k, alpha) in givens.iter().enumerate().rev() {
            key[k] = alpha.symbol(idx % alpha.len()).to_string();
            idx /= alpha.len();
        }
        let row: Vec<String> = kernel.row(g).iter().map(|p| format!("{p}")).collect();
        let _ = writeln!(out, "{} = {}", key.join(" "), row.join(" "));
    }
}

pub fn render_spec(spec: &SdMacSpec) -> Result<String, FormatError> {
    let alphas = [&spec.s, &spec.t, &spec.x1, &spec.x2, &spec.y, &spec.z];
    for a in alphas {
        for i in 0..a.len() {
            check_symbol(a.symbol(i))?;
        }
    }
    let mut out = String::new();
    out.push_str("format = 1\n\n[alphabets]\n");
    for a in alphas {
        let syms: Vec<&str> = (0..a.len()).map(|i| a.symbol(i)).collect();
        let _ = writeln!(out, "{} = {}", a.name(), syms.join(" "));
    }
    out.push_str("\n[state_pmf]\n");
    for (i, p) in spec.state_pmf.probs().iter().enumerate() {
        let _ = writeln!(out, "{} = {p}", spec.s.symbol(i));
    }
    out.push('\n');
    write_kernel(&mut out, "degrade_kernel", &spec.degrade_kernel);
    out.push('\n');
    write_kernel(&mut out, "channel_kernel", &spec.channel_kernel);
    Ok(out)
}

pub fn load_spec(path: &Path) -> Result<SdMacSpec, FormatError> {
    let text = std::fs::read_to_string(path)?;
    parse_spec(&text)
}

pub fn save_spec(spec: &SdMacSpec, path: &Path) -> Result<(), FormatError> {
    std::fs::write(path, render_spec(spec)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_modulo_additive, build_stuck_at, EveMode, FullJoint};
    use crate::prob::ConditionalPmf;

    fn tables_equal(a: &SdMacSpec, b: &SdMacSpec) -> bool {
        a.state_pmf.probs() == b.state_pmf.probs()
            && kernel_eq(&a.degrade_kernel, &b.degrade_kernel)
            && kernel_eq(&a.channel_kernel, &b.channel_kernel)
    }

    fn kernel_eq(a: &ConditionalPmf, b: &ConditionalPmf) -> bool {
        if a.given_len() != b.given_len() {
            return false;
        }
        (0..a.given_len()).all(|g| a.row(g) == b.row(g))
    }

    #[test]
    fn round_trip_modulo_additive() {
        let spec = build_modulo_additive(0.2, 0.1, 0.3).unwrap();
        let text = render_spec(&spec).unwrap();
        let back = parse_spec(&text).unwrap();
        assert!(tables_equal(&spec, &back));
        // second round trip is textually identical too
        assert_eq!(text, render_spec(&back).unwrap());
    }

    #[test]
    fn round_trip_stuck_at() {
        for mode in [EveMode::ReadsMemory, EveMode::Uninformative] {
            let spec = build_stuck_at(0.37, mode).unwrap();
            let back = parse_spec(&render_spec(&spec).unwrap()).unwrap();
            assert!(tables_equal(&spec, &back));
        }
    }

    #[test]
    fn round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chan.spec");
        let spec = build_modulo_additive(1.0 / 3.0, 0.1, 0.3).unwrap();
        save_spec(&spec, &path).unwrap();
        let back = load_spec(&path).unwrap();
        assert!(tables_equal(&spec, &back));
    }

    const HAND_SPEC: &str = "\
# two equiprobable states, noiseless identity channel, constant z
format = 1

[alphabets]
s = a b
t = -
x1 = 0 1
x2 = -
y = 0 1
z = -

[state_pmf]
a = 0.25
b = 0.75

[degrade_kernel]
a = 1
b = 1

[channel_kernel]
# x1 x2 s = p(y,z)
0 - a = 1 0
0 - b = 0 1
1 - a = 0 1
1 - b = 1 0
";

    #[test]
    fn hand_written_spec_marginal_matches_arithmetic() {
        let spec = parse_spec(HAND_SPEC).unwrap();
        // uniform x1: p(y=0) = 0.5*0.25 + 0.5*0.75 = 0.5; with x1 always 0,
        // p(y=0) = p(s=a) = 0.25
        let u = crate::prob::Alphabet::singleton("u");
        let v = crate::prob::Alphabet::singleton("v");
        let uv = Var::new("u", u.clone());
        let vv = Var::new("v", v.clone());
        let aux = crate::channel::AuxiliaryScheme::new(
            &spec,
            u,
            v,
            ConditionalPmf::from_fn(vec![spec.s_var()], vec![uv.clone()], |_, _| 1.0).unwrap(),
            ConditionalPmf::from_fn(vec![uv.clone(), spec.s_var()], vec![vv.clone()], |_, _| 1.0)
                .unwrap(),
            ConditionalPmf::deterministic(
                vec![uv.clone(), vv.clone(), spec.s_var()],
                vec![spec.x1_var()],
                |_| vec![0],
            )
            .unwrap(),
            ConditionalPmf::deterministic(
                vec![uv, vv, spec.s_var()],
                vec![spec.x2_var()],
                |_| vec![0],
            )
            .unwrap(),
        )
        .unwrap();
        let j = FullJoint::round1(&spec, &aux).unwrap();
        let py = j.joint().marginalize(&["y"]).unwrap();
        assert!((py.prob(&[0]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bad_row_sum_names_the_row() {
        let text = HAND_SPEC.replace("0 - b = 0 1", "0 - b = 0 0.9");
        let e = parse_spec(&text).unwrap_err();
        match e {
            FormatError::RowNotNormalized { section, row, .. } => {
                assert_eq!(section, "channel_kernel");
                assert_eq!(row, "0 - b");
            }
            other => panic!("expected RowNotNormalized, got {other}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = HAND_SPEC.replace("a = 0.25", "a 0.25");
        match parse_spec(&text).unwrap_err() {
            FormatError::Parse { line, .. } => assert!(line > 0),
            other => panic!("unexpected error {other}"),
        }
        assert!(parse_spec("format = 2\n").is_err());
        assert!(parse_spec("[alphabets]\n").is_err()); // no format header
    }

    #[test]
    fn missing_rows_rejected() {
        let text = HAND_SPEC.replace("1 - b = 1 0\n", "");
        assert!(parse_spec(&text).is_err());
        let text = HAND_SPEC.replace("b = 0.75\n", "");
        assert!(parse_spec(&text).is_err());
    }
}
