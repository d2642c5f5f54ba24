//! Exact finite-alphabet probability tables and information measures.
//!
//! Everything downstream (bound evaluation, protocol oracles) is built on
//! [`JointPmf`] and [`ConditionalPmf`]. Tables are dense, row-major over the
//! Cartesian product of the alphabets, and immutable after construction.
//! All information measures are in bits with the `0 log 0 = 0` convention.

use std::fmt;
use thiserror::Error;

/// Normalization drift tolerated on construction; smaller drift is silently
/// renormalized, larger drift is an error.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProbError {
    #[error("alphabet `{0}` is empty")]
    EmptyAlphabet(String),
    #[error("alphabet `{name}` has duplicate symbol `{symbol}`")]
    DuplicateSymbol { name: String, symbol: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("variable lists must be disjoint; `{0}` appears twice")]
    OverlappingVariables(String),
    #[error("table has {got} entries but the alphabet product has {want}")]
    TableSize { got: usize, want: usize },
    #[error("negative probability {value} at {context}")]
    NegativeProbability { value: f64, context: String },
    #[error("{context} sums to {sum}, off by more than {NORM_TOL}")]
    NotNormalized { context: String, sum: f64 },
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("unknown symbol `{symbol}` for alphabet `{alphabet}`")]
    UnknownSymbol { symbol: String, alphabet: String },
    #[error("alphabet mismatch for variable `{0}`")]
    AlphabetMismatch(String),
}

/// A named finite alphabet of distinct symbol labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    name: String,
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new(
        name: impl Into<String>,
        symbols: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, ProbError> {
        let name = name.into();
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(ProbError::EmptyAlphabet(name));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(ProbError::DuplicateSymbol { name, symbol: s.clone() });
            }
        }
        Ok(Alphabet { name, symbols })
    }

    /// Binary alphabet with symbols `0`, `1`.
    pub fn binary(name: impl Into<String>) -> Self {
        Alphabet::new(name, ["0", "1"]).unwrap()
    }

    /// One-symbol alphabet; the canonical representation of an absent or
    /// constant variable.
    pub fn singleton(name: impl Into<String>) -> Self {
        Alphabet::new(name, ["-"]).unwrap()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one symbol
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, idx: usize) -> &str {
        &self.symbols[idx]
    }

    pub fn index_of(&self, symbol: &str) -> Result<usize, ProbError> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| ProbError::UnknownSymbol {
                symbol: symbol.to_string(),
                alphabet: self.name.clone(),
            })
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{{}}}", self.name, self.symbols.join(","))
    }
}

/// A variable: a name bound to an alphabet. The variable name and the
/// alphabet name usually coincide but are kept separate so the same alphabet
/// can back several variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Var {
    pub name: String,
    pub alphabet: Alphabet,
}

impl Var {
    pub fn new(name: impl Into<String>, alphabet: Alphabet) -> Self {
        Var { name: name.into(), alphabet }
    }
}

fn check_distinct(vars: &[Var]) -> Result<(), ProbError> {
    for (i, v) in vars.iter().enumerate() {
        if vars[..i].iter().any(|w| w.name == v.name) {
            return Err(ProbError::DuplicateVariable(v.name.clone()));
        }
    }
    Ok(())
}

fn product_len(vars: &[Var]) -> usize {
    vars.iter().map(|v| v.alphabet.len()).product()
}

/// Decompose a flat row-major index into per-variable symbol indices.
fn unflatten(vars: &[Var], mut idx: usize, out: &mut [usize]) {
    for (k, v) in vars.iter().enumerate().rev() {
        let m = v.alphabet.len();
        out[k] = idx % m;
        idx /= m;
    }
}

fn flatten(vars: &[Var], idx: &[usize]) -> usize {
    let mut flat = 0;
    for (k, v) in vars.iter().enumerate() {
        flat = flat * v.alphabet.len() + idx[k];
    }
    flat
}

/// Tabular joint probability mass function over an ordered tuple of finite
/// alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    vars: Vec<Var>,
    probs: Vec<f64>,
}

impl JointPmf {
    /// Build and validate. Entries must be nonnegative and sum to one within
    /// [`NORM_TOL`]; smaller drift is renormalized.
    pub fn new(vars: Vec<Var>, probs: Vec<f64>) -> Result<Self, ProbError> {
        check_distinct(&vars)?;
        let want = product_len(&vars);
        if probs.len() != want {
            return Err(ProbError::TableSize { got: probs.len(), want });
        }
        for (i, &p) in probs.iter().enumerate() {
            if p < 0.0 {
                return Err(ProbError::NegativeProbability {
                    value: p,
                    context: format!("joint pmf cell {i}"),
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(ProbError::NotNormalized { context: "joint pmf".into(), sum });
        }
        let probs = probs.iter().map(|p| p / sum).collect();
        Ok(JointPmf { vars, probs })
    }

    /// Point mass on a single symbol of a single variable.
    pub fn point_mass(var: Var, symbol: &str) -> Result<Self, ProbError> {
        let idx = var.alphabet.index_of(symbol)?;
        let mut probs = vec![0.0; var.alphabet.len()];
        probs[idx] = 1.0;
        JointPmf::new(vec![var], probs)
    }

    /// Bernoulli pmf on a binary alphabet: `P(symbol "1") = p`.
    pub fn bernoulli(name: &str, p: f64) -> Result<Self, ProbError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ProbError::OutOfRange(p));
        }
        JointPmf::new(vec![Var::new(name, Alphabet::binary(name))], vec![1.0 - p, p])
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn var(&self, name: &str) -> Result<&Var, ProbError> {
        self.vars
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| ProbError::UnknownVariable(name.to_string()))
    }

    fn positions(&self, names: &[&str]) -> Result<Vec<usize>, ProbError> {
        let mut out = Vec::with_capacity(names.len());
        for &n in names {
            let pos = self
                .vars
                .iter()
                .position(|v| v.name == n)
                .ok_or_else(|| ProbError::UnknownVariable(n.to_string()))?;
            if out.contains(&pos) {
                return Err(ProbError::DuplicateVariable(n.to_string()));
            }
            out.push(pos);
        }
        Ok(out)
    }

    /// Probability of a full symbol-index tuple (one index per variable, in
    /// variable order).
    pub fn prob(&self, idx: &[usize]) -> f64 {
        self.probs[flatten(&self.vars, idx)]
    }

    /// Sum the table over all variables not named in `keep`; the result's
    /// variable order follows `keep`.
    pub fn marginalize(&self, keep: &[&str]) -> Result<JointPmf, ProbError> {
        let pos = self.positions(keep)?;
        let kept: Vec<Var> = pos.iter().map(|&p| self.vars[p].clone()).collect();
        let mut out = vec![0.0; product_len(&kept)];
        let mut idx = vec![0usize; self.vars.len()];
        let mut kidx = vec![0usize; kept.len()];
        for (flat, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            unflatten(&self.vars, flat, &mut idx);
            for (k, &src) in pos.iter().enumerate() {
                kidx[k] = idx[src];
            }
            out[flatten(&kept, &kidx)] += p;
        }
        JointPmf::new(kept, out)
    }

    /// Extend this pmf by a conditional kernel: `result(a, b) = self(a) *
    /// kernel(b | a restricted to kernel.given)`. The kernel's given
    /// variables must all be present here and its target variables must be
    /// new.
    pub fn compose(&self, kernel: &ConditionalPmf) -> Result<JointPmf, ProbError> {
        let gpos = self.positions(
            &kernel.given.iter().map(|v| v.name.as_str()).collect::<Vec<_>>(),
        )?;
        for (k, &pos) in gpos.iter().enumerate() {
            if self.vars[pos].alphabet != kernel.given[k].alphabet {
                return Err(ProbError::AlphabetMismatch(kernel.given[k].name.clone()));
            }
        }
        for t in &kernel.target {
            if self.vars.iter().any(|v| v.name == t.name) {
                return Err(ProbError::OverlappingVariables(t.name.clone()));
            }
        }
        let mut vars = self.vars.clone();
        vars.extend(kernel.target.iter().cloned());
        let tlen = product_len(&kernel.target);
        let mut out = vec![0.0; self.probs.len() * tlen];
        let mut idx = vec![0usize; self.vars.len()];
        let mut gidx = vec![0usize; kernel.given.len()];
        for (flat, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            unflatten(&self.vars, flat, &mut idx);
            for (k, &src) in gpos.iter().enumerate() {
                gidx[k] = idx[src];
            }
            let row = kernel.row_by_index(&gidx);
            let base = flat * tlen;
            for (t, &q) in row.iter().enumerate() {
                out[base + t] = p * q;
            }
        }
        JointPmf::new(vars, out)
    }

    /// Shannon entropy in bits of the marginal on `names`.
    pub fn entropy(&self, names: &[&str]) -> Result<f64, ProbError> {
        let m = self.marginalize(names)?;
        Ok(entropy_of(&m.probs))
    }

    /// Conditional mutual information `I(A; B | C)` in bits. `C` may be
    /// empty, giving unconditional mutual information.
    pub fn conditional_mutual_information(
        &self,
        a: &[&str],
        b: &[&str],
        c: &[&str],
    ) -> Result<f64, ProbError> {
        for n in a {
            if b.contains(n) || c.contains(n) {
                return Err(ProbError::OverlappingVariables(n.to_string()));
            }
        }
        for n in b {
            if c.contains(n) {
                return Err(ProbError::OverlappingVariables(n.to_string()));
            }
        }
        let ac: Vec<&str> = a.iter().chain(c).copied().collect();
        let bc: Vec<&str> = b.iter().chain(c).copied().collect();
        let abc: Vec<&str> = a.iter().chain(b).chain(c).copied().collect();
        let h_c = if c.is_empty() { 0.0 } else { self.entropy(c)? };
        Ok(self.entropy(&ac)? + self.entropy(&bc)? - self.entropy(&abc)? - h_c)
    }

    /// Shorthand for unconditional mutual information.
    pub fn mutual_information(&self, a: &[&str], b: &[&str]) -> Result<f64, ProbError> {
        self.conditional_mutual_information(a, b, &[])
    }

    /// `true` iff `I(A; C | B) <= tol`, i.e. A -> B -> C holds within `tol`.
    pub fn is_markov_chain(
        &self,
        a: &[&str],
        b: &[&str],
        c: &[&str],
        tol: f64,
    ) -> Result<bool, ProbError> {
        Ok(self.conditional_mutual_information(a, c, b)? <= tol)
    }

    /// Leakage across a claimed chain A -> B -> C, i.e. `I(A; C | B)`.
    pub fn markov_leakage(&self, a: &[&str], b: &[&str], c: &[&str]) -> Result<f64, ProbError> {
        self.conditional_mutual_information(a, c, b)
    }

    /// Extract the conditional law of `target` given `given`. Rows whose
    /// conditioning event has zero probability are filled uniformly.
    pub fn conditional(&self, target: &[&str], given: &[&str]) -> Result<ConditionalPmf, ProbError> {
        let joint_names: Vec<&str> = given.iter().chain(target).copied().collect();
        let joint = self.marginalize(&joint_names)?;
        let gvars: Vec<Var> = joint.vars[..given.len()].to_vec();
        let tvars: Vec<Var> = joint.vars[given.len()..].to_vec();
        let tlen = product_len(&tvars);
        let glen = product_len(&gvars);
        let mut rows = Vec::with_capacity(glen * tlen);
        for g in 0..glen {
            let row = &joint.probs[g * tlen..(g + 1) * tlen];
            let mass: f64 = row.iter().sum();
            if mass > 0.0 {
                rows.extend(row.iter().map(|p| p / mass));
            } else {
                rows.extend(std::iter::repeat(1.0 / tlen as f64).take(tlen));
            }
        }
        ConditionalPmf::new(gvars, tvars, rows)
    }
}

/// `-sum p log2 p` with the `0 log 0 = 0` convention.
pub fn entropy_of(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Conditional probability table: for each tuple of the given variables, a
/// pmf over the target tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmf {
    given: Vec<Var>,
    target: Vec<Var>,
    /// Row-major: `rows[g * |target product| + t]`.
    rows: Vec<f64>,
}

impl ConditionalPmf {
    pub fn new(given: Vec<Var>, target: Vec<Var>, rows: Vec<f64>) -> Result<Self, ProbError> {
        let all: Vec<Var> = given.iter().chain(&target).cloned().collect();
        check_distinct(&all)?;
        let glen = product_len(&given);
        let tlen = product_len(&target);
        if rows.len() != glen * tlen {
            return Err(ProbError::TableSize { got: rows.len(), want: glen * tlen });
        }
        let mut rows = rows;
        for g in 0..glen {
            let row = &mut rows[g * tlen..(g + 1) * tlen];
            for &p in row.iter() {
                if p < 0.0 {
                    return Err(ProbError::NegativeProbability {
                        value: p,
                        context: format!("kernel row {g}"),
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > NORM_TOL {
                return Err(ProbError::NotNormalized { context: format!("kernel row {g}"), sum });
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
        Ok(ConditionalPmf { given, target, rows })
    }

    /// Build a kernel by evaluating `f(given indices, target indices)` on
    /// every cell.
    pub fn from_fn(
        given: Vec<Var>,
        target: Vec<Var>,
        f: impl Fn(&[usize], &[usize]) -> f64,
    ) -> Result<Self, ProbError> {
        let glen = product_len(&given);
        let tlen = product_len(&target);
        let mut rows = Vec::with_capacity(glen * tlen);
        let mut gidx = vec![0usize; given.len()];
        let mut tidx = vec![0usize; target.len()];
        for g in 0..glen {
            unflatten(&given, g, &mut gidx);
            for t in 0..tlen {
                unflatten(&target, t, &mut tidx);
                rows.push(f(&gidx, &tidx));
            }
        }
        ConditionalPmf::new(given, target, rows)
    }

    /// Deterministic kernel: each given tuple maps to exactly one target
    /// tuple.
    pub fn deterministic(
        given: Vec<Var>,
        target: Vec<Var>,
        f: impl Fn(&[usize]) -> Vec<usize>,
    ) -> Result<Self, ProbError> {
        ConditionalPmf::from_fn(given, target, |g, t| if f(g) == t { 1.0 } else { 0.0 })
    }

    pub fn given(&self) -> &[Var] {
        &self.given
    }

    pub fn target(&self) -> &[Var] {
        &self.target
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn target_len(&self) -> usize {
        product_len(&self.target)
    }

    pub fn given_len(&self) -> usize {
        product_len(&self.given)
    }

    /// The pmf row for a tuple of given-variable symbol indices.
    pub fn row_by_index(&self, gidx: &[usize]) -> &[f64] {
        let tlen = self.target_len();
        let g = flatten(&self.given, gidx);
        &self.rows[g * tlen..(g + 1) * tlen]
    }

    /// The pmf row for a flat given index.
    pub fn row(&self, g: usize) -> &[f64] {
        let tlen = self.target_len();
        &self.rows[g * tlen..(g + 1) * tlen]
    }

    /// True if every row puts all mass on a single target tuple.
    pub fn is_deterministic(&self) -> bool {
        (0..self.given_len()).all(|g| self.row(g).iter().filter(|&&p| p > 0.0).count() == 1)
    }

    /// For deterministic kernels: the target flat index selected by each
    /// given flat index.
    pub fn argmax_map(&self) -> Vec<usize> {
        (0..self.given_len())
            .map(|g| {
                self.row(g)
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect()
    }
}

/// Binary entropy function in bits; `H_b(0) = H_b(1) = 0` by continuity.
pub fn binary_entropy(x: f64) -> Result<f64, ProbError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(ProbError::OutOfRange(x));
    }
    Ok(entropy_of(&[x, 1.0 - x]))
}

/// Binary convolution `a * b = a(1-b) + (1-a)b`: the crossover probability
/// of a cascade of two binary symmetric flips.
pub fn binary_convolution(a: f64, b: f64) -> Result<f64, ProbError> {
    if !(0.0..=1.0).contains(&a) {
        return Err(ProbError::OutOfRange(a));
    }
    if !(0.0..=1.0).contains(&b) {
        return Err(ProbError::OutOfRange(b));
    }
    Ok(a * (1.0 - b) + (1.0 - a) * b)
}

/// Sample a point uniformly from the probability simplex (Dirichlet(1)).
pub fn sample_simplex(rng: &mut impl rand::Rng, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    v
}

/// Random joint pmf over the given variables; used by property suites and
/// random-search restarts.
pub fn random_joint(rng: &mut impl rand::Rng, vars: Vec<Var>) -> JointPmf {
    let n = product_len(&vars);
    JointPmf::new(vars, sample_simplex(rng, n)).unwrap()
}

/// Random conditional kernel with independent Dirichlet(1) rows.
pub fn random_kernel(rng: &mut impl rand::Rng, given: Vec<Var>, target: Vec<Var>) -> ConditionalPmf {
    let glen = product_len(&given);
    let tlen = product_len(&target);
    let mut rows = Vec::with_capacity(glen * tlen);
    for _ in 0..glen {
        rows.extend(sample_simplex(rng, tlen));
    }
    ConditionalPmf::new(given, target, rows).unwrap()
}
