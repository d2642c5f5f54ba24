//! Finite-blocklength realization of the first-round (common-key) scheme:
//! superposition codebooks with random binning, conferenced encoding,
//! typicality or maximum-likelihood decoding, exact error/leakage oracles,
//! and a Monte Carlo harness.

use crate::channel::{AuxiliaryScheme, ChannelError, FullJoint, SdMacSpec};
use crate::prob::{ConditionalPmf, JointPmf, ProbError};
use crate::report::{wilson_interval, SimulationReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("input maps must be deterministic for protocol execution")]
    StochasticInputMap,
    #[error("codebook needs {needed} cells, limit {limit}")]
    SizeOverflow { needed: u64, limit: u64 },
    #[error("exact enumeration needs {needed} sequence tuples, budget {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },
    #[error("trials must be >= 1")]
    NoTrials,
}

/// How encoding breaks ties among equally valid typical candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Uniform random choice; the simulation default.
    Random,
    /// Deterministic lowest index; required by the exact oracles.
    LowestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderMode {
    Typicality,
    MaxLikelihood,
}

#[derive(Debug, Clone)]
pub struct Round1Config {
    pub n: usize,
    pub rate_u: f64,
    pub rate_v_total: f64,
    pub rate_v_bins: f64,
    pub r_c: f64,
    pub typicality_eps: f64,
    pub decoder: DecoderMode,
    pub tie_break: TieBreak,
    pub seed: u64,
    /// Monte Carlo trials per fresh codebook.
    pub batch_size: usize,
    /// Cap on the number of sequence tuples the exact oracle may visit.
    pub enum_budget: u64,
}

impl Round1Config {
    pub fn new(n: usize) -> Round1Config {
        Round1Config {
            n,
            rate_u: 0.0,
            rate_v_total: 0.5,
            rate_v_bins: 0.25,
            r_c: 2.0,
            typicality_eps: 0.1,
            decoder: DecoderMode::MaxLikelihood,
            tie_break: TieBreak::Random,
            seed: 0,
            batch_size: 200,
            enum_budget: 1 << 22,
        }
    }

    fn size(&self, rate: f64) -> usize {
        ((2f64).powf(self.n as f64 * rate).floor() as usize).max(1)
    }

    pub fn m_u(&self) -> usize {
        self.size(self.rate_u)
    }

    pub fn m_v(&self) -> usize {
        self.size(self.rate_v_total)
    }

    pub fn n_bins(&self) -> usize {
        self.size(self.rate_v_bins)
    }
}

/// Absolute strong typicality: every cell of the empirical joint type is
/// within `eps` of the reference pmf, and cells of probability zero never
/// occur. `seqs` are aligned with the pmf's variable order.
pub fn strongly_typical(pmf: &JointPmf, seqs: &[&[usize]], eps: f64) -> bool {
    let sizes: Vec<usize> = pmf.vars().iter().map(|v| v.alphabet.len()).collect();
    let total: usize = sizes.iter().product();
    let n = seqs[0].len();
    let mut counts = vec![0u32; total];
    for i in 0..n {
        let mut idx = 0;
        for (k, s) in seqs.iter().enumerate() {
            idx = idx * sizes[k] + s[i];
        }
        counts[idx] += 1;
    }
    for (c, p) in counts.iter().zip(pmf.probs()) {
        if *p == 0.0 {
            if *c > 0 {
                return false;
            }
        } else if (*c as f64 / n as f64 - p).abs() > eps {
            return false;
        }
    }
    true
}

pub(crate) fn sample_idx(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Precomputed distributions shared by every round-1 operation on one
/// (channel, scheme) pair.
pub struct Round1Session {
    pub spec: SdMacSpec,
    pub aux: AuxiliaryScheme,
    joint_su: JointPmf,
    joint_suv: JointPmf,
    joint_uyt: JointPmf,
    joint_uvyt: JointPmf,
    p_u: Vec<f64>,
    p_v_given_u: ConditionalPmf,
    lik_yt_given_uv: ConditionalPmf,
    /// x_j(u, v, s), row index ((u * |V| + v) * |S| + s).
    x1_map: Vec<usize>,
    x2_map: Vec<usize>,
    pub h_uv_given_s: f64,
}

impl Round1Session {
    pub fn new(spec: &SdMacSpec, aux: &AuxiliaryScheme) -> Result<Round1Session, ProtocolError> {
        if !aux.x1_kernel.is_deterministic() || !aux.x2_kernel.is_deterministic() {
            return Err(ProtocolError::StochasticInputMap);
        }
        let fj = FullJoint::round1(spec, aux)?;
        let j = fj.joint();
        let joint_su = j.marginalize(&["s", "u"])?;
        let joint_suv = j.marginalize(&["s", "u", "v"])?;
        let joint_uyt = j.marginalize(&["u", "y", "t"])?;
        let joint_uvyt = j.marginalize(&["u", "v", "y", "t"])?;
        let p_u = j.marginalize(&["u"])?.probs().to_vec();
        let p_v_given_u = j.marginalize(&["u", "v"])?.conditional(&["v"], &["u"])?;
        let lik_yt_given_uv = joint_uvyt.conditional(&["y", "t"], &["u", "v"])?;
        let h_uv_given_s = j.entropy(&["u", "v", "s"])? - j.entropy(&["s"])?;
        Ok(Round1Session {
            spec: spec.clone(),
            aux: aux.clone(),
            joint_su,
            joint_suv,
            joint_uyt,
            joint_uvyt,
            p_u,
            p_v_given_u,
            lik_yt_given_uv,
            x1_map: aux.x1_kernel.argmax_map(),
            x2_map: aux.x2_kernel.argmax_map(),
            h_uv_given_s,
        })
    }

    pub fn x_seqs(
        &self,
        u_seq: &[usize],
        v_seq: &[usize],
        s_seq: &[usize],
    ) -> (Vec<usize>, Vec<usize>) {
        let (nv, ns) = (self.aux.v.len(), self.spec.s.len());
        let idx = |i: usize| (u_seq[i] * nv + v_seq[i]) * ns + s_seq[i];
        let x1 = (0..s_seq.len()).map(|i| self.x1_map[idx(i)]).collect();
        let x2 = (0..s_seq.len()).map(|i| self.x2_map[idx(i)]).collect();
        (x1, x2)
    }

    pub fn draw_state(&self, n: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
        let ps = self.spec.state_pmf.probs();
        let s: Vec<usize> = (0..n).map(|_| sample_idx(rng, ps)).collect();
        let t = s.iter().map(|&si| sample_idx(rng, self.spec.degrade_kernel.row(si))).collect();
        (s, t)
    }
}

#[derive(Debug, Clone)]
pub struct SuperpositionCodebook {
    /// `m_u` rows of length n.
    pub u_words: Vec<Vec<usize>>,
    /// Per u-word: `m_v` rows of length n.
    pub v_words: Vec<Vec<Vec<usize>>>,
    /// Per u-word: bin index of each v-word.
    pub bin_of: Vec<Vec<usize>>,
    pub n_bins: usize,
}

const CODEBOOK_CELL_LIMIT: u64 = 1 << 26;

/// i.i.d. superposition codebook: u-words from the U marginal, v-words from
/// `p(v|u)` symbol-wise under their parent, bins uniform.
pub fn generate_codebook(
    session: &Round1Session,
    cfg: &Round1Config,
    rng: &mut ChaCha12Rng,
) -> Result<SuperpositionCodebook, ProtocolError> {
    let (m_u, m_v, n_bins) = (cfg.m_u(), cfg.m_v(), cfg.n_bins());
    let needed = (m_u as u64) * (1 + m_v as u64) * cfg.n as u64;
    if needed > CODEBOOK_CELL_LIMIT {
        return Err(ProtocolError::SizeOverflow { needed, limit: CODEBOOK_CELL_LIMIT });
    }
    let mut u_words = Vec::with_capacity(m_u);
    let mut v_words = Vec::with_capacity(m_u);
    let mut bin_of = Vec::with_capacity(m_u);
    for _ in 0..m_u {
        let u: Vec<usize> = (0..cfg.n).map(|_| sample_idx(rng, &session.p_u)).collect();
        let mut vs = Vec::with_capacity(m_v);
        for _ in 0..m_v {
            let v: Vec<usize> = u
                .iter()
                .map(|&ui| sample_idx(rng, session.p_v_given_u.row(ui)))
                .collect();
            vs.push(v);
        }
        let bins: Vec<usize> = (0..m_v).map(|_| rng.gen_range(0..n_bins)).collect();
        u_words.push(u);
        v_words.push(vs);
        bin_of.push(bins);
    }
    Ok(SuperpositionCodebook { u_words, v_words, bin_of, n_bins })
}

/// All `(m_u, m_v)` pairs jointly typical with the state sequence.
fn typical_pairs(
    session: &Round1Session,
    codebook: &SuperpositionCodebook,
    s_seq: &[usize],
    eps: f64,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (mu, u) in codebook.u_words.iter().enumerate() {
        if !strongly_typical(&session.joint_su, &[s_seq, u], eps) {
            continue;
        }
        for (mv, v) in codebook.v_words[mu].iter().enumerate() {
            if strongly_typical(&session.joint_suv, &[s_seq, u, v], eps) {
                out.push((mu, mv));
            }
        }
    }
    out
}

/// Conferenced index selection: a jointly typical pair, chosen uniformly at
/// random (simulation) or by lowest index (exact mode); `(0, 0)` when the
/// typical set is empty. Both encoders run this identically, so the indices
/// agree whenever the conferencing budget suffices.
pub fn encode_conference(
    session: &Round1Session,
    codebook: &SuperpositionCodebook,
    s_seq: &[usize],
    eps: f64,
    tie_break: TieBreak,
    rng: &mut ChaCha12Rng,
) -> (usize, usize) {
    let cands = typical_pairs(session, codebook, s_seq, eps);
    if cands.is_empty() {
        return (0, 0);
    }
    match tie_break {
        TieBreak::LowestIndex => cands[0],
        TieBreak::Random => cands[rng.gen_range(0..cands.len())],
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConferencingBudget {
    /// Exact bits needed to describe the typical-set intersection at this
    /// blocklength: `log2(#typical u-words x max_u #typical v-words)`.
    pub bits: f64,
    /// `bits / n`.
    pub rate: f64,
    /// Asymptotic sufficient condition `H(U,V|S)` from the scheme.
    pub asymptotic_rate: f64,
}

pub fn conferencing_budget(
    session: &Round1Session,
    codebook: &SuperpositionCodebook,
    s_seq: &[usize],
    eps: f64,
) -> ConferencingBudget {
    let n = s_seq.len() as f64;
    let mut u_count = 0u64;
    let mut max_v = 0u64;
    for (mu, u) in codebook.u_words.iter().enumerate() {
        if !strongly_typical(&session.joint_su, &[s_seq, u], eps) {
            continue;
        }
        u_count += 1;
        let v_count = codebook.v_words[mu]
            .iter()
            .filter(|v| strongly_typical(&session.joint_suv, &[s_seq, u, v], eps))
            .count() as u64;
        max_v = max_v.max(v_count);
    }
    let bits = if u_count == 0 || max_v == 0 {
        0.0
    } else {
        ((u_count * max_v) as f64).log2()
    };
    ConferencingBudget { bits, rate: bits / n, asymptotic_rate: session.h_uv_given_s }
}

/// Memoryless channel use: one `(y, z)` draw per symbol.
pub fn channel_transmit(
    spec: &SdMacSpec,
    x1_seq: &[usize],
    x2_seq: &[usize],
    s_seq: &[usize],
    rng: &mut ChaCha12Rng,
) -> (Vec<usize>, Vec<usize>) {
    let (nx2, ns, nz) = (spec.x2.len(), spec.s.len(), spec.z.len());
    let mut y = Vec::with_capacity(s_seq.len());
    let mut z = Vec::with_capacity(s_seq.len());
    for i in 0..s_seq.len() {
        let row = spec.channel_kernel.row((x1_seq[i] * nx2 + x2_seq[i]) * ns + s_seq[i]);
        let yz = sample_idx(rng, row);
        y.push(yz / nz);
        z.push(yz % nz);
    }
    (y, z)
}

#[derive(Debug, Clone, Copy)]
pub struct DecodeResult {
    pub m_u: usize,
    pub m_v: usize,
    pub k0: usize,
    pub ok: bool,
}

/// Receiver-side decoding from `(y^n, t^n)`. Typicality mode requires a
/// unique jointly typical u-word and then a unique v-word in its cloud;
/// maximum-likelihood mode scores all pairs under the mismatched per-symbol
/// likelihood `p(y,t|u,v)`, ties to the lowest index. Failures fall back to
/// `(0, 0)` with `ok = false`.
pub fn decode_common_key(
    session: &Round1Session,
    codebook: &SuperpositionCodebook,
    y_seq: &[usize],
    t_seq: &[usize],
    eps: f64,
    mode: DecoderMode,
) -> DecodeResult {
    let fallback = |ok| DecodeResult {
        m_u: 0,
        m_v: 0,
        k0: codebook.bin_of[0][0],
        ok,
    };
    match mode {
        DecoderMode::Typicality => {
            let mut u_hit: Option<usize> = None;
            for (mu, u) in codebook.u_words.iter().enumerate() {
                if strongly_typical(&session.joint_uyt, &[u, y_seq, t_seq], eps) {
                    if u_hit.is_some() {
                        return fallback(false);
                    }
                    u_hit = Some(mu);
                }
            }
            let mu = match u_hit {
                Some(mu) => mu,
                None => return fallback(false),
            };
            let u = &codebook.u_words[mu];
            let mut v_hit: Option<usize> = None;
            for (mv, v) in codebook.v_words[mu].iter().enumerate() {
                if strongly_typical(&session.joint_uvyt, &[u, v, y_seq, t_seq], eps) {
                    if v_hit.is_some() {
                        return fallback(false);
                    }
                    v_hit = Some(mv);
                }
            }
            match v_hit {
                Some(mv) => DecodeResult { m_u: mu, m_v: mv, k0: codebook.bin_of[mu][mv], ok: true },
                None => fallback(false),
            }
        }
        DecoderMode::MaxLikelihood => {
            let nv = session.aux.v.len();
            let (ny, nt) = (session.spec.y.len(), session.spec.t.len());
            let _ = ny;
            let mut best = f64::NEG_INFINITY;
            let mut arg = (0usize, 0usize);
            for (mu, u) in codebook.u_words.iter().enumerate() {
                for (mv, v) in codebook.v_words[mu].iter().enumerate() {
                    let mut score = 0.0;
                    for i in 0..y_seq.len() {
                        let p = session.lik_yt_given_uv.row(u[i] * nv + v[i])
                            [y_seq[i] * nt + t_seq[i]];
                        if p == 0.0 {
                            score = f64::NEG_INFINITY;
                            break;
                        }
                        score += p.ln();
                    }
                    if score > best {
                        best = score;
                        arg = (mu, mv);
                    }
                }
            }
            if best.is_finite() {
                DecodeResult {
                    m_u: arg.0,
                    m_v: arg.1,
                    k0: codebook.bin_of[arg.0][arg.1],
                    ok: true,
                }
            } else {
                fallback(false)
            }
        }
    }
}

/// Iterator over length-n sequences drawn from a restricted symbol support,
/// yielding (sequence, probability) with probabilities from a full pmf row.
struct SeqEnum<'a> {
    support: &'a [usize],
    probs: &'a [f64],
    n: usize,
    counter: Vec<usize>,
    done: bool,
}

impl<'a> SeqEnum<'a> {
    fn new(support: &'a [usize], probs: &'a [f64], n: usize) -> SeqEnum<'a> {
        SeqEnum { support, probs, n, counter: vec![0; n], done: support.is_empty() }
    }
}

impl Iterator for SeqEnum<'_> {
    type Item = (Vec<usize>, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let seq: Vec<usize> = self.counter.iter().map(|&c| self.support[c]).collect();
        let p: f64 = seq.iter().map(|&s| self.probs[s]).product();
        // odometer increment
        let mut i = 0;
        loop {
            if i == self.n {
                self.done = true;
                break;
            }
            self.counter[i] += 1;
            if self.counter[i] < self.support.len() {
                break;
            }
            self.counter[i] = 0;
            i += 1;
        }
        Some((seq, p))
    }
}

fn support_of(probs: &[f64]) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ExactRound1Metrics {
    pub p_err: f64,
    /// `I(K_0; Z^n) / n` in bits per symbol.
    pub leakage_per_symbol: f64,
    pub key_entropy: f64,
    /// Probability that the conferencing budget fits within `n * r_c`.
    pub conferencing_ok: f64,
}

/// Per-symbol conditional tables needed by the enumeration.
struct SymbolTables {
    /// p(y | x1, x2, s), row index ((x1 * |X2| + x2) * |S| + s).
    y_given_xxs: Vec<Vec<f64>>,
    /// p(z | x1, x2, s).
    z_given_xxs: Vec<Vec<f64>>,
}

fn symbol_tables(spec: &SdMacSpec) -> SymbolTables {
    let (ny, nz) = (spec.y.len(), spec.z.len());
    let rows = spec.channel_kernel.given_len();
    let mut y_given_xxs = Vec::with_capacity(rows);
    let mut z_given_xxs = Vec::with_capacity(rows);
    for g in 0..rows {
        let row = spec.channel_kernel.row(g);
        let mut py = vec![0.0; ny];
        let mut pz = vec![0.0; nz];
        for yi in 0..ny {
            for zi in 0..nz {
                py[yi] += row[yi * nz + zi];
                pz[zi] += row[yi * nz + zi];
            }
        }
        y_given_xxs.push(py);
        z_given_xxs.push(pz);
    }
    SymbolTables { y_given_xxs, z_given_xxs }
}

fn check_budget(needed: u64, budget: u64) -> Result<(), ProtocolError> {
    if needed > budget {
        Err(ProtocolError::BudgetExceeded { needed, budget })
    } else {
        Ok(())
    }
}

fn mutual_information_of_table(table: &[Vec<f64>]) -> f64 {
    let rows = table.len();
    let cols = table[0].len();
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let mut col_sums = vec![0.0; cols];
    for r in table {
        for (c, p) in r.iter().enumerate() {
            col_sums[c] += p;
        }
    }
    let mut mi = 0.0;
    for i in 0..rows {
        for c in 0..cols {
            let p = table[i][c];
            if p > 0.0 {
                mi += p * (p / (row_sums[i] * col_sums[c])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Exact Definition-level metrics for one fixed codebook, by summation over
/// every state sequence and channel realization. Encoding ties are broken
/// by lowest index so the enumeration is deterministic.
pub fn exact_round1_metrics(
    session: &Round1Session,
    codebook: &SuperpositionCodebook,
    cfg: &Round1Config,
) -> Result<ExactRound1Metrics, ProtocolError> {
    let spec = &session.spec;
    let n = cfg.n as u32;
    let s_support = support_of(spec.state_pmf.probs());
    let nz = spec.z.len();
    let zn = (nz as u64).checked_pow(n).unwrap_or(u64::MAX);
    let yn = (spec.y.len() as u64).checked_pow(n).unwrap_or(u64::MAX);
    let tn = (spec.t.len() as u64).checked_pow(n).unwrap_or(u64::MAX);
    let sn = (s_support.len() as u64).checked_pow(n).unwrap_or(u64::MAX);
    check_budget(sn.saturating_mul(yn.saturating_mul(tn).max(zn)), cfg.enum_budget)?;

    let tables = symbol_tables(spec);
    let n_bins = codebook.n_bins;
    let mut leak_table = vec![vec![0.0; zn as usize]; n_bins];
    let mut p_key = vec![0.0; n_bins];
    let mut p_err = 0.0;
    let mut conf_ok = 0.0;
    let mut rng = ChaCha12Rng::seed_from_u64(0); // unused under LowestIndex

    let (nx2, ns) = (spec.x2.len(), spec.s.len());
    for (s_seq, ps) in SeqEnum::new(&s_support, spec.state_pmf.probs(), cfg.n) {
        if ps == 0.0 {
            continue;
        }
        let (mu, mv) =
            encode_conference(session, codebook, &s_seq, cfg.typicality_eps, TieBreak::LowestIndex, &mut rng);
        let k0 = codebook.bin_of[mu][mv];
        p_key[k0] += ps;
        let budget = conferencing_budget(session, codebook, &s_seq, cfg.typicality_eps);
        if budget.bits <= cfg.n as f64 * cfg.r_c + 1e-12 {
            conf_ok += ps;
        }
        let u = &codebook.u_words[mu];
        let v = &codebook.v_words[mu][mv];
        let (x1, x2) = session.x_seqs(u, v, &s_seq);
        let xs_rows: Vec<usize> =
            (0..cfg.n).map(|i| (x1[i] * nx2 + x2[i]) * ns + s_seq[i]).collect();

        // z-side: outer product of per-symbol eavesdropper marginals
        let mut zvec = vec![ps];
        for &g in &xs_rows {
            let pz = &tables.z_given_xxs[g];
            let mut next = Vec::with_capacity(zvec.len() * nz);
            for &acc in &zvec {
                for &p in pz {
                    next.push(acc * p);
                }
            }
            zvec = next;
        }
        for (zi, p) in zvec.iter().enumerate() {
            leak_table[k0][zi] += p;
        }

        // (y, t)-side: error probability of the decoder
        let t_all: Vec<usize> = (0..spec.t.len()).collect();
        for (t_seq, _unit) in SeqEnum::new(&t_all, &vec![1.0; spec.t.len()], cfg.n) {
            let pt: f64 = (0..cfg.n)
                .map(|i| spec.degrade_kernel.row(s_seq[i])[t_seq[i]])
                .product();
            if pt == 0.0 {
                continue;
            }
            let y_all: Vec<usize> = (0..spec.y.len()).collect();
            for (y_seq, _u2) in SeqEnum::new(&y_all, &vec![1.0; spec.y.len()], cfg.n) {
                let py: f64 = (0..cfg.n)
                    .map(|i| tables.y_given_xxs[xs_rows[i]][y_seq[i]])
                    .product();
                if py == 0.0 {
                    continue;
                }
                let dec = decode_common_key(
                    session,
                    codebook,
                    &y_seq,
                    &t_seq,
                    cfg.typicality_eps,
                    cfg.decoder,
                );
                if dec.k0 != k0 || !dec.ok {
                    p_err += ps * pt * py;
                }
            }
        }
    }

    let leakage = mutual_information_of_table(&leak_table) / cfg.n as f64;
    let key_entropy = crate::prob::entropy_of(&p_key);
    Ok(ExactRound1Metrics {
        p_err,
        leakage_per_symbol: leakage,
        key_entropy,
        conferencing_ok: conf_ok,
    })
}

/// Independent second path for the exact leakage: enumerates `(s^n, z^n)`
/// pairs directly (no outer-product accumulation), assembles a compound
/// joint pmf over (key, z-sequence), and reuses the generic mutual
/// information machinery.
pub fn exact_round1_leakage_alt(
    session: &Round1Session,
    codebook: &SuperpositionCodebook,
    cfg: &Round1Config,
) -> Result<f64, ProtocolError> {
    use crate::prob::{Alphabet, Var};
    let spec = &session.spec;
    let n = cfg.n as u32;
    let s_support = support_of(spec.state_pmf.probs());
    let nz = spec.z.len();
    let zn = (nz as u64).checked_pow(n).unwrap_or(u64::MAX);
    let sn = (s_support.len() as u64).checked_pow(n).unwrap_or(u64::MAX);
    check_budget(sn.saturating_mul(zn), cfg.enum_budget)?;

    let tables = symbol_tables(spec);
    let n_bins = codebook.n_bins;
    let mut probs = vec![0.0; n_bins * zn as usize];
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let (nx2, ns) = (spec.x2.len(), spec.s.len());
    let z_all: Vec<usize> = (0..nz).collect();
    for (s_seq, ps) in SeqEnum::new(&s_support, spec.state_pmf.probs(), cfg.n) {
        if ps == 0.0 {
            continue;
        }
        let (mu, mv) =
            encode_conference(session, codebook, &s_seq, cfg.typicality_eps, TieBreak::LowestIndex, &mut rng);
        let k0 = codebook.bin_of[mu][mv];
        let u = &codebook.u_words[mu];
        let v = &codebook.v_words[mu][mv];
        let (x1, x2) = session.x_seqs(u, v, &s_seq);
        for (z_seq, _unit) in SeqEnum::new(&z_all, &vec![1.0; nz], cfg.n) {
            let mut zi = 0usize;
            let mut pz = 1.0;
            for i in 0..cfg.n {
                let g = (x1[i] * nx2 + x2[i]) * ns + s_seq[i];
                pz *= tables.z_given_xxs[g][z_seq[i]];
                zi = zi * nz + z_seq[i];
            }
            probs[k0 * zn as usize + zi] += ps * pz;
        }
    }
    let key_alpha = Alphabet::new("k", (0..n_bins).map(|i| i.to_string())).unwrap();
    let z_alpha = Alphabet::new("zseq", (0..zn).map(|i| i.to_string())).unwrap();
    let joint = JointPmf::new(
        vec![Var::new("k", key_alpha), Var::new("zseq", z_alpha)],
        probs,
    )?;
    Ok(joint.mutual_information(&["k"], &["zseq"])? / cfg.n as f64)
}

/// Seeded Monte Carlo estimate of the round-1 metrics. Codebooks are
/// refreshed every `batch_size` trials; every trial has its own derived RNG
/// stream, so the result is independent of execution order.
pub fn monte_carlo_round1(
    session: &Round1Session,
    cfg: &Round1Config,
    trials: u64,
) -> Result<SimulationReport, ProtocolError> {
    if trials == 0 {
        return Err(ProtocolError::NoTrials);
    }
    let mut errors = 0u64;
    let mut conf_ok = 0u64;
    let mut fallbacks = 0u64;
    let mut key_hist = vec![0u64; cfg.n_bins()];
    let mut codebook = None;
    for trial in 0..trials {
        let batch = trial / cfg.batch_size as u64;
        if trial % cfg.batch_size as u64 == 0 {
            let mut crng = ChaCha12Rng::seed_from_u64(crate::bounds::derive_seed(
                cfg.seed ^ 0xc0de,
                batch,
            ));
            codebook = Some(generate_codebook(session, cfg, &mut crng)?);
        }
        let codebook = codebook.as_ref().unwrap();
        let mut rng =
            ChaCha12Rng::seed_from_u64(crate::bounds::derive_seed(cfg.seed, trial));
        let (s_seq, t_seq) = session.draw_state(cfg.n, &mut rng);
        let (mu, mv) =
            encode_conference(session, codebook, &s_seq, cfg.typicality_eps, cfg.tie_break, &mut rng);
        let budget = conferencing_budget(session, codebook, &s_seq, cfg.typicality_eps);
        if budget.bits <= cfg.n as f64 * cfg.r_c + 1e-12 {
            conf_ok += 1;
        }
        let k0 = codebook.bin_of[mu][mv];
        key_hist[k0] += 1;
        let u = &codebook.u_words[mu];
        let v = &codebook.v_words[mu][mv];
        let (x1, x2) = session.x_seqs(u, v, &s_seq);
        let (y, _z) = channel_transmit(&session.spec, &x1, &x2, &s_seq, &mut rng);
        let dec =
            decode_common_key(session, codebook, &y, &t_seq, cfg.typicality_eps, cfg.decoder);
        if dec.k0 != k0 || !dec.ok {
            errors += 1;
        }
        if !dec.ok {
            fallbacks += 1;
        }
    }

    let mut report = SimulationReport::new(cfg.seed);
    report.config_entry("task", "sim-round1");
    report.config_entry("n", cfg.n);
    report.config_entry("rate_u", cfg.rate_u);
    report.config_entry("rate_v_total", cfg.rate_v_total);
    report.config_entry("rate_v_bins", cfg.rate_v_bins);
    report.config_entry("r_c", cfg.r_c);
    report.config_entry("eps", cfg.typicality_eps);
    report.config_entry(
        "decoder",
        match cfg.decoder {
            DecoderMode::Typicality => "typicality",
            DecoderMode::MaxLikelihood => "max_likelihood",
        },
    );
    report.config_entry("trials", trials);
    let p_hat = errors as f64 / trials as f64;
    report.estimated("p_err", p_hat, Some(wilson_interval(errors, trials, 1.96)));
    report.estimated(
        "conferencing_ok",
        conf_ok as f64 / trials as f64,
        Some(wilson_interval(conf_ok, trials, 1.96)),
    );
    report.estimated("decode_fallback", fallbacks as f64 / trials as f64, None);
    let hist: Vec<f64> = key_hist.iter().map(|&c| c as f64 / trials as f64).collect();
    report.estimated("key_entropy", crate::prob::entropy_of(&hist), None);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_modulo_additive, build_stuck_at, EveMode};
    use crate::presets::{modadd_alpha_scheme, stuck_at_pattern_scheme};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn modadd_session(p_s: f64, p_1: f64, p_2: f64, alpha: f64) -> Round1Session {
        let spec = build_modulo_additive(p_s, p_1, p_2).unwrap();
        let aux = modadd_alpha_scheme(&spec, alpha);
        Round1Session::new(&spec, &aux).unwrap()
    }

    #[test]
    fn codebook_sizes_and_determinism() {
        let session = modadd_session(0.0, 0.1, 0.3, 0.5);
        let mut cfg = Round1Config::new(4);
        cfg.rate_u = 0.0;
        cfg.rate_v_total = 1.0;
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let cb = generate_codebook(&session, &cfg, &mut rng).unwrap();
        assert_eq!(cb.u_words.len(), 1);
        assert_eq!(cb.v_words[0].len(), 16);
        let mut rng2 = ChaCha12Rng::seed_from_u64(1);
        let cb2 = generate_codebook(&session, &cfg, &mut rng2).unwrap();
        assert_eq!(cb.v_words, cb2.v_words);
        assert_eq!(cb.bin_of, cb2.bin_of);
    }

    #[test]
    fn codebook_symbol_frequencies_concentrate() {
        // alpha = 0.3: v-symbol 1 appears with probability 0.3 per cell
        let session = modadd_session(0.2, 0.1, 0.3, 0.3);
        let mut cfg = Round1Config::new(4);
        cfg.rate_v_total = 1.0;
        let mut ones = 0u64;
        let mut total = 0u64;
        for seed in 0..100 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let cb = generate_codebook(&session, &cfg, &mut rng).unwrap();
            for v in &cb.v_words[0] {
                ones += v.iter().filter(|&&x| x == 1).count() as u64;
                total += v.len() as u64;
            }
        }
        let p_hat = ones as f64 / total as f64;
        let sigma = (0.3 * 0.7 / total as f64).sqrt();
        assert!((p_hat - 0.3).abs() <= 3.0 * sigma, "p_hat = {p_hat}");
    }

    #[test]
    fn encode_copy_scheme_finds_state() {
        // V = S noiselessly: a typical pair must reproduce the state pattern
        let spec = build_stuck_at(0.5, EveMode::Uninformative).unwrap();
        let aux = stuck_at_pattern_scheme(&spec);
        let session = Round1Session::new(&spec, &aux).unwrap();
        let mut cfg = Round1Config::new(8);
        cfg.rate_v_total = 1.0;
        cfg.typicality_eps = 0.51; // generous: only the zero-cells bind
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let cb = generate_codebook(&session, &cfg, &mut rng).unwrap();
        // stuck0/stuck1 force v; clean cells leave v free
        let s_seq = vec![0, 1, 0, 1, 2, 2, 2, 2];
        let (mu, mv) = encode_conference(
            &session,
            &cb,
            &s_seq,
            cfg.typicality_eps,
            TieBreak::LowestIndex,
            &mut rng,
        );
        let v = &cb.v_words[mu][mv];
        let consistent = s_seq
            .iter()
            .zip(v)
            .all(|(&s, &vi)| (s == 0 && vi == 0) || (s == 1 && vi == 1) || s == 2);
        // the chosen pair is only meaningful when a candidate exists
        let budget = conferencing_budget(&session, &cb, &s_seq, cfg.typicality_eps);
        if budget.bits > 0.0 {
            assert!(consistent);
        }
    }

    #[test]
    fn encode_empty_typical_set_falls_back() {
        let session = modadd_session(0.0, 0.1, 0.3, 0.5);
        let mut cfg = Round1Config::new(6);
        cfg.rate_v_total = 0.34;
        cfg.typicality_eps = 1e-6; // no sequence matches Bern(0.5) exactly at odd counts
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let cb = generate_codebook(&session, &cfg, &mut rng).unwrap();
        let s_seq = vec![0; 6];
        // eps so small that only exact-type matches survive; with 2 words the
        // typical set is almost surely empty for this fixed state
        let picked = encode_conference(&session, &cb, &s_seq, 1e-9, TieBreak::LowestIndex, &mut rng);
        let cands = typical_pairs(&session, &cb, &s_seq, 1e-9);
        if cands.is_empty() {
            assert_eq!(picked, (0, 0));
        }
    }

    #[test]
    fn stuck_pattern_match_count() {
        // words i.i.d. Bern(0.5); matching a fixed half-stuck pattern has
        // probability 2^{-6} per word
        let spec = build_stuck_at(0.5, EveMode::Uninformative).unwrap();
        let aux = stuck_at_pattern_scheme(&spec);
        let session = Round1Session::new(&spec, &aux).unwrap();
        let mut cfg = Round1Config::new(12);
        cfg.rate_v_total = 1.0; // 4096 words
        let pattern: Vec<Option<usize>> = vec![
            Some(0),
            Some(1),
            Some(0),
            Some(1),
            Some(0),
            Some(1),
            None,
            None,
            None,
            None,
            None,
            None,
        ];
        let mut matches = 0u64;
        let mut words = 0u64;
        for seed in 0..20 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let cb = generate_codebook(&session, &cfg, &mut rng).unwrap();
            for v in &cb.v_words[0] {
                words += 1;
                if pattern.iter().zip(v).all(|(p, &vi)| p.map_or(true, |b| b == vi)) {
                    matches += 1;
                }
            }
        }
        let expect = words as f64 / 64.0;
        let sigma = (words as f64 * (1.0 / 64.0) * (63.0 / 64.0)).sqrt();
        assert!(
            (matches as f64 - expect).abs() <= 3.0 * sigma,
            "matches = {matches}, expect = {expect}"
        );
    }

    #[test]
    fn transmit_deterministic_and_noisy() {
        let spec = build_modulo_additive(0.0, 0.0, 0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x1 = vec![0, 1, 1, 0];
        let x2 = vec![1, 1, 0, 0];
        let s = vec![0, 0, 1, 1];
        let (y, z) = channel_transmit(&spec, &x1, &x2, &s, &mut rng);
        let expect: Vec<usize> = (0..4).map(|i| x1[i] ^ x2[i] ^ s[i]).collect();
        assert_eq!(y, expect);
        assert_eq!(z, expect);

        // empirical flip rate of N1 over many symbols
        let spec = build_modulo_additive(0.0, 0.1, 0.1).unwrap();
        let n = 100_000;
        let x1 = vec![0; n];
        let x2 = vec![0; n];
        let s = vec![0; n];
        let (y, _z) = channel_transmit(&spec, &x1, &x2, &s, &mut rng);
        let flips = y.iter().filter(|&&b| b == 1).count() as f64;
        let sigma = (n as f64 * 0.1 * 0.9).sqrt();
        assert!((flips - 0.1 * n as f64).abs() <= 3.0 * sigma);
    }

    #[test]
    fn ml_decoder_perfect_on_noiseless_channel() {
        let session = modadd_session(0.0, 0.0, 0.3, 0.5);
        let mut cfg = Round1Config::new(6);
        cfg.rate_v_total = 0.5;
        cfg.rate_v_bins = 0.5;
        cfg.decoder = DecoderMode::MaxLikelihood;
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let cb = generate_codebook(&session, &cfg, &mut rng).unwrap();
        for trial in 0..50 {
            let mut rng = ChaCha12Rng::seed_from_u64(1000 + trial);
            let (s_seq, t_seq) = session.draw_state(cfg.n, &mut rng);
            let (mu, mv) = encode_conference(
                &session,
                &cb,
                &s_seq,
                cfg.typicality_eps,
                TieBreak::LowestIndex,
                &mut rng,
            );
            let (x1, x2) =
                session.x_seqs(&cb.u_words[mu], &cb.v_words[mu][mv], &s_seq);
            let (y, _z) = channel_transmit(&session.spec, &x1, &x2, &s_seq, &mut rng);
            let dec = decode_common_key(&session, &cb, &y, &t_seq, cfg.typicality_eps, cfg.decoder);
            // noiseless Y = V: distinct v-words are perfectly separable
            if cb.v_words[mu][mv] != cb.v_words[dec.m_u][dec.m_v] {
                panic!("ML decoder missed on a noiseless channel");
            }
        }
    }

    #[test]
    fn overrate_decoding_fails_often() {
        let session = modadd_session(0.0, 0.1, 0.3, 0.5);
        let mut cfg = Round1Config::new(8);
        cfg.rate_v_total = 1.5; // far above I(V;Y) = 1 - H_b(0.1)
        cfg.rate_v_bins = 1.5;
        cfg.decoder = DecoderMode::MaxLikelihood;
        cfg.seed = 5;
        cfg.tie_break = TieBreak::LowestIndex;
        let report = monte_carlo_round1(&session, &cfg, 400).unwrap();
        assert!(report.metric("p_err").unwrap().value >= 0.5);
    }

    #[test]
    fn decoders_mostly_agree_below_bound() {
        let session = modadd_session(0.0, 0.1, 0.3, 0.5);
        let bound = 1.0 - crate::prob::binary_entropy(0.1).unwrap();
        let mut cfg = Round1Config::new(12);
        cfg.rate_v_total = 0.7 * bound;
        cfg.rate_v_bins = 0.2;
        cfg.typicality_eps = 0.2;
        let mut crng = ChaCha12Rng::seed_from_u64(2);
        let cb = generate_codebook(&session, &cfg, &mut crng).unwrap();
        let mut agree = 0;
        let trials = 200;
        for trial in 0..trials {
            let mut rng = ChaCha12Rng::seed_from_u64(5000 + trial);
            let (s_seq, t_seq) = session.draw_state(cfg.n, &mut rng);
            let (mu, mv) = encode_conference(
                &session,
                &cb,
                &s_seq,
                cfg.typicality_eps,
                TieBreak::LowestIndex,
                &mut rng,
            );
            let (x1, x2) =
                session.x_seqs(&cb.u_words[mu], &cb.v_words[mu][mv], &s_seq);
            let (y, _z) = channel_transmit(&session.spec, &x1, &x2, &s_seq, &mut rng);
            let a = decode_common_key(&session, &cb, &y, &t_seq, cfg.typicality_eps, DecoderMode::Typicality);
            let b = decode_common_key(&session, &cb, &y, &t_seq, cfg.typicality_eps, DecoderMode::MaxLikelihood);
            if a.k0 == b.k0 {
                agree += 1;
            }
        }
        assert!(
            agree as f64 / trials as f64 >= 0.9,
            "agreement {}/{trials}",
            agree
        );
    }

    #[test]
    fn exact_metrics_trivial_cases() {
        // eavesdropper constant: leakage identically zero
        let spec = build_stuck_at(0.4, EveMode::Uninformative).unwrap();
        let aux = stuck_at_pattern_scheme(&spec);
        let session = Round1Session::new(&spec, &aux).unwrap();
        let mut cfg = Round1Config::new(4);
        cfg.rate_v_total = 0.75;
        cfg.rate_v_bins = 0.5;
        cfg.typicality_eps = 0.3;
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let cb = generate_codebook(&session, &cfg, &mut rng).unwrap();
        let m = exact_round1_metrics(&session, &cb, &cfg).unwrap();
        assert_eq!(m.leakage_per_symbol, 0.0);

        // single bin: constant key
        let session = modadd_session(0.5, 0.1, 0.3, 0.5);
        let mut cfg = Round1Config::new(4);
        cfg.rate_v_total = 0.5;
        cfg.rate_v_bins = 0.0;
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let cb = generate_codebook(&session, &cfg, &mut rng).unwrap();
        let m = exact_round1_metrics(&session, &cb, &cfg).unwrap();
        assert_eq!(m.key_entropy, 0.0);
        assert_eq!(m.leakage_per_symbol, 0.0);
    }

    #[test]
    fn exact_leakage_two_paths_agree() {
        let session = modadd_session(0.5, 0.1, 0.3, 0.5);
        let mut cfg = Round1Config::new(6);
        cfg.rate_v_total = 0.5;
        cfg.rate_v_bins = 0.25;
        cfg.typicality_eps = 0.25;
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let cb = generate_codebook(&session, &cfg, &mut rng).unwrap();
        let a = exact_round1_metrics(&session, &cb, &cfg).unwrap().leakage_per_symbol;
        let b = exact_round1_leakage_alt(&session, &cb, &cfg).unwrap();
        assert!(close(a, b, 1e-12), "{a} vs {b}");
        assert!(a > 0.0); // the correlated eavesdropper does learn something
    }

    #[test]
    fn budget_exceeded_reported() {
        let session = modadd_session(0.5, 0.1, 0.3, 0.5);
        let mut cfg = Round1Config::new(16);
        cfg.enum_budget = 1 << 10;
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let cb = generate_codebook(&session, &cfg, &mut rng).unwrap();
        assert!(matches!(
            exact_round1_metrics(&session, &cb, &cfg),
            Err(ProtocolError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn monte_carlo_deterministic_and_noiseless() {
        let session = modadd_session(0.0, 0.0, 0.3, 0.5);
        let mut cfg = Round1Config::new(6);
        cfg.rate_v_total = 0.34;
        cfg.rate_v_bins = 0.34;
        cfg.seed = 77;
        let a = monte_carlo_round1(&session, &cfg, 300).unwrap();
        let b = monte_carlo_round1(&session, &cfg, 300).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.metric("p_err").unwrap().value, 0.0);
    }
}
