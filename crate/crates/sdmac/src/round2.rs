//! Finite-blocklength realization of the second-round (private-key) scheme:
//! double-random-binned description codebooks, receiver-side key generation
//! from (Y^n, T^n), public bin-index messages over the backward channel,
//! transmitter-side reconstruction, and exact secrecy oracles.

use crate::channel::{FullJoint, Round2Scheme, SdMacSpec};
use crate::prob::JointPmf;
use crate::report::{wilson_interval, SimulationReport};
use crate::round1::{sample_idx, strongly_typical, ProtocolError, TieBreak};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct Round2Config {
    pub n: usize,
    /// Description codebook rate per transmitter.
    pub rate_t: f64,
    /// Public bin rate.
    pub rate_bins: f64,
    /// Secret sub-bin (key) rate.
    pub rate_subbins: f64,
    pub typicality_eps: f64,
    pub tie_break: TieBreak,
    pub seed: u64,
    /// Monte Carlo trials per fresh codebook pair.
    pub batch_size: usize,
    pub enum_budget: u64,
}

impl Round2Config {
    pub fn new(n: usize) -> Round2Config {
        Round2Config {
            n,
            rate_t: 1.0,
            rate_bins: 0.75,
            rate_subbins: 0.25,
            typicality_eps: 0.2,
            tie_break: TieBreak::Random,
            seed: 0,
            batch_size: 200,
            enum_budget: 1 << 22,
        }
    }

    fn size(&self, rate: f64) -> usize {
        ((2f64).powf(self.n as f64 * rate).floor() as usize).max(1)
    }

    pub fn m_t(&self) -> usize {
        self.size(self.rate_t)
    }

    pub fn n_bins(&self) -> usize {
        self.size(self.rate_bins)
    }

    pub fn n_subbins(&self) -> usize {
        self.size(self.rate_subbins)
    }
}

#[derive(Debug, Clone)]
pub struct DoubleBinnedCodebook {
    pub t_words: Vec<Vec<usize>>,
    pub bin_of: Vec<usize>,
    pub subbin_of: Vec<usize>,
    pub n_bins: usize,
    pub n_subbins: usize,
}

impl DoubleBinnedCodebook {
    /// Word indices sharing a public bin, ascending.
    pub fn bin_members(&self, bin: usize) -> Vec<usize> {
        (0..self.t_words.len()).filter(|&m| self.bin_of[m] == bin).collect()
    }
}

/// Precomputed distributions for one (channel, round-2 scheme) pair.
pub struct Round2Session {
    pub spec: SdMacSpec,
    pub scheme: Round2Scheme,
    /// Full joint over (s, t, x1, x2, y, z, t1, t2).
    pub joint: JointPmf,
    /// Per transmitter: p(t_i) marginal the codebook words are drawn from.
    p_t_marg: [Vec<f64>; 2],
    /// (t_i, y, t) reference joints for receiver-side typicality.
    joint_tyt: [JointPmf; 2],
    /// (x_i, s, t_i) reference joints for reconstruction typicality.
    joint_xst: [JointPmf; 2],
    /// Covering references I(T_i;Y|T) and packing references I(T_i;X_i,S|T).
    pub i_cover: [f64; 2],
    pub i_pack: [f64; 2],
}

impl Round2Session {
    pub fn new(spec: &SdMacSpec, scheme: &Round2Scheme) -> Result<Round2Session, ProtocolError> {
        let fj = FullJoint::round2(spec, scheme)?;
        let j = fj.joint().clone();
        let p1 = j.marginalize(&["t1"])?.probs().to_vec();
        let p2 = j.marginalize(&["t2"])?.probs().to_vec();
        let tyt1 = j.marginalize(&["t1", "y", "t"])?;
        let tyt2 = j.marginalize(&["t2", "y", "t"])?;
        let xst1 = j.marginalize(&["x1", "s", "t1"])?;
        let xst2 = j.marginalize(&["x2", "s", "t2"])?;
        let i_cover = [
            j.conditional_mutual_information(&["t1"], &["y"], &["t"])?,
            j.conditional_mutual_information(&["t2"], &["y"], &["t"])?,
        ];
        let i_pack = [
            j.conditional_mutual_information(&["t1"], &["x1", "s"], &["t"])?,
            j.conditional_mutual_information(&["t2"], &["x2", "s"], &["t"])?,
        ];
        Ok(Round2Session {
            spec: spec.clone(),
            scheme: scheme.clone(),
            joint: j,
            p_t_marg: [p1, p2],
            joint_tyt: [tyt1, tyt2],
            joint_xst: [xst1, xst2],
            i_cover,
            i_pack,
        })
    }

    pub fn draw_state(&self, n: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
        let ps = self.spec.state_pmf.probs();
        let s: Vec<usize> = (0..n).map(|_| sample_idx(rng, ps)).collect();
        let t = s.iter().map(|&si| sample_idx(rng, self.spec.degrade_kernel.row(si))).collect();
        (s, t)
    }

    /// One (x1, x2) draw per symbol from the input law.
    pub fn draw_inputs(&self, s_seq: &[usize], rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
        let nx2 = self.spec.x2.len();
        let mut x1 = Vec::with_capacity(s_seq.len());
        let mut x2 = Vec::with_capacity(s_seq.len());
        for &si in s_seq {
            let c = sample_idx(rng, self.scheme.input_law.row(si));
            x1.push(c / nx2);
            x2.push(c % nx2);
        }
        (x1, x2)
    }
}

const CODEBOOK_CELL_LIMIT: u64 = 1 << 26;

/// Two double-binned codebooks, words i.i.d. from each T_i marginal, bins
/// and sub-bins assigned independently and uniformly.
pub fn generate_t_codebooks(
    session: &Round2Session,
    cfg: &Round2Config,
    rng: &mut ChaCha12Rng,
) -> Result<(DoubleBinnedCodebook, DoubleBinnedCodebook), ProtocolError> {
    let m_t = cfg.m_t();
    let needed = 2 * (m_t as u64) * cfg.n as u64;
    if needed > CODEBOOK_CELL_LIMIT {
        return Err(ProtocolError::SizeOverflow { needed, limit: CODEBOOK_CELL_LIMIT });
    }
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        let marg = &session.p_t_marg[i];
        let t_words: Vec<Vec<usize>> = (0..m_t)
            .map(|_| (0..cfg.n).map(|_| sample_idx(rng, marg)).collect())
            .collect();
        let bin_of: Vec<usize> = (0..m_t).map(|_| rng.gen_range(0..cfg.n_bins())).collect();
        let subbin_of: Vec<usize> =
            (0..m_t).map(|_| rng.gen_range(0..cfg.n_subbins())).collect();
        out.push(DoubleBinnedCodebook {
            t_words,
            bin_of,
            subbin_of,
            n_bins: cfg.n_bins(),
            n_subbins: cfg.n_subbins(),
        });
    }
    let cb2 = out.pop().unwrap();
    let cb1 = out.pop().unwrap();
    Ok((cb1, cb2))
}

#[derive(Debug, Clone, Copy)]
pub struct KeyGenResult {
    pub m_t: usize,
    /// Public message: the bin index of the chosen word.
    pub psi: usize,
    /// Private key: the sub-bin index.
    pub k: usize,
    /// False when no typical candidate existed and word 0 was used.
    pub found: bool,
}

/// Word indices jointly typical with `(y^n, t^n)` for transmitter `i`.
pub fn receiver_candidates(
    session: &Round2Session,
    i: usize,
    codebook: &DoubleBinnedCodebook,
    y_seq: &[usize],
    t_seq: &[usize],
    eps: f64,
) -> Vec<usize> {
    codebook
        .t_words
        .iter()
        .enumerate()
        .filter(|(_, w)| strongly_typical(&session.joint_tyt[i], &[w, y_seq, t_seq], eps))
        .map(|(m, _)| m)
        .collect()
}

/// Receiver-side key generation for transmitter `i`: a jointly typical
/// description word (uniform among candidates, or lowest index in exact
/// mode), public message its bin, key its sub-bin; word 0 on an empty
/// candidate set.
pub fn receiver_key_gen(
    session: &Round2Session,
    i: usize,
    codebook: &DoubleBinnedCodebook,
    y_seq: &[usize],
    t_seq: &[usize],
    eps: f64,
    tie_break: TieBreak,
    rng: &mut ChaCha12Rng,
) -> KeyGenResult {
    let cands = receiver_candidates(session, i, codebook, y_seq, t_seq, eps);
    let (m, found) = if cands.is_empty() {
        (0, false)
    } else {
        let m = match tie_break {
            TieBreak::LowestIndex => cands[0],
            TieBreak::Random => cands[rng.gen_range(0..cands.len())],
        };
        (m, true)
    };
    KeyGenResult { m_t: m, psi: codebook.bin_of[m], k: codebook.subbin_of[m], found }
}

/// Transmitter-side reconstruction: the unique word in the announced bin
/// jointly typical with `(x_i^n, s^n)`. Zero or multiple candidates are
/// error events; a deterministic guess (first in bin, or lowest candidate)
/// is still produced so downstream metrics stay total.
pub fn transmitter_reconstruct(
    session: &Round2Session,
    i: usize,
    codebook: &DoubleBinnedCodebook,
    x_seq: &[usize],
    s_seq: &[usize],
    psi: usize,
    eps: f64,
) -> (usize, bool) {
    let members = codebook.bin_members(psi);
    let cands: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&m| {
            strongly_typical(&session.joint_xst[i], &[x_seq, s_seq, &codebook.t_words[m]], eps)
        })
        .collect();
    match cands.len() {
        1 => (codebook.subbin_of[cands[0]], true),
        0 => (codebook.subbin_of[members[0]], false),
        _ => (codebook.subbin_of[cands[0]], false),
    }
}

/// Per-position option lists (symbol, probability); iterates the product
/// space with an odometer, yielding each sequence with its probability.
struct OptEnum {
    options: Vec<Vec<(usize, f64)>>,
    counter: Vec<usize>,
    done: bool,
}

impl OptEnum {
    fn new(options: Vec<Vec<(usize, f64)>>) -> OptEnum {
        let done = options.iter().any(|o| o.is_empty());
        let counter = vec![0; options.len()];
        OptEnum { options, counter, done }
    }

}

impl Iterator for OptEnum {
    type Item = (Vec<usize>, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut seq = Vec::with_capacity(self.options.len());
        let mut p = 1.0;
        for (i, &c) in self.counter.iter().enumerate() {
            let (sym, prob) = self.options[i][c];
            seq.push(sym);
            p *= prob;
        }
        let mut i = 0;
        loop {
            if i == self.options.len() {
                self.done = true;
                break;
            }
            self.counter[i] += 1;
            if self.counter[i] < self.options[i].len() {
                break;
            }
            self.counter[i] = 0;
            i += 1;
        }
        Some((seq, p))
    }
}

fn support_options(probs: &[f64]) -> Vec<(usize, f64)> {
    probs.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, &p)| (i, p)).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactRound2Metrics {
    pub p_err: [f64; 2],
    /// `I(K_i; Z^n, psi_1, psi_2) / n`.
    pub leak_eve: [f64; 2],
    /// `I(K_i; X_{i^c}^n, K_{i^c}, S^n, psi_1, psi_2) / n`.
    pub leak_cross: [f64; 2],
    pub key_entropy: [f64; 2],
}

struct EnumContext<'a> {
    session: &'a Round2Session,
    cfg: &'a Round2Config,
    /// Per channel-kernel row: p(z | x1, x2, s, y) as [y * |Z| + z].
    z_given_all: Vec<Vec<f64>>,
    /// Per channel-kernel row: p(y | x1, x2, s).
    y_given_xxs: Vec<Vec<f64>>,
}

fn enum_context<'a>(session: &'a Round2Session, cfg: &'a Round2Config) -> EnumContext<'a> {
    let spec = &session.spec;
    let (ny, nz) = (spec.y.len(), spec.z.len());
    let rows = spec.channel_kernel.given_len();
    let mut z_given_all = Vec::with_capacity(rows);
    let mut y_given_xxs = Vec::with_capacity(rows);
    for g in 0..rows {
        let row = spec.channel_kernel.row(g);
        let mut py = vec![0.0; ny];
        for yi in 0..ny {
            for zi in 0..nz {
                py[yi] += row[yi * nz + zi];
            }
        }
        let mut zc = vec![0.0; ny * nz];
        for yi in 0..ny {
            for zi in 0..nz {
                zc[yi * nz + zi] = if py[yi] > 0.0 { row[yi * nz + zi] / py[yi] } else { 0.0 };
            }
        }
        z_given_all.push(zc);
        y_given_xxs.push(py);
    }
    EnumContext { session, cfg, z_given_all, y_given_xxs }
}

/// Visits every positive-probability realization of
/// `(s^n, x1^n, x2^n, y^n, t^n)` with the deterministic (lowest-index)
/// protocol outcome, calling `f(prob, realization, outcome)`.
struct Realization<'a> {
    s: &'a [usize],
    x1: &'a [usize],
    x2: &'a [usize],
    y: &'a [usize],
    /// Channel-kernel row per position.
    xs_rows: &'a [usize],
    keys: [KeyGenResult; 2],
    k_hat: [usize; 2],
}

fn enumerate_protocol(
    ctx: &EnumContext,
    codebooks: (&DoubleBinnedCodebook, &DoubleBinnedCodebook),
    mut f: impl FnMut(f64, &Realization),
) -> Result<(), ProtocolError> {
    let session = ctx.session;
    let cfg = ctx.cfg;
    let spec = &session.spec;
    let n = cfg.n;
    let (nx2, ns) = (spec.x2.len(), spec.s.len());
    let mut rng = ChaCha12Rng::seed_from_u64(0); // unused under LowestIndex

    // budget: worst-case product of per-stage support sizes
    let s_opts = support_options(spec.state_pmf.probs());
    let max_x = (0..ns)
        .map(|s| support_options(session.scheme.input_law.row(s)).len())
        .max()
        .unwrap_or(1) as u64;
    let max_t = (0..ns)
        .map(|s| support_options(spec.degrade_kernel.row(s)).len())
        .max()
        .unwrap_or(1) as u64;
    let needed = (s_opts.len() as u64)
        .pow(n as u32)
        .saturating_mul(max_x.pow(n as u32))
        .saturating_mul((spec.y.len() as u64).saturating_mul(max_t).pow(n as u32));
    if needed > cfg.enum_budget {
        return Err(ProtocolError::BudgetExceeded { needed, budget: cfg.enum_budget });
    }

    for (s_seq, ps) in OptEnum::new(vec![s_opts.clone(); n]) {
        let x_opts: Vec<Vec<(usize, f64)>> = s_seq
            .iter()
            .map(|&si| support_options(session.scheme.input_law.row(si)))
            .collect();
        for (x_pair, px) in OptEnum::new(x_opts) {
            let x1: Vec<usize> = x_pair.iter().map(|&c| c / nx2).collect();
            let x2: Vec<usize> = x_pair.iter().map(|&c| c % nx2).collect();
            let xs_rows: Vec<usize> =
                (0..n).map(|i| (x1[i] * nx2 + x2[i]) * ns + s_seq[i]).collect();
            let yt_opts: Vec<Vec<(usize, f64)>> = (0..n)
                .map(|i| {
                    let mut opts = Vec::new();
                    for (ti, pt) in support_options(spec.degrade_kernel.row(s_seq[i])) {
                        for (yi, py) in support_options(&ctx.y_given_xxs[xs_rows[i]]) {
                            opts.push((yi * spec.t.len() + ti, py * pt));
                        }
                    }
                    opts
                })
                .collect();
            for (yt_seq, pyt) in OptEnum::new(yt_opts) {
                let y: Vec<usize> = yt_seq.iter().map(|&c| c / spec.t.len()).collect();
                let t: Vec<usize> = yt_seq.iter().map(|&c| c % spec.t.len()).collect();
                let keys = [
                    receiver_key_gen(
                        session,
                        0,
                        codebooks.0,
                        &y,
                        &t,
                        cfg.typicality_eps,
                        TieBreak::LowestIndex,
                        &mut rng,
                    ),
                    receiver_key_gen(
                        session,
                        1,
                        codebooks.1,
                        &y,
                        &t,
                        cfg.typicality_eps,
                        TieBreak::LowestIndex,
                        &mut rng,
                    ),
                ];
                let (k1_hat, _ok1) = transmitter_reconstruct(
                    session,
                    0,
                    codebooks.0,
                    &x1,
                    &s_seq,
                    keys[0].psi,
                    cfg.typicality_eps,
                );
                let (k2_hat, _ok2) = transmitter_reconstruct(
                    session,
                    1,
                    codebooks.1,
                    &x2,
                    &s_seq,
                    keys[1].psi,
                    cfg.typicality_eps,
                );
                f(
                    ps * px * pyt,
                    &Realization {
                        s: &s_seq,
                        x1: &x1,
                        x2: &x2,
                        y: &y,
                        xs_rows: &xs_rows,
                        keys,
                        k_hat: [k1_hat, k2_hat],
                    },
                );
            }
        }
    }
    Ok(())
}

fn seq_index(seq: &[usize], base: usize) -> usize {
    seq.iter().fold(0, |acc, &s| acc * base + s)
}

fn mi_of_table(rows: usize, cols: usize, table: &[f64]) -> f64 {
    let mut row_sums = vec![0.0; rows];
    let mut col_sums = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            let p = table[r * cols + c];
            row_sums[r] += p;
            col_sums[c] += p;
        }
    }
    let mut mi = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let p = table[r * cols + c];
            if p > 0.0 {
                mi += p * (p / (row_sums[r] * col_sums[c])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Exact Definition-level metrics for one fixed codebook pair, with
/// lowest-index tie-breaks throughout.
pub fn exact_round2_metrics(
    session: &Round2Session,
    codebooks: (&DoubleBinnedCodebook, &DoubleBinnedCodebook),
    cfg: &Round2Config,
) -> Result<ExactRound2Metrics, ProtocolError> {
    let ctx = enum_context(session, cfg);
    let spec = &session.spec;
    let n = cfg.n as u32;
    let nz = spec.z.len();
    let zn = (nz as u64).checked_pow(n).unwrap_or(u64::MAX);
    let (nk, nb) = (cfg.n_subbins(), cfg.n_bins());
    let psi_cells = nb * nb;
    if zn.saturating_mul((nk * psi_cells) as u64) > cfg.enum_budget {
        return Err(ProtocolError::BudgetExceeded {
            needed: zn.saturating_mul((nk * psi_cells) as u64),
            budget: cfg.enum_budget,
        });
    }
    let sn = spec.s.len().pow(n);
    let x1n = spec.x1.len().pow(n);
    let x2n = spec.x2.len().pow(n);
    let cross_cols = [x2n * sn * nk * psi_cells, x1n * sn * nk * psi_cells];
    for &c in &cross_cols {
        if (nk * c) as u64 > cfg.enum_budget {
            return Err(ProtocolError::BudgetExceeded {
                needed: (nk * c) as u64,
                budget: cfg.enum_budget,
            });
        }
    }

    let mut eve = [
        vec![0.0; nk * psi_cells * zn as usize],
        vec![0.0; nk * psi_cells * zn as usize],
    ];
    let mut cross = [vec![0.0; nk * cross_cols[0]], vec![0.0; nk * cross_cols[1]]];
    let mut p_key = [vec![0.0; nk], vec![0.0; nk]];
    let mut p_err = [0.0; 2];

    enumerate_protocol(&ctx, codebooks, |p, r| {
        let psi_idx = r.keys[0].psi * nb + r.keys[1].psi;
        // eavesdropper observation: z-sequence outer product
        let mut zvec = vec![p];
        for i in 0..cfg.n {
            let zc = &ctx.z_given_all[r.xs_rows[i]];
            let mut next = Vec::with_capacity(zvec.len() * nz);
            for &acc in &zvec {
                for zi in 0..nz {
                    next.push(acc * zc[r.y[i] * nz + zi]);
                }
            }
            zvec = next;
        }
        for i in 0..2 {
            let k = r.keys[i].k;
            p_key[i][k] += p;
            if r.k_hat[i] != k {
                p_err[i] += p;
            }
            let row = (k * psi_cells + psi_idx) * zn as usize;
            for (zi, pz) in zvec.iter().enumerate() {
                eve[i][row + zi] += pz;
            }
        }
        let s_idx = seq_index(r.s, session.spec.s.len());
        let x2_idx = seq_index(r.x2, session.spec.x2.len());
        let x1_idx = seq_index(r.x1, session.spec.x1.len());
        let cell1 = ((x2_idx * sn + s_idx) * nk + r.keys[1].k) * psi_cells + psi_idx;
        let cell2 = ((x1_idx * sn + s_idx) * nk + r.keys[0].k) * psi_cells + psi_idx;
        cross[0][r.keys[0].k * cross_cols[0] + cell1] += p;
        cross[1][r.keys[1].k * cross_cols[1] + cell2] += p;
    })?;

    let nf = cfg.n as f64;
    Ok(ExactRound2Metrics {
        p_err,
        leak_eve: [
            mi_of_table(nk, psi_cells * zn as usize, &eve[0]) / nf,
            mi_of_table(nk, psi_cells * zn as usize, &eve[1]) / nf,
        ],
        leak_cross: [
            mi_of_table(nk, cross_cols[0], &cross[0]) / nf,
            mi_of_table(nk, cross_cols[1], &cross[1]) / nf,
        ],
        key_entropy: [
            crate::prob::entropy_of(&p_key[0]),
            crate::prob::entropy_of(&p_key[1]),
        ],
    })
}

/// Independent second enumeration path for the two leakage families:
/// z-sequences are enumerated explicitly (no outer-product accumulation),
/// the joint tables are collected sparsely in ordered maps, and the mutual
/// informations are evaluated through the generic pmf machinery.
pub fn exact_round2_leakage_alt(
    session: &Round2Session,
    codebooks: (&DoubleBinnedCodebook, &DoubleBinnedCodebook),
    cfg: &Round2Config,
) -> Result<([f64; 2], [f64; 2]), ProtocolError> {
    use std::collections::BTreeMap;
    let ctx = enum_context(session, cfg);
    let spec = &session.spec;
    let nz = spec.z.len();
    let zn = (nz as u64).checked_pow(cfg.n as u32, ).unwrap_or(u64::MAX);
    if zn > cfg.enum_budget {
        return Err(ProtocolError::BudgetExceeded { needed: zn, budget: cfg.enum_budget });
    }

    // key -> (observation cell -> prob), observation encoded as u64
    let mut eve: [BTreeMap<(usize, u64), f64>; 2] = [BTreeMap::new(), BTreeMap::new()];
    let mut cross: [BTreeMap<(usize, u64), f64>; 2] = [BTreeMap::new(), BTreeMap::new()];
    let nb = cfg.n_bins() as u64;
    let z_all: Vec<usize> = (0..nz).collect();

    enumerate_protocol(&ctx, codebooks, |p, r| {
        let psi_idx = r.keys[0].psi as u64 * nb + r.keys[1].psi as u64;
        for (z_seq, _unit) in OptEnum::new(vec![
            z_all.iter().map(|&z| (z, 1.0)).collect::<Vec<_>>();
            cfg.n
        ]) {
            let mut pz = 1.0;
            let mut zi = 0u64;
            for i in 0..cfg.n {
                pz *= ctx.z_given_all[r.xs_rows[i]][r.y[i] * nz + z_seq[i]];
                zi = zi * nz as u64 + z_seq[i] as u64;
            }
            if pz == 0.0 {
                continue;
            }
            for i in 0..2 {
                let cell = zi * nb * nb + psi_idx;
                *eve[i].entry((r.keys[i].k, cell)).or_insert(0.0) += p * pz;
            }
        }
        let s_idx = seq_index(r.s, spec.s.len()) as u64;
        let sn = (spec.s.len() as u64).pow(cfg.n as u32);
        let x2_idx = seq_index(r.x2, spec.x2.len()) as u64;
        let x1_idx = seq_index(r.x1, spec.x1.len()) as u64;
        let nk = cfg.n_subbins() as u64;
        let cell1 = ((x2_idx * sn + s_idx) * nk + r.keys[1].k as u64) * nb * nb + psi_idx;
        let cell2 = ((x1_idx * sn + s_idx) * nk + r.keys[0].k as u64) * nb * nb + psi_idx;
        *cross[0].entry((r.keys[0].k, cell1)).or_insert(0.0) += p;
        *cross[1].entry((r.keys[1].k, cell2)).or_insert(0.0) += p;
    })?;

    let mi_sparse = |map: &BTreeMap<(usize, u64), f64>| -> f64 {
        let mut cells: BTreeMap<u64, usize> = BTreeMap::new();
        for &(_, c) in map.keys() {
            let next = cells.len();
            cells.entry(c).or_insert(next);
        }
        if cells.is_empty() {
            return 0.0;
        }
        let nk = cfg.n_subbins();
        let mut probs = vec![0.0; nk * cells.len()];
        for (&(k, c), &p) in map {
            probs[k * cells.len() + cells[&c]] += p;
        }
        let key_alpha =
            crate::prob::Alphabet::new("k", (0..nk).map(|i| i.to_string())).unwrap();
        let obs_alpha = crate::prob::Alphabet::new(
            "obs",
            (0..cells.len()).map(|i| i.to_string()),
        )
        .unwrap();
        let joint = JointPmf::new(
            vec![
                crate::prob::Var::new("k", key_alpha),
                crate::prob::Var::new("obs", obs_alpha),
            ],
            probs,
        )
        .unwrap();
        joint.mutual_information(&["k"], &["obs"]).unwrap() / cfg.n as f64
    };
    Ok((
        [mi_sparse(&eve[0]), mi_sparse(&eve[1])],
        [mi_sparse(&cross[0]), mi_sparse(&cross[1])],
    ))
}

/// Seeded Monte Carlo estimate of the round-2 reliability metrics.
pub fn monte_carlo_round2(
    session: &Round2Session,
    cfg: &Round2Config,
    trials: u64,
) -> Result<SimulationReport, ProtocolError> {
    if trials == 0 {
        return Err(ProtocolError::NoTrials);
    }
    let mut agree = [0u64; 2];
    let mut found = [0u64; 2];
    let mut ok_flags = [0u64; 2];
    let mut key_hist = [vec![0u64; cfg.n_subbins()], vec![0u64; cfg.n_subbins()]];
    let mut codebooks = None;
    for trial in 0..trials {
        let batch = trial / cfg.batch_size as u64;
        if trial % cfg.batch_size as u64 == 0 {
            let mut crng = ChaCha12Rng::seed_from_u64(crate::bounds::derive_seed(
                cfg.seed ^ 0x2b1d,
                batch,
            ));
            codebooks = Some(generate_t_codebooks(session, cfg, &mut crng)?);
        }
        let (cb1, cb2) = codebooks.as_ref().unwrap();
        let mut rng =
            ChaCha12Rng::seed_from_u64(crate::bounds::derive_seed(cfg.seed, trial));
        let (s_seq, t_seq) = session.draw_state(cfg.n, &mut rng);
        let (x1, x2) = session.draw_inputs(&s_seq, &mut rng);
        let (y, _z) =
            crate::round1::channel_transmit(&session.spec, &x1, &x2, &s_seq, &mut rng);
        for (i, (cb, x)) in [(cb1, &x1), (cb2, &x2)].into_iter().enumerate() {
            let key = receiver_key_gen(
                session,
                i,
                cb,
                &y,
                &t_seq,
                cfg.typicality_eps,
                cfg.tie_break,
                &mut rng,
            );
            let (k_hat, ok) = transmitter_reconstruct(
                session,
                i,
                cb,
                x,
                &s_seq,
                key.psi,
                cfg.typicality_eps,
            );
            if k_hat == key.k {
                agree[i] += 1;
            }
            if key.found {
                found[i] += 1;
            }
            if ok {
                ok_flags[i] += 1;
            }
            key_hist[i][key.k] += 1;
        }
    }

    let mut report = SimulationReport::new(cfg.seed);
    report.config_entry("task", "sim-round2");
    report.config_entry("n", cfg.n);
    report.config_entry("rate_t", cfg.rate_t);
    report.config_entry("rate_bins", cfg.rate_bins);
    report.config_entry("rate_subbins", cfg.rate_subbins);
    report.config_entry("eps", cfg.typicality_eps);
    report.config_entry("trials", trials);
    for i in 0..2 {
        let errs = trials - agree[i];
        report.estimated(
            &format!("p_err_{}", i + 1),
            errs as f64 / trials as f64,
            Some(wilson_interval(errs, trials, 1.96)),
        );
        report.estimated(
            &format!("agree_{}", i + 1),
            agree[i] as f64 / trials as f64,
            Some(wilson_interval(agree[i], trials, 1.96)),
        );
        report.estimated(&format!("covered_{}", i + 1), found[i] as f64 / trials as f64, None);
        report.estimated(
            &format!("unique_reconstruction_{}", i + 1),
            ok_flags[i] as f64 / trials as f64,
            None,
        );
        let hist: Vec<f64> =
            key_hist[i].iter().map(|&c| c as f64 / trials as f64).collect();
        report.estimated(&format!("key_entropy_{}", i + 1), crate::prob::entropy_of(&hist), None);
    }
    Ok(report)
}
