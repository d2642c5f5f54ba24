//! Single-letter secret-key bounds: the common-key lower and upper bounds,
//! the degraded-case capacity, the private-key inner and outer regions, the
//! independent-transmitters special case, and the closed forms for the two
//! worked channel examples.

use crate::channel::{AuxiliaryScheme, ChannelError, FullJoint, Round2Scheme, SdMacSpec};
use crate::prob::{
    binary_convolution, binary_entropy, sample_simplex, Alphabet, ConditionalPmf, JointPmf,
    ProbError, Var,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("degradedness hypothesis violated: I(U,V;Z|Y) = {0:.3e}")]
    NotDegraded(f64),
    #[error("independence chain violated: I(X1,T1;X2,T2|S,T) = {0:.3e}, I(X1,T1,S,T;Z|X2,T2) = {1:.3e}")]
    ChainViolated(f64, f64),
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
}

/// One reported inequality `lhs <= rhs` with its measured sides.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

impl Constraint {
    fn check(name: &str, lhs: f64, rhs: f64, tol: f64) -> Constraint {
        Constraint { name: name.to_string(), lhs, rhs, satisfied: lhs <= rhs + tol }
    }
}

/// The scheme that attains a reported rate point.
#[derive(Debug, Clone)]
pub enum AchievingScheme {
    Aux(AuxiliaryScheme),
    Round2(Round2Scheme),
    /// `p(x1,x2|s)` for the upper bound, which searches input laws only.
    InputLaw(ConditionalPmf),
}

/// An evaluated rate point. Reported rates are clamped at zero; the raw
/// signed objective is kept alongside for diagnostics.
#[derive(Debug, Clone)]
pub struct RatePoint {
    pub r0: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub raw_r0: Option<f64>,
    pub raw_r1: Option<f64>,
    pub raw_r2: Option<f64>,
    pub constraints: Vec<Constraint>,
    pub feasible: bool,
    pub scheme: Option<AchievingScheme>,
}

impl RatePoint {
    fn empty() -> RatePoint {
        RatePoint {
            r0: None,
            r1: None,
            r2: None,
            raw_r0: None,
            raw_r1: None,
            raw_r2: None,
            constraints: Vec::new(),
            feasible: true,
            scheme: None,
        }
    }
}

/// Search budget and determinism knobs for the numerical optimizers.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Cardinality cap for U; `None` means `|S| + 1`.
    pub cap_u: Option<usize>,
    /// Cardinality cap for V; `None` means `|S| + 2`.
    pub cap_v: Option<usize>,
    pub restarts: usize,
    /// Full coordinate sweeps per step size.
    pub sweeps: usize,
    /// Shrinking step schedule for moves toward simplex vertices.
    pub steps: Vec<f64>,
    pub seed: u64,
    /// Constraint slack tolerance.
    pub tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            cap_u: None,
            cap_v: None,
            restarts: 24,
            sweeps: 2,
            // step 1.0 is a full vertex jump, so deterministic kernels are
            // reachable exactly; the trailing pass re-snaps after the fine steps
            steps: vec![1.0, 0.5, 0.25, 0.1, 0.05, 1.0],
            seed: 0,
            tol: 1e-9,
        }
    }
}

/// Independent per-task seed stream derived from a master seed
/// (splitmix64 over the pair).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Common-key lower-bound objective for one auxiliary scheme:
/// `r0 = [I(V;Y,T|U) - I(V;Z|U)]^+` with the auxiliary-rate and
/// conferencing constraints reported. `proof_consistent` flips the two
/// auxiliary constraints to the covering/packing direction.
pub fn common_key_lb_objective(
    spec: &SdMacSpec,
    aux: &AuxiliaryScheme,
    r_c: f64,
    proof_consistent: bool,
) -> Result<RatePoint, BoundError> {
    let fj = FullJoint::round1(spec, aux)?;
    let j = fj.joint();
    let i_vyt_u = j.conditional_mutual_information(&["v"], &["y", "t"], &["u"])?;
    let i_vz_u = j.conditional_mutual_information(&["v"], &["z"], &["u"])?;
    let i_uy_t = j.conditional_mutual_information(&["u"], &["y"], &["t"])?;
    let i_us = j.mutual_information(&["u"], &["s"])?;
    let i_vs_u = j.conditional_mutual_information(&["v"], &["s"], &["u"])?;
    let h_uv_s = j.entropy(&["u", "v", "s"])? - j.entropy(&["s"])?;
    let tol = 1e-9;
    let constraints = if proof_consistent {
        vec![
            Constraint::check("u_rate", i_us, i_uy_t, tol),
            Constraint::check("v_rate", i_vs_u, i_vyt_u, tol),
            Constraint::check("conference", h_uv_s, r_c, tol),
        ]
    } else {
        vec![
            Constraint::check("u_rate", i_uy_t, i_us, tol),
            Constraint::check("v_rate", i_vyt_u, i_vs_u, tol),
            Constraint::check("conference", h_uv_s, r_c, tol),
        ]
    };
    let raw = i_vyt_u - i_vz_u;
    let feasible = constraints.iter().all(|c| c.satisfied);
    Ok(RatePoint {
        r0: Some(raw.max(0.0)),
        raw_r0: Some(raw),
        constraints,
        feasible,
        scheme: Some(AchievingScheme::Aux(aux.clone())),
        ..RatePoint::empty()
    })
}

/// Row-major kernel tables for one candidate auxiliary scheme; the search
/// state the optimizer mutates.
#[derive(Clone)]
struct AuxParams {
    u_rows: Vec<Vec<f64>>,
    v_rows: Vec<Vec<f64>>,
    x1_rows: Vec<Vec<f64>>,
    x2_rows: Vec<Vec<f64>>,
}

impl AuxParams {
    fn degenerate(spec: &SdMacSpec, nu: usize, nv: usize) -> AuxParams {
        let point = |k: usize| {
            let mut row = vec![0.0; k];
            row[0] = 1.0;
            row
        };
        let ns = spec.s.len();
        AuxParams {
            u_rows: vec![point(nu); ns],
            v_rows: vec![point(nv); nu * ns],
            x1_rows: vec![point(spec.x1.len()); nu * nv * ns],
            x2_rows: vec![point(spec.x2.len()); nu * nv * ns],
        }
    }

    fn uniform(spec: &SdMacSpec, nu: usize, nv: usize) -> AuxParams {
        let ns = spec.s.len();
        let flat = |rows: usize, k: usize| vec![vec![1.0 / k as f64; k]; rows];
        AuxParams {
            u_rows: flat(ns, nu),
            v_rows: flat(nu * ns, nv),
            x1_rows: flat(nu * nv * ns, spec.x1.len()),
            x2_rows: flat(nu * nv * ns, spec.x2.len()),
        }
    }

    fn random(rng: &mut ChaCha12Rng, spec: &SdMacSpec, nu: usize, nv: usize) -> AuxParams {
        let ns = spec.s.len();
        let draw = |rng: &mut ChaCha12Rng, rows: usize, k: usize| {
            (0..rows).map(|_| sample_simplex(rng, k)).collect::<Vec<_>>()
        };
        AuxParams {
            u_rows: draw(rng, ns, nu),
            v_rows: draw(rng, nu * ns, nv),
            x1_rows: draw(rng, nu * nv * ns, spec.x1.len()),
            x2_rows: draw(rng, nu * nv * ns, spec.x2.len()),
        }
    }

    fn build(&self, spec: &SdMacSpec, u: &Alphabet, v: &Alphabet) -> AuxiliaryScheme {
        let uv = Var::new("u", u.clone());
        let vv = Var::new("v", v.clone());
        let flat = |rows: &[Vec<f64>]| rows.concat();
        let u_kernel =
            ConditionalPmf::new(vec![spec.s_var()], vec![uv.clone()], flat(&self.u_rows)).unwrap();
        let v_kernel = ConditionalPmf::new(
            vec![uv.clone(), spec.s_var()],
            vec![vv.clone()],
            flat(&self.v_rows),
        )
        .unwrap();
        let x1_kernel = ConditionalPmf::new(
            vec![uv.clone(), vv.clone(), spec.s_var()],
            vec![spec.x1_var()],
            flat(&self.x1_rows),
        )
        .unwrap();
        let x2_kernel = ConditionalPmf::new(
            vec![uv.clone(), vv.clone(), spec.s_var()],
            vec![spec.x2_var()],
            flat(&self.x2_rows),
        )
        .unwrap();
        AuxiliaryScheme::new(spec, u.clone(), v.clone(), u_kernel, v_kernel, x1_kernel, x2_kernel)
            .unwrap()
    }

    /// Stable text key used only to break exact value ties deterministically.
    fn tie_key(&self) -> String {
        let mut s = String::new();
        for rows in [&self.u_rows, &self.v_rows, &self.x1_rows, &self.x2_rows] {
            for row in rows.iter() {
                for p in row {
                    s.push_str(&format!("{p:.17e},"));
                }
            }
        }
        s
    }
}

fn kernels_of(p: &mut AuxParams) -> [&mut Vec<Vec<f64>>; 4] {
    [&mut p.u_rows, &mut p.v_rows, &mut p.x1_rows, &mut p.x2_rows]
}

fn moved_row(row: &[f64], j: usize, step: f64) -> Vec<f64> {
    let mut out: Vec<f64> = row.iter().map(|p| p * (1.0 - step)).collect();
    out[j] += step;
    out
}

struct Best {
    raw: f64,
    tie: String,
    point: RatePoint,
}

/// Coordinate refinement shared by the lower-bound and upper-bound searches:
/// pushes each kernel row toward each vertex with a shrinking step, keeping
/// feasible improvements.
fn refine<P, E>(params: &mut P, best: &mut Best, cfg: &SearchConfig, eval: &E, coords: &dyn Fn(&mut P) -> Vec<&mut Vec<Vec<f64>>>)
where
    P: Clone,
    E: Fn(&P) -> Option<(f64, String, RatePoint)>,
{
    for &step in &cfg.steps {
        for _ in 0..cfg.sweeps {
            let mut improved = false;
            let n_kernels = coords(params).len();
            for k in 0..n_kernels {
                let (n_rows, n_targets) = {
                    let ks = coords(params);
                    let rows = &ks[k];
                    (rows.len(), rows.first().map_or(0, |r| r.len()))
                };
                for r in 0..n_rows {
                    if n_targets < 2 {
                        continue;
                    }
                    for j in 0..n_targets {
                        let mut cand = params.clone();
                        {
                            let mut ks = coords(&mut cand);
                            let row = moved_row(&ks[k][r], j, step);
                            ks[k][r] = row;
                        }
                        if let Some((raw, tie, point)) = eval(&cand) {
                            if raw > best.raw + 1e-12 {
                                *params = cand;
                                *best = Best { raw, tie, point };
                                improved = true;
                            }
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
}

/// Random-restart search for the best feasible common-key lower bound over
/// auxiliary schemes within the configured cardinality caps. Deterministic
/// for a fixed seed regardless of how restarts are scheduled.
pub fn optimize_common_key_lb(
    spec: &SdMacSpec,
    r_c: f64,
    cfg: &SearchConfig,
    proof_consistent: bool,
) -> Result<RatePoint, BoundError> {
    let nu = cfg.cap_u.unwrap_or(spec.s.len() + 1).max(1);
    let nv = cfg.cap_v.unwrap_or(spec.s.len() + 2).max(1);
    let u_alpha = numbered_alphabet("u", nu);
    let v_alpha = numbered_alphabet("v", nv);

    let eval = |p: &AuxParams| -> Option<(f64, String, RatePoint)> {
        let aux = p.build(spec, &u_alpha, &v_alpha);
        let point = common_key_lb_objective(spec, &aux, r_c, proof_consistent).ok()?;
        if !point.feasible {
            return None; // infeasible points are discarded, not penalized
        }
        Some((point.raw_r0.unwrap(), p.tie_key(), point))
    };

    let results: Vec<Option<Best>> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|restart| {
            let mut rng =
                ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, restart as u64));
            // restart 0 starts from the always-feasible degenerate scheme,
            // restart 1 from the fully uniform one
            let mut params = match restart {
                0 => AuxParams::degenerate(spec, nu, nv),
                1 => AuxParams::uniform(spec, nu, nv),
                _ => AuxParams::random(&mut rng, spec, nu, nv),
            };
            let mut best = match eval(&params) {
                Some((raw, tie, point)) => Best { raw, tie, point },
                None => Best {
                    raw: f64::NEG_INFINITY,
                    tie: String::new(),
                    point: RatePoint::empty(),
                },
            };
            refine(&mut params, &mut best, cfg, &eval, &|p| {
                kernels_of(p).into_iter().collect()
            });
            if best.raw.is_finite() {
                Some(best)
            } else {
                None
            }
        })
        .collect();

    let winner = results.into_iter().flatten().reduce(|a, b| {
        if b.raw > a.raw || (b.raw == a.raw && b.tie < a.tie) {
            b
        } else {
            a
        }
    });
    match winner {
        Some(best) => Ok(best.point),
        None => {
            // no feasible scheme found anywhere in the search
            let mut point = RatePoint::empty();
            point.r0 = Some(0.0);
            point.raw_r0 = Some(0.0);
            point.feasible = false;
            Ok(point)
        }
    }
}

fn numbered_alphabet(name: &str, k: usize) -> Alphabet {
    Alphabet::new(name, (0..k).map(|i| i.to_string())).unwrap()
}

fn ub_objective(spec: &SdMacSpec, input_law: &ConditionalPmf) -> Result<f64, BoundError> {
    let j = spec
        .state_pmf
        .compose(&spec.degrade_kernel)?
        .compose(input_law)?
        .compose(&spec.channel_kernel)?;
    Ok(j.conditional_mutual_information(&["x1", "x2", "s"], &["y", "t"], &["z"])?)
}

/// Common-key upper bound: maximum of `I(X1,X2,S;Y,T|Z)` over input laws
/// `p(x1,x2|s)`, searched like the lower bound. Extra seed laws (e.g. the
/// law induced by a lower-bound scheme) join the restart pool.
pub fn common_key_ub_with_seeds(
    spec: &SdMacSpec,
    cfg: &SearchConfig,
    extra_seeds: &[ConditionalPmf],
) -> Result<RatePoint, BoundError> {
    let given = vec![spec.s_var()];
    let target = vec![spec.x1_var(), spec.x2_var()];
    let nrows = spec.s.len();
    let ncols = spec.x1.len() * spec.x2.len();

    let build = |rows: &Vec<Vec<f64>>| {
        ConditionalPmf::new(given.clone(), target.clone(), rows.concat()).unwrap()
    };
    let eval = |rows: &Vec<Vec<f64>>| -> Option<(f64, String, RatePoint)> {
        let law = build(rows);
        let raw = ub_objective(spec, &law).ok()?;
        let tie: String =
            rows.iter().flatten().map(|p| format!("{p:.17e},")).collect();
        let point = RatePoint {
            r0: Some(raw.max(0.0)),
            raw_r0: Some(raw),
            scheme: Some(AchievingScheme::InputLaw(law)),
            ..RatePoint::empty()
        };
        Some((raw, tie, point))
    };

    let uniform = vec![vec![1.0 / ncols as f64; ncols]; nrows];
    let mut starts: Vec<Vec<Vec<f64>>> = vec![uniform];
    for law in extra_seeds {
        let rows: Vec<Vec<f64>> = (0..law.given_len()).map(|g| law.row(g).to_vec()).collect();
        starts.push(rows);
    }
    let fixed = starts.len();

    let results: Vec<Option<Best>> = (0..fixed + cfg.restarts.max(1))
        .into_par_iter()
        .map(|restart| {
            let mut rng =
                ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed ^ 0x5eed, restart as u64));
            let mut rows = if restart < fixed {
                starts[restart].clone()
            } else {
                (0..nrows).map(|_| sample_simplex(&mut rng, ncols)).collect()
            };
            let mut best = match eval(&rows) {
                Some((raw, tie, point)) => Best { raw, tie, point },
                None => return None,
            };
            refine(&mut rows, &mut best, cfg, &eval, &|p| vec![p]);
            Some(best)
        })
        .collect();

    let winner = results
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.raw > a.raw || (b.raw == a.raw && b.tie < a.tie) { b } else { a })
        .expect("uniform seed always evaluates");
    Ok(winner.point)
}

pub fn common_key_ub(spec: &SdMacSpec, cfg: &SearchConfig) -> Result<RatePoint, BoundError> {
    common_key_ub_with_seeds(spec, cfg, &[])
}

/// The input law `p(x1,x2|s)` induced by an auxiliary scheme; the natural
/// upper-bound seed for the sandwich comparison.
pub fn induced_input_law(
    spec: &SdMacSpec,
    aux: &AuxiliaryScheme,
) -> Result<ConditionalPmf, BoundError> {
    let j = spec
        .state_pmf
        .compose(&aux.u_kernel)?
        .compose(&aux.v_kernel)?
        .compose(&aux.x1_kernel)?
        .compose(&aux.x2_kernel)?
        .marginalize(&["s", "x1", "x2"])?;
    Ok(j.conditional(&["x1", "x2"], &["s"])?)
}

/// Degraded-case capacity: requires `(U,V) -> Y -> Z`; returns
/// `r0 = I(V;Y,T|U,Z)` with the same constraint set as the lower bound.
pub fn degraded_common_key_capacity(
    spec: &SdMacSpec,
    aux: &AuxiliaryScheme,
    r_c: f64,
    proof_consistent: bool,
) -> Result<RatePoint, BoundError> {
    let fj = FullJoint::round1(spec, aux)?;
    let j = fj.joint();
    let leak = j.markov_leakage(&["u", "v"], &["y"], &["z"])?;
    if leak > 1e-9 {
        return Err(BoundError::NotDegraded(leak));
    }
    let mut point = common_key_lb_objective(spec, aux, r_c, proof_consistent)?;
    let raw = j.conditional_mutual_information(&["v"], &["y", "t"], &["u", "z"])?;
    point.raw_r0 = Some(raw);
    point.r0 = Some(raw.max(0.0));
    Ok(point)
}

fn private_point(
    j: &JointPmf,
    scheme: &Round2Scheme,
    inner: bool,
) -> Result<RatePoint, BoundError> {
    let mut rates = [0.0_f64; 2];
    let mut raws = [0.0_f64; 2];
    let mut constraints = Vec::new();
    for i in 0..2 {
        let ti = if i == 0 { "t1" } else { "t2" };
        let xi = if i == 0 { "x1" } else { "x2" };
        let xo = if i == 0 { "x2" } else { "x1" };
        let raw = if inner {
            let i_own = j.conditional_mutual_information(&[ti], &[xi, "s"], &["t"])?;
            let i_other = j.conditional_mutual_information(&[ti], &[xo, "s"], &["t"])?;
            let i_eve = j.mutual_information(&[ti], &["z"])?;
            let i_dec = j.conditional_mutual_information(&[ti], &["y"], &["t"])?;
            constraints.push(Constraint::check(
                &format!("decodability_{}", i + 1),
                i_own,
                i_dec,
                1e-9,
            ));
            (i_own - i_other).min(i_own - i_eve)
        } else {
            let a = j.conditional_mutual_information(&[ti], &[xi, "s"], &["z"])?;
            let b = j.conditional_mutual_information(&[ti], &[xi], &[xo, "s"])?;
            constraints.push(Constraint {
                name: format!("min_terms_{}", i + 1),
                lhs: a.min(b),
                rhs: a.max(b),
                satisfied: true,
            });
            a.min(b)
        };
        raws[i] = raw;
        rates[i] = raw.max(0.0);
    }
    let feasible = constraints.iter().all(|c| c.satisfied);
    Ok(RatePoint {
        r1: Some(rates[0]),
        r2: Some(rates[1]),
        raw_r1: Some(raws[0]),
        raw_r2: Some(raws[1]),
        constraints,
        feasible,
        scheme: Some(AchievingScheme::Round2(scheme.clone())),
        ..RatePoint::empty()
    })
}

/// Private-key inner-region point:
/// `r_i = [min{I(T_i;X_i,S|T) - I(T_i;X_{i^c},S|T), I(T_i;X_i,S|T) - I(T_i;Z)}]^+`
/// with the decodability constraints `I(T_i;X_i,S|T) <= I(T_i;Y|T)` reported.
pub fn private_key_inner_point(
    spec: &SdMacSpec,
    scheme: &Round2Scheme,
) -> Result<RatePoint, BoundError> {
    let fj = FullJoint::round2(spec, scheme)?;
    private_point(fj.joint(), scheme, true)
}

/// Private-key outer-region point:
/// `r_i = min{I(T_i;X_i,S|Z), I(T_i;X_i|X_{i^c},S)}`.
pub fn private_key_outer_point(
    spec: &SdMacSpec,
    scheme: &Round2Scheme,
) -> Result<RatePoint, BoundError> {
    let fj = FullJoint::round2(spec, scheme)?;
    private_point(fj.joint(), scheme, false)
}

/// Independent-transmitters special case: requires the chain
/// `(X1,T1) -> (S,T) -> (X2,T2) -> Z`; returns `r_i = I(T_i;X_i|S,X_{i^c})`
/// with the decodability constraints reported.
pub fn corollary2_point(
    spec: &SdMacSpec,
    scheme: &Round2Scheme,
) -> Result<RatePoint, BoundError> {
    let fj = FullJoint::round2(spec, scheme)?;
    let j = fj.joint();
    let leak_a = j.markov_leakage(&["x1", "t1"], &["s", "t"], &["x2", "t2"])?;
    let leak_b = j.markov_leakage(&["x1", "t1", "s", "t"], &["x2", "t2"], &["z"])?;
    if leak_a > 1e-9 || leak_b > 1e-9 {
        return Err(BoundError::ChainViolated(leak_a, leak_b));
    }
    let mut constraints = Vec::new();
    let mut rates = [0.0_f64; 2];
    for i in 0..2 {
        let ti = if i == 0 { "t1" } else { "t2" };
        let xi = if i == 0 { "x1" } else { "x2" };
        let xo = if i == 0 { "x2" } else { "x1" };
        rates[i] = j.conditional_mutual_information(&[ti], &[xi], &["s", xo])?;
        let i_own = j.conditional_mutual_information(&[ti], &[xi, "s"], &["t"])?;
        let i_dec = j.conditional_mutual_information(&[ti], &["y"], &["t"])?;
        constraints.push(Constraint::check(
            &format!("decodability_{}", i + 1),
            i_own,
            i_dec,
            1e-9,
        ));
    }
    let feasible = constraints.iter().all(|c| c.satisfied);
    Ok(RatePoint {
        r1: Some(rates[0]),
        r2: Some(rates[1]),
        raw_r1: Some(rates[0]),
        raw_r2: Some(rates[1]),
        constraints,
        feasible,
        scheme: Some(AchievingScheme::Round2(scheme.clone())),
        ..RatePoint::empty()
    })
}

/// Closed form for the stuck-at memory: achievable common-key rate `p`
/// under the conferencing-side constraint `H(V|S) <= 1 - p`.
pub fn stuck_at_lb_closed_form(p: f64) -> Result<(f64, f64), BoundError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(BoundError::InvalidProbability(p));
    }
    Ok((p, 1.0 - p))
}

/// Closed-form evaluation of the modulo-additive example.
#[derive(Debug, Clone, Copy)]
pub struct ModaddClosedForm {
    /// Signed rate before clamping.
    pub raw_rate: f64,
    /// `[raw_rate]^+`.
    pub rate: f64,
    /// `H(V|S) = H_b(alpha)` for the scheme the formula assumes.
    pub h_v_given_s: f64,
    /// Right side of the constraint: the smaller of the description budget
    /// and the conferencing rate.
    pub constraint_bound: f64,
    pub constraint_satisfied: bool,
}

/// `H_b((a*p_S)*p_1) + H_b(p_S*p_2) - H_b((a*p_S)*p_2) - H_b(p_S*p_1)`
/// with the constraint
/// `H_b(a) <= min{H_b(a) + H_b(a*p_1) - H_b((a*p_S)*p_1), r_c}`.
pub fn modadd_lb_closed_form(
    alpha: f64,
    p_s: f64,
    p_1: f64,
    p_2: f64,
    r_c: f64,
) -> Result<ModaddClosedForm, BoundError> {
    let conv = |a: f64, b: f64| binary_convolution(a, b).map_err(BoundError::Prob);
    let hb = |x: f64| binary_entropy(x).map_err(BoundError::Prob);
    let as_ = conv(alpha, p_s)?;
    let raw_rate =
        hb(conv(as_, p_1)?)? + hb(conv(p_s, p_2)?)? - hb(conv(as_, p_2)?)? - hb(conv(p_s, p_1)?)?;
    let h_v_given_s = hb(alpha)?;
    let budget = hb(alpha)? + hb(conv(alpha, p_1)?)? - hb(conv(as_, p_1)?)?;
    let constraint_bound = budget.min(r_c);
    Ok(ModaddClosedForm {
        raw_rate,
        rate: raw_rate.max(0.0),
        h_v_given_s,
        constraint_bound,
        constraint_satisfied: h_v_given_s <= constraint_bound + 1e-9,
    })
}

/// Random binary SD-MAC (all alphabets binary, T trivial) for property
/// testing.
pub fn random_binary_spec(rng: &mut ChaCha12Rng) -> SdMacSpec {
    let s = Alphabet::binary("s");
    let t = Alphabet::singleton("t");
    let x1 = Alphabet::binary("x1");
    let x2 = Alphabet::binary("x2");
    let y = Alphabet::binary("y");
    let z = Alphabet::binary("z");
    let state = sample_simplex(rng, 2);
    let state_pmf = JointPmf::new(vec![Var::new("s", s.clone())], state).unwrap();
    let degrade_kernel = ConditionalPmf::deterministic(
        vec![Var::new("s", s.clone())],
        vec![Var::new("t", t.clone())],
        |_| vec![0],
    )
    .unwrap();
    let channel_kernel = crate::prob::random_kernel(
        rng,
        vec![
            Var::new("x1", x1.clone()),
            Var::new("x2", x2.clone()),
            Var::new("s", s.clone()),
        ],
        vec![Var::new("y", y.clone()), Var::new("z", z.clone())],
    );
    SdMacSpec::new(s, t, x1, x2, y, z, state_pmf, degrade_kernel, channel_kernel).unwrap()
}

/// Random binary SD-MAC whose eavesdropper output is a cascade of the
/// legitimate output: `p(y,z|x1,x2,s) = p(y|x1,x2,s) q(z|y)`, so every
/// chain `anything -> Y -> Z` holds by construction. The receiver
/// observation T is a random binary degradation of S.
pub fn random_cascade_spec(rng: &mut ChaCha12Rng) -> SdMacSpec {
    let s = Alphabet::binary("s");
    let t = Alphabet::binary("t");
    let x1 = Alphabet::binary("x1");
    let x2 = Alphabet::binary("x2");
    let y = Alphabet::binary("y");
    let z = Alphabet::binary("z");
    let state = sample_simplex(rng, 2);
    let state_pmf = JointPmf::new(vec![Var::new("s", s.clone())], state).unwrap();
    let degrade_kernel = crate::prob::random_kernel(
        rng,
        vec![Var::new("s", s.clone())],
        vec![Var::new("t", t.clone())],
    );
    let y_kernel = crate::prob::random_kernel(
        rng,
        vec![
            Var::new("x1", x1.clone()),
            Var::new("x2", x2.clone()),
            Var::new("s", s.clone()),
        ],
        vec![Var::new("y", y.clone())],
    );
    let q = crate::prob::random_kernel(
        rng,
        vec![Var::new("y", y.clone())],
        vec![Var::new("z", z.clone())],
    );
    let channel_kernel = ConditionalPmf::from_fn(
        vec![
            Var::new("x1", x1.clone()),
            Var::new("x2", x2.clone()),
            Var::new("s", s.clone()),
        ],
        vec![Var::new("y", y.clone()), Var::new("z", z.clone())],
        |g, tgt| {
            let py = y_kernel.row(((g[0] * 2) + g[1]) * 2 + g[2])[tgt[0]];
            py * q.row(tgt[0])[tgt[1]]
        },
    )
    .unwrap();
    SdMacSpec::new(s, t, x1, x2, y, z, state_pmf, degrade_kernel, channel_kernel).unwrap()
}

/// Random first-round auxiliary scheme within the given cardinalities.
pub fn random_aux_scheme(
    rng: &mut ChaCha12Rng,
    spec: &SdMacSpec,
    nu: usize,
    nv: usize,
) -> AuxiliaryScheme {
    let params = AuxParams::random(rng, spec, nu, nv);
    params.build(spec, &numbered_alphabet("u", nu), &numbered_alphabet("v", nv))
}

/// Random second-round scheme within the given description cardinalities.
pub fn random_round2_scheme(
    rng: &mut ChaCha12Rng,
    spec: &SdMacSpec,
    nt1: usize,
    nt2: usize,
) -> Round2Scheme {
    let t1 = numbered_alphabet("t1", nt1);
    let t2 = numbered_alphabet("t2", nt2);
    let input_law = crate::prob::random_kernel(
        rng,
        vec![spec.s_var()],
        vec![spec.x1_var(), spec.x2_var()],
    );
    let t1_kernel = crate::prob::random_kernel(
        rng,
        vec![spec.y_var(), spec.t_var()],
        vec![Var::new("t1", t1.clone())],
    );
    let t2_kernel = crate::prob::random_kernel(
        rng,
        vec![spec.y_var(), spec.t_var()],
        vec![Var::new("t2", t2.clone())],
    );
    Round2Scheme::new(spec, t1, t2, input_law, t1_kernel, t2_kernel).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_modulo_additive, build_modulo_additive_cascade, build_stuck_at, EveMode};
    use crate::presets::modadd_alpha_scheme;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn lb_objective_trivial_v() {
        let spec = build_modulo_additive(0.2, 0.1, 0.3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let aux = random_aux_scheme(&mut rng, &spec, 2, 1);
        let p = common_key_lb_objective(&spec, &aux, 2.0, false).unwrap();
        assert!(close(p.r0.unwrap(), 0.0, 1e-12));
    }

    #[test]
    fn lb_objective_reference_value() {
        let spec = build_modulo_additive(0.0, 0.1, 0.3).unwrap();
        let aux = modadd_alpha_scheme(&spec, 0.5);
        let p = common_key_lb_objective(&spec, &aux, 2.0, false).unwrap();
        let expect = binary_entropy(0.3).unwrap() - binary_entropy(0.1).unwrap();
        assert!(close(p.r0.unwrap(), expect, 1e-12));
        assert!(close(p.r0.unwrap(), 0.412295, 1e-6));
    }

    #[test]
    fn lb_objective_equal_noises_zero() {
        let spec = build_modulo_additive(0.2, 0.2, 0.2).unwrap();
        let aux = modadd_alpha_scheme(&spec, 0.5);
        let p = common_key_lb_objective(&spec, &aux, 2.0, false).unwrap();
        assert!(close(p.r0.unwrap(), 0.0, 1e-12));
    }

    #[test]
    fn closed_form_matches_brute_force_spot() {
        for &(alpha, p_s, p_1, p_2) in
            &[(0.5, 0.0, 0.1, 0.3), (0.3, 0.2, 0.1, 0.4), (0.1, 0.4, 0.0, 0.5), (0.2, 0.3, 0.2, 0.2)]
        {
            let spec = build_modulo_additive(p_s, p_1, p_2).unwrap();
            let aux = modadd_alpha_scheme(&spec, alpha);
            let p = common_key_lb_objective(&spec, &aux, 10.0, false).unwrap();
            let cf = modadd_lb_closed_form(alpha, p_s, p_1, p_2, 10.0).unwrap();
            assert!(
                close(p.raw_r0.unwrap(), cf.raw_rate, 1e-9),
                "mismatch at ({alpha},{p_s},{p_1},{p_2}): {} vs {}",
                p.raw_r0.unwrap(),
                cf.raw_rate
            );
        }
    }

    #[test]
    fn closed_form_special_points() {
        // p_1 = p_2
        let cf = modadd_lb_closed_form(0.3, 0.2, 0.15, 0.15, 1.0).unwrap();
        assert!(close(cf.raw_rate, 0.0, 1e-12));
        // p_s = 0.5 absorbs
        let cf = modadd_lb_closed_form(0.5, 0.5, 0.1, 0.3, 1.0).unwrap();
        assert!(close(cf.raw_rate, 0.0, 1e-12));
        // reference
        let cf = modadd_lb_closed_form(0.5, 0.0, 0.1, 0.3, 1.0).unwrap();
        assert!(close(cf.rate, 0.412295, 1e-6));
    }

    #[test]
    fn stuck_at_closed_form() {
        assert_eq!(stuck_at_lb_closed_form(0.0).unwrap(), (0.0, 1.0));
        assert_eq!(stuck_at_lb_closed_form(1.0).unwrap(), (1.0, 0.0));
        assert_eq!(stuck_at_lb_closed_form(0.3).unwrap(), (0.3, 0.7));
        assert!(stuck_at_lb_closed_form(1.2).is_err());
    }

    #[test]
    fn ub_trivial_cases() {
        // Z = Y (reads_memory stuck-at): conditioning on Z removes everything
        let spec = build_stuck_at(0.3, EveMode::ReadsMemory).unwrap();
        let cfg = SearchConfig { restarts: 4, ..Default::default() };
        let p = common_key_ub(&spec, &cfg).unwrap();
        assert!(close(p.r0.unwrap(), 0.0, 1e-9));

        // S effectively constant (p=0 stuck-at has clean w.p. 1), Z constant,
        // Y = X noiseless: the uniform input attains 1 bit
        let spec = build_stuck_at(0.0, EveMode::Uninformative).unwrap();
        let p = common_key_ub(&spec, &cfg).unwrap();
        assert!(close(p.r0.unwrap(), 1.0, 1e-6));
    }

    #[test]
    fn degraded_identity_and_trivial_cases() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..10 {
            let spec = random_cascade_spec(&mut rng);
            let aux = random_aux_scheme(&mut rng, &spec, 2, 3);
            let lb = common_key_lb_objective(&spec, &aux, 5.0, false).unwrap();
            let dg = degraded_common_key_capacity(&spec, &aux, 5.0, false).unwrap();
            assert!(close(lb.raw_r0.unwrap(), dg.raw_r0.unwrap(), 1e-9));
        }
        // Z constant: conditioning on Z is a no-op
        let spec = build_stuck_at(0.3, EveMode::Uninformative).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let aux = random_aux_scheme(&mut rng, &spec, 2, 2);
        let lb = common_key_lb_objective(&spec, &aux, 5.0, false).unwrap();
        let dg = degraded_common_key_capacity(&spec, &aux, 5.0, false).unwrap();
        assert!(close(lb.raw_r0.unwrap(), dg.raw_r0.unwrap(), 1e-12));
        // Z = Y: both expressions vanish
        let spec = build_stuck_at(0.3, EveMode::ReadsMemory).unwrap();
        let aux = random_aux_scheme(&mut rng, &spec, 2, 2);
        let lb = common_key_lb_objective(&spec, &aux, 5.0, false).unwrap();
        let dg = degraded_common_key_capacity(&spec, &aux, 5.0, false).unwrap();
        assert!(close(lb.raw_r0.unwrap(), 0.0, 1e-10));
        assert!(close(dg.raw_r0.unwrap(), 0.0, 1e-10));
    }

    #[test]
    fn degraded_rejects_non_markov() {
        // independent-noise modadd with p_1 < p_2 is not a cascade
        let spec = build_modulo_additive(0.2, 0.1, 0.3).unwrap();
        let aux = modadd_alpha_scheme(&spec, 0.3);
        assert!(matches!(
            degraded_common_key_capacity(&spec, &aux, 1.0, false),
            Err(BoundError::NotDegraded(_))
        ));
        let spec = build_modulo_additive_cascade(0.2, 0.1, 0.3).unwrap();
        let aux = modadd_alpha_scheme(&spec, 0.3);
        assert!(degraded_common_key_capacity(&spec, &aux, 1.0, false).is_ok());
    }

    #[test]
    fn inner_outer_trivial_cases() {
        let spec = build_modulo_additive(0.2, 0.1, 0.3).unwrap();
        // descriptions independent of everything
        let t1 = Alphabet::binary("t1");
        let t2 = Alphabet::binary("t2");
        let input_law = ConditionalPmf::from_fn(
            vec![spec.s_var()],
            vec![spec.x1_var(), spec.x2_var()],
            |_, _| 0.25,
        )
        .unwrap();
        let flat = ConditionalPmf::from_fn(
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t1", t1.clone())],
            |_, _| 0.5,
        )
        .unwrap();
        let flat2 = ConditionalPmf::from_fn(
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t2", t2.clone())],
            |_, _| 0.5,
        )
        .unwrap();
        let scheme = Round2Scheme::new(&spec, t1, t2, input_law, flat, flat2).unwrap();
        let inner = private_key_inner_point(&spec, &scheme).unwrap();
        let outer = private_key_outer_point(&spec, &scheme).unwrap();
        assert!(close(inner.r1.unwrap(), 0.0, 1e-12));
        assert!(close(outer.r1.unwrap(), 0.0, 1e-10));
    }

    #[test]
    fn inner_zero_when_eve_sees_description() {
        // T1 = Y and Z = Y: the eavesdropper term kills the rate
        let spec = build_stuck_at(0.3, EveMode::ReadsMemory).unwrap();
        let t1 = Alphabet::binary("t1");
        let t2 = Alphabet::binary("t2");
        let input_law = ConditionalPmf::from_fn(
            vec![spec.s_var()],
            vec![spec.x1_var(), spec.x2_var()],
            |_, t| if t[1] == 0 { 0.5 } else { 0.0 },
        )
        .unwrap();
        let copy = ConditionalPmf::deterministic(
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t1", t1.clone())],
            |g| vec![g[0]],
        )
        .unwrap();
        let copy2 = ConditionalPmf::deterministic(
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t2", t2.clone())],
            |g| vec![g[0]],
        )
        .unwrap();
        let scheme = Round2Scheme::new(&spec, t1, t2, input_law, copy, copy2).unwrap();
        let inner = private_key_inner_point(&spec, &scheme).unwrap();
        assert!(close(inner.r1.unwrap(), 0.0, 1e-10));
    }

    #[test]
    fn outer_zero_when_x1_determined() {
        // X1 = S (a function of (X2, S)): second outer term vanishes
        let spec = build_modulo_additive(0.3, 0.1, 0.2).unwrap();
        let t1 = Alphabet::binary("t1");
        let t2 = Alphabet::binary("t2");
        let input_law = ConditionalPmf::from_fn(
            vec![spec.s_var()],
            vec![spec.x1_var(), spec.x2_var()],
            |g, t| if t[0] == g[0] { 0.5 } else { 0.0 },
        )
        .unwrap();
        let copy = ConditionalPmf::deterministic(
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t1", t1.clone())],
            |g| vec![g[0]],
        )
        .unwrap();
        let flat = ConditionalPmf::from_fn(
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t2", t2.clone())],
            |_, _| 0.5,
        )
        .unwrap();
        let scheme = Round2Scheme::new(&spec, t1, t2, input_law, copy, flat).unwrap();
        let outer = private_key_outer_point(&spec, &scheme).unwrap();
        assert!(close(outer.r1.unwrap(), 0.0, 1e-10));
    }

    #[test]
    fn inner_leq_outer_on_random_schemes() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..25 {
            let spec = random_binary_spec(&mut rng);
            let scheme = random_round2_scheme(&mut rng, &spec, 2, 3);
            let inner = private_key_inner_point(&spec, &scheme).unwrap();
            let outer = private_key_outer_point(&spec, &scheme).unwrap();
            assert!(inner.r1.unwrap() <= outer.r1.unwrap() + 1e-6);
            assert!(inner.r2.unwrap() <= outer.r2.unwrap() + 1e-6);
        }
    }

    /// Product channel with a composite legitimate output: the first
    /// component reads (x1, s), the second reads x2 alone, the eavesdropper
    /// sees a noisy copy of the second component. Descriptions copy their
    /// own component, so the independence chain holds structurally.
    fn independent_transmitters_spec() -> (SdMacSpec, Round2Scheme) {
        let s = Alphabet::binary("s");
        let t = Alphabet::singleton("t");
        let x1 = Alphabet::binary("x1");
        let x2 = Alphabet::binary("x2");
        let y = Alphabet::new("y", ["00", "01", "10", "11"]).unwrap();
        let z = Alphabet::binary("z");
        let state_pmf =
            JointPmf::new(vec![Var::new("s", s.clone())], vec![0.6, 0.4]).unwrap();
        let degrade = ConditionalPmf::deterministic(
            vec![Var::new("s", s.clone())],
            vec![Var::new("t", t.clone())],
            |_| vec![0],
        )
        .unwrap();
        let (a, b, c) = (0.1, 0.15, 0.2); // component noises and eve noise
        let channel = ConditionalPmf::from_fn(
            vec![
                Var::new("x1", x1.clone()),
                Var::new("x2", x2.clone()),
                Var::new("s", s.clone()),
            ],
            vec![Var::new("y", y.clone()), Var::new("z", z.clone())],
            move |g, tgt| {
                let (y1, y2) = (tgt[0] / 2, tgt[0] % 2);
                let p1 = if y1 == g[0] ^ g[2] { 1.0 - a } else { a };
                let p2 = if y2 == g[1] { 1.0 - b } else { b };
                let pz = if tgt[1] == y2 { 1.0 - c } else { c };
                p1 * p2 * pz
            },
        )
        .unwrap();
        let spec =
            SdMacSpec::new(s, t, x1, x2, y, z, state_pmf, degrade, channel).unwrap();
        let t1 = Alphabet::binary("t1");
        let t2 = Alphabet::binary("t2");
        let input_law = ConditionalPmf::from_fn(
            vec![spec.s_var()],
            vec![spec.x1_var(), spec.x2_var()],
            |g, tgt| {
                let p1 = if tgt[0] == g[0] { 0.7 } else { 0.3 };
                0.5 * p1
            },
        )
        .unwrap();
        let t1_kernel = ConditionalPmf::deterministic(
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t1", t1.clone())],
            |g| vec![g[0] / 2],
        )
        .unwrap();
        let t2_kernel = ConditionalPmf::deterministic(
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t2", t2.clone())],
            |g| vec![g[0] % 2],
        )
        .unwrap();
        let scheme =
            Round2Scheme::new(&spec, t1, t2, input_law, t1_kernel, t2_kernel).unwrap();
        (spec, scheme)
    }

    #[test]
    fn corollary2_matches_inner_bound() {
        let (spec, scheme) = independent_transmitters_spec();
        let c2 = corollary2_point(&spec, &scheme).unwrap();
        let inner = private_key_inner_point(&spec, &scheme).unwrap();
        assert!(close(c2.r1.unwrap(), inner.r1.unwrap(), 1e-9));
        assert!(c2.r1.unwrap() > 0.01);
    }

    #[test]
    fn corollary2_rejects_coupled_schemes() {
        let spec = build_modulo_additive(0.2, 0.1, 0.3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let scheme = random_round2_scheme(&mut rng, &spec, 2, 2);
        assert!(matches!(
            corollary2_point(&spec, &scheme),
            Err(BoundError::ChainViolated(_, _))
        ));
    }

    #[test]
    fn optimizer_beats_witness_modadd() {
        // proof-consistent direction: the alpha = 0.5 witness is feasible
        let spec = build_modulo_additive(0.0, 0.1, 0.3).unwrap();
        let cfg = SearchConfig { restarts: 8, seed: 42, ..Default::default() };
        let p = optimize_common_key_lb(&spec, 4.0, &cfg, true).unwrap();
        assert!(p.feasible);
        assert!(p.r0.unwrap() >= 0.41, "got {}", p.r0.unwrap());
    }

    #[test]
    fn optimizer_zero_when_eve_equals_receiver() {
        let spec = build_stuck_at(0.4, EveMode::ReadsMemory).unwrap();
        let cfg = SearchConfig { restarts: 4, seed: 1, ..Default::default() };
        let p = optimize_common_key_lb(&spec, 2.0, &cfg, false).unwrap();
        assert!(close(p.r0.unwrap(), 0.0, 1e-9));
    }

    #[test]
    fn optimizer_deterministic() {
        let spec = build_modulo_additive(0.2, 0.1, 0.3).unwrap();
        let cfg = SearchConfig { restarts: 6, seed: 9, ..Default::default() };
        let a = optimize_common_key_lb(&spec, 1.0, &cfg, false).unwrap();
        let b = optimize_common_key_lb(&spec, 1.0, &cfg, false).unwrap();
        assert_eq!(a.raw_r0.unwrap().to_bits(), b.raw_r0.unwrap().to_bits());
        let ua = common_key_ub(&spec, &cfg).unwrap();
        let ub = common_key_ub(&spec, &cfg).unwrap();
        assert_eq!(ua.raw_r0.unwrap().to_bits(), ub.raw_r0.unwrap().to_bits());
    }

    #[test]
    fn sandwich_on_random_specs() {
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let cfg = SearchConfig {
            restarts: 3,
            sweeps: 1,
            steps: vec![0.5, 0.2],
            seed: 7,
            ..Default::default()
        };
        for _ in 0..8 {
            let spec = random_binary_spec(&mut rng);
            let lb = optimize_common_key_lb(&spec, 3.0, &cfg, false).unwrap();
            let seeds = match &lb.scheme {
                Some(AchievingScheme::Aux(aux)) => {
                    vec![induced_input_law(&spec, aux).unwrap()]
                }
                _ => vec![],
            };
            let ub = common_key_ub_with_seeds(&spec, &cfg, &seeds).unwrap();
            assert!(
                lb.r0.unwrap() <= ub.r0.unwrap() + 1e-6,
                "lb {} > ub {}",
                lb.r0.unwrap(),
                ub.r0.unwrap()
            );
        }
    }
}
