//! SD-MAC specifications and the auxiliary-variable schemes that
//! parameterize the bounds and the protocol simulators.
//!
//! Variable names are fixed throughout the crate: the channel uses
//! `s, t, x1, x2, y, z`; the first-round auxiliaries are `u, v`; the
//! second-round descriptions are `t1, t2`.

use crate::prob::{Alphabet, ConditionalPmf, JointPmf, ProbError, Var};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("kernel `{kernel}` must condition on {expect}, found {found}")]
    KernelShape { kernel: String, expect: String, found: String },
    #[error("full joint violates `{invariant}` by {error:.3e} (tolerance {tol:.1e})")]
    JointInvariant { invariant: String, error: f64, tol: f64 },
    #[error("cascade construction needs p_1 < 1/2, got {0}")]
    CascadeNoise(f64),
}

/// A state-dependent multiple access channel with an eavesdropper:
/// `p(s)`, a degraded state observation `p(t|s)` for the receiver, and the
/// one-shot transition law `p(y,z|x1,x2,s)` extended i.i.d. over any
/// blocklength.
#[derive(Debug, Clone)]
pub struct SdMacSpec {
    pub s: Alphabet,
    pub t: Alphabet,
    pub x1: Alphabet,
    pub x2: Alphabet,
    pub y: Alphabet,
    pub z: Alphabet,
    /// Pmf over the single variable `s`.
    pub state_pmf: JointPmf,
    /// `p(t|s)`.
    pub degrade_kernel: ConditionalPmf,
    /// `p(y,z|x1,x2,s)` with targets ordered `(y, z)`.
    pub channel_kernel: ConditionalPmf,
}

fn expect_shape(
    kernel: &ConditionalPmf,
    name: &str,
    given: &[&Var],
    target: &[&Var],
) -> Result<(), ChannelError> {
    let ok = kernel.given().len() == given.len()
        && kernel.target().len() == target.len()
        && kernel
            .given()
            .iter()
            .zip(given)
            .all(|(a, b)| a.name == b.name && a.alphabet == b.alphabet)
        && kernel
            .target()
            .iter()
            .zip(target)
            .all(|(a, b)| a.name == b.name && a.alphabet == b.alphabet);
    if ok {
        Ok(())
    } else {
        let fmt = |vs: &[&Var]| {
            vs.iter().map(|v| v.name.clone()).collect::<Vec<_>>().join(",")
        };
        let found = format!(
            "({} | {})",
            kernel.target().iter().map(|v| v.name.clone()).collect::<Vec<_>>().join(","),
            kernel.given().iter().map(|v| v.name.clone()).collect::<Vec<_>>().join(","),
        );
        Err(ChannelError::KernelShape {
            kernel: name.to_string(),
            expect: format!("({} | {})", fmt(target), fmt(given)),
            found,
        })
    }
}

impl SdMacSpec {
    pub fn new(
        s: Alphabet,
        t: Alphabet,
        x1: Alphabet,
        x2: Alphabet,
        y: Alphabet,
        z: Alphabet,
        state_pmf: JointPmf,
        degrade_kernel: ConditionalPmf,
        channel_kernel: ConditionalPmf,
    ) -> Result<Self, ChannelError> {
        let sv = Var::new("s", s.clone());
        let tv = Var::new("t", t.clone());
        let x1v = Var::new("x1", x1.clone());
        let x2v = Var::new("x2", x2.clone());
        let yv = Var::new("y", y.clone());
        let zv = Var::new("z", z.clone());
        if state_pmf.vars() != [sv.clone()] {
            return Err(ChannelError::KernelShape {
                kernel: "state_pmf".into(),
                expect: "(s)".into(),
                found: state_pmf
                    .vars()
                    .iter()
                    .map(|v| v.name.clone())
                    .collect::<Vec<_>>()
                    .join(","),
            });
        }
        expect_shape(&degrade_kernel, "degrade_kernel", &[&sv], &[&tv])?;
        expect_shape(&channel_kernel, "channel_kernel", &[&x1v, &x2v, &sv], &[&yv, &zv])?;
        Ok(SdMacSpec { s, t, x1, x2, y, z, state_pmf, degrade_kernel, channel_kernel })
    }

    pub fn s_var(&self) -> Var {
        Var::new("s", self.s.clone())
    }
    pub fn t_var(&self) -> Var {
        Var::new("t", self.t.clone())
    }
    pub fn x1_var(&self) -> Var {
        Var::new("x1", self.x1.clone())
    }
    pub fn x2_var(&self) -> Var {
        Var::new("x2", self.x2.clone())
    }
    pub fn y_var(&self) -> Var {
        Var::new("y", self.y.clone())
    }
    pub fn z_var(&self) -> Var {
        Var::new("z", self.z.clone())
    }
}

/// What the eavesdropper of the stuck-at memory observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EveMode {
    /// Z is a copy of the legitimate read-out Y.
    ReadsMemory,
    /// Z is a constant; the eavesdropper learns nothing from the channel.
    Uninformative,
}

/// Binary memory with stuck-at faults: each cell sticks at 0 with
/// probability `p/2`, sticks at 1 with probability `p/2`, and otherwise
/// behaves as a noiseless binary channel. The second input is degenerate
/// (one effective writer) and the receiver has no state observation.
pub fn build_stuck_at(p: f64, eve_mode: EveMode) -> Result<SdMacSpec, ChannelError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ChannelError::InvalidProbability(p));
    }
    let s = Alphabet::new("s", ["stuck0", "stuck1", "clean"])?;
    let t = Alphabet::singleton("t");
    let x1 = Alphabet::binary("x1");
    let x2 = Alphabet::singleton("x2");
    let y = Alphabet::binary("y");
    let z = match eve_mode {
        EveMode::ReadsMemory => Alphabet::binary("z"),
        EveMode::Uninformative => Alphabet::singleton("z"),
    };
    let state_pmf = JointPmf::new(
        vec![Var::new("s", s.clone())],
        vec![p / 2.0, p / 2.0, 1.0 - p],
    )?;
    let degrade_kernel = ConditionalPmf::deterministic(
        vec![Var::new("s", s.clone())],
        vec![Var::new("t", t.clone())],
        |_| vec![0],
    )?;
    let channel_kernel = ConditionalPmf::deterministic(
        vec![
            Var::new("x1", x1.clone()),
            Var::new("x2", x2.clone()),
            Var::new("s", s.clone()),
        ],
        vec![Var::new("y", y.clone()), Var::new("z", z.clone())],
        move |g| {
            let (x, s_idx) = (g[0], g[2]);
            let yv = match s_idx {
                0 => 0, // stuck at 0
                1 => 1, // stuck at 1
                _ => x,
            };
            let zv = match eve_mode {
                EveMode::ReadsMemory => yv,
                EveMode::Uninformative => 0,
            };
            vec![yv, zv]
        },
    )?;
    SdMacSpec::new(s, t, x1, x2, y, z, state_pmf, degrade_kernel, channel_kernel)
}

/// `p_1 <= p_2 <= 1/2` is the regime the closed forms assume; outside it the
/// channel is still constructible.
pub fn modadd_regime_ok(p_1: f64, p_2: f64) -> bool {
    p_1 <= p_2 && p_2 <= 0.5
}

fn check_prob(p: f64) -> Result<(), ChannelError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ChannelError::InvalidProbability(p))
    }
}

fn modadd_spec(
    p_s: f64,
    yz_kernel: impl Fn(&[usize], &[usize]) -> f64,
) -> Result<SdMacSpec, ChannelError> {
    let s = Alphabet::binary("s");
    let t = Alphabet::singleton("t");
    let x1 = Alphabet::binary("x1");
    let x2 = Alphabet::binary("x2");
    let y = Alphabet::binary("y");
    let z = Alphabet::binary("z");
    let state_pmf = JointPmf::new(
        vec![Var::new("s", s.clone())],
        vec![1.0 - p_s, p_s],
    )?;
    let degrade_kernel = ConditionalPmf::deterministic(
        vec![Var::new("s", s.clone())],
        vec![Var::new("t", t.clone())],
        |_| vec![0],
    )?;
    let channel_kernel = ConditionalPmf::from_fn(
        vec![
            Var::new("x1", x1.clone()),
            Var::new("x2", x2.clone()),
            Var::new("s", s.clone()),
        ],
        vec![Var::new("y", y.clone()), Var::new("z", z.clone())],
        yz_kernel,
    )?;
    SdMacSpec::new(s, t, x1, x2, y, z, state_pmf, degrade_kernel, channel_kernel)
}

/// Modulo-additive SD-MAC: `Y = X1 + X2 + S + N1`, `Z = X1 + X2 + S + N2`
/// (all mod 2) with `N1 ~ Bern(p_1)` and `N2 ~ Bern(p_2)` independent of
/// each other, and `S ~ Bern(p_s)`.
pub fn build_modulo_additive(p_s: f64, p_1: f64, p_2: f64) -> Result<SdMacSpec, ChannelError> {
    check_prob(p_s)?;
    check_prob(p_1)?;
    check_prob(p_2)?;
    modadd_spec(p_s, move |g, t| {
        let core = g[0] ^ g[1] ^ g[2];
        let py = if t[0] == core { 1.0 - p_1 } else { p_1 };
        let pz = if t[1] == core { 1.0 - p_2 } else { p_2 };
        py * pz
    })
}

/// Modulo-additive SD-MAC with the eavesdropper output built as a cascade of
/// the legitimate output: `Z = Y + Bern(q)` with `q = (p_2 - p_1)/(1 - 2 p_1)`,
/// so `Z` has the same marginal law as in [`build_modulo_additive`] but
/// `(anything) -> Y -> Z` holds by construction.
pub fn build_modulo_additive_cascade(
    p_s: f64,
    p_1: f64,
    p_2: f64,
) -> Result<SdMacSpec, ChannelError> {
    check_prob(p_s)?;
    check_prob(p_1)?;
    check_prob(p_2)?;
    if p_1 >= 0.5 {
        return Err(ChannelError::CascadeNoise(p_1));
    }
    let q = (p_2 - p_1) / (1.0 - 2.0 * p_1);
    check_prob(q)?;
    modadd_spec(p_s, move |g, t| {
        let core = g[0] ^ g[1] ^ g[2];
        let py = if t[0] == core { 1.0 - p_1 } else { p_1 };
        let pz = if t[1] == t[0] { 1.0 - q } else { q };
        py * pz
    })
}

/// First-round auxiliary scheme: conditional laws `p(u|s)`, `p(v|u,s)` and
/// the input maps `p(x1|u,v,s)`, `p(x2|u,v,s)`. The input maps may be
/// stochastic for bound evaluation; the protocol simulator requires them to
/// be deterministic.
#[derive(Debug, Clone)]
pub struct AuxiliaryScheme {
    pub u: Alphabet,
    pub v: Alphabet,
    pub u_kernel: ConditionalPmf,
    pub v_kernel: ConditionalPmf,
    pub x1_kernel: ConditionalPmf,
    pub x2_kernel: ConditionalPmf,
}

impl AuxiliaryScheme {
    pub fn new(
        spec: &SdMacSpec,
        u: Alphabet,
        v: Alphabet,
        u_kernel: ConditionalPmf,
        v_kernel: ConditionalPmf,
        x1_kernel: ConditionalPmf,
        x2_kernel: ConditionalPmf,
    ) -> Result<Self, ChannelError> {
        let sv = spec.s_var();
        let uv = Var::new("u", u.clone());
        let vv = Var::new("v", v.clone());
        expect_shape(&u_kernel, "u_kernel", &[&sv], &[&uv])?;
        expect_shape(&v_kernel, "v_kernel", &[&uv, &sv], &[&vv])?;
        expect_shape(&x1_kernel, "x1_kernel", &[&uv, &vv, &sv], &[&spec.x1_var()])?;
        expect_shape(&x2_kernel, "x2_kernel", &[&uv, &vv, &sv], &[&spec.x2_var()])?;
        Ok(AuxiliaryScheme { u, v, u_kernel, v_kernel, x1_kernel, x2_kernel })
    }

    pub fn u_var(&self) -> Var {
        Var::new("u", self.u.clone())
    }
    pub fn v_var(&self) -> Var {
        Var::new("v", self.v.clone())
    }
}

/// Second-round scheme: an input law `p(x1,x2|s)` and the receiver-side
/// description kernels `p(t1|y,t)`, `p(t2|y,t)`. The two descriptions are
/// conditionally independent given `(Y, T)` because the joint law is built
/// as the product of the two kernels.
#[derive(Debug, Clone)]
pub struct Round2Scheme {
    pub t1: Alphabet,
    pub t2: Alphabet,
    /// `p(x1,x2|s)` with targets ordered `(x1, x2)`.
    pub input_law: ConditionalPmf,
    pub t1_kernel: ConditionalPmf,
    pub t2_kernel: ConditionalPmf,
}

impl Round2Scheme {
    pub fn new(
        spec: &SdMacSpec,
        t1: Alphabet,
        t2: Alphabet,
        input_law: ConditionalPmf,
        t1_kernel: ConditionalPmf,
        t2_kernel: ConditionalPmf,
    ) -> Result<Self, ChannelError> {
        let sv = spec.s_var();
        let yv = spec.y_var();
        let tv = spec.t_var();
        expect_shape(&input_law, "input_law", &[&sv], &[&spec.x1_var(), &spec.x2_var()])?;
        expect_shape(&t1_kernel, "t1_kernel", &[&yv, &tv], &[&Var::new("t1", t1.clone())])?;
        expect_shape(&t2_kernel, "t2_kernel", &[&yv, &tv], &[&Var::new("t2", t2.clone())])?;
        Ok(Round2Scheme { t1, t2, input_law, t1_kernel, t2_kernel })
    }

    pub fn t1_var(&self) -> Var {
        Var::new("t1", self.t1.clone())
    }
    pub fn t2_var(&self) -> Var {
        Var::new("t2", self.t2.clone())
    }
}

/// Tolerance for the full-joint consistency invariants.
pub const JOINT_TOL: f64 = 1e-10;

/// The fully expanded joint law over every random variable of one round.
/// Round 1 spans `(s, t, u, v, x1, x2, y, z)`; round 2 spans
/// `(s, t, x1, x2, y, z, t1, t2)`.
#[derive(Debug, Clone)]
pub struct FullJoint {
    joint: JointPmf,
}

impl FullJoint {
    /// `p(s) p(t|s) p(u|s) p(v|u,s) p(x1|u,v,s) p(x2|u,v,s) p(y,z|x1,x2,s)`.
    pub fn round1(spec: &SdMacSpec, aux: &AuxiliaryScheme) -> Result<Self, ChannelError> {
        let joint = spec
            .state_pmf
            .compose(&spec.degrade_kernel)?
            .compose(&aux.u_kernel)?
            .compose(&aux.v_kernel)?
            .compose(&aux.x1_kernel)?
            .compose(&aux.x2_kernel)?
            .compose(&spec.channel_kernel)?;
        let fj = FullJoint { joint };
        fj.validate(spec)?;
        Ok(fj)
    }

    /// `p(s) p(t|s) p(x1,x2|s) p(y,z|x1,x2,s) p(t1|y,t) p(t2|y,t)`.
    pub fn round2(spec: &SdMacSpec, scheme: &Round2Scheme) -> Result<Self, ChannelError> {
        let joint = spec
            .state_pmf
            .compose(&spec.degrade_kernel)?
            .compose(&scheme.input_law)?
            .compose(&spec.channel_kernel)?
            .compose(&scheme.t1_kernel)?
            .compose(&scheme.t2_kernel)?;
        let fj = FullJoint { joint };
        fj.validate(spec)?;
        Ok(fj)
    }

    pub fn joint(&self) -> &JointPmf {
        &self.joint
    }

    /// Check that the marginal on `s` recovers the state pmf and that the
    /// conditional of `(y,z)` given `(x1,x2,s)` recovers the channel kernel
    /// on every positive-mass row.
    pub fn validate(&self, spec: &SdMacSpec) -> Result<(), ChannelError> {
        let ms = self.joint.marginalize(&["s"])?;
        let mut err: f64 = 0.0;
        for (a, b) in ms.probs().iter().zip(spec.state_pmf.probs()) {
            err = err.max((a - b).abs());
        }
        if err > JOINT_TOL {
            return Err(ChannelError::JointInvariant {
                invariant: "marginal(s) == state_pmf".into(),
                error: err,
                tol: JOINT_TOL,
            });
        }

        let mxs = self.joint.marginalize(&["x1", "x2", "s", "y", "z"])?;
        let given = self.joint.marginalize(&["x1", "x2", "s"])?;
        let cond = mxs.conditional(&["y", "z"], &["x1", "x2", "s"])?;
        let mut err: f64 = 0.0;
        for g in 0..cond.given_len() {
            if given.probs()[g] <= 0.0 {
                continue; // unreachable input cells carry no constraint
            }
            for (a, b) in cond.row(g).iter().zip(spec.channel_kernel.row(g)) {
                err = err.max((a - b).abs());
            }
        }
        if err > JOINT_TOL {
            return Err(ChannelError::JointInvariant {
                invariant: "conditional(y,z | x1,x2,s) == channel_kernel".into(),
                error: err,
                tol: JOINT_TOL,
            });
        }
        Ok(())
    }
}

/// Degenerate one-symbol auxiliary alphabet helpers used by the worked
/// examples: `U = {-}` realizes "no coarse layer".
pub fn trivial_u_kernel(spec: &SdMacSpec, u: &Alphabet) -> ConditionalPmf {
    ConditionalPmf::from_fn(
        vec![spec.s_var()],
        vec![Var::new("u", u.clone())],
        |_, _| 1.0 / u.len() as f64,
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::binary_convolution;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// The §-style test scheme: no coarse layer, V binary drawn from
    /// `p(v|s)`, inputs x1 = f(v, s), x2 constant-zero.
    fn scheme_v_only(
        spec: &SdMacSpec,
        v_given_s: impl Fn(usize, usize) -> f64,
        x1_of: impl Fn(usize, usize) -> usize,
    ) -> AuxiliaryScheme {
        let u = Alphabet::singleton("u");
        let v = Alphabet::binary("v");
        let uv = Var::new("u", u.clone());
        let vv = Var::new("v", v.clone());
        let u_kernel = ConditionalPmf::from_fn(vec![spec.s_var()], vec![uv.clone()], |_, _| 1.0).unwrap();
        let v_kernel = ConditionalPmf::from_fn(
            vec![uv.clone(), spec.s_var()],
            vec![vv.clone()],
            |g, t| v_given_s(g[1], t[0]),
        )
        .unwrap();
        let x1_kernel = ConditionalPmf::deterministic(
            vec![uv.clone(), vv.clone(), spec.s_var()],
            vec![spec.x1_var()],
            |g| vec![x1_of(g[1], g[2])],
        )
        .unwrap();
        let x2_kernel = ConditionalPmf::deterministic(
            vec![uv, vv, spec.s_var()],
            vec![spec.x2_var()],
            |_| vec![0],
        )
        .unwrap();
        AuxiliaryScheme::new(spec, u, v, u_kernel, v_kernel, x1_kernel, x2_kernel).unwrap()
    }

    #[test]
    fn stuck_at_extremes() {
        // p = 1: Y ~ Bern(0.5) independent of the input
        let spec = build_stuck_at(1.0, EveMode::Uninformative).unwrap();
        let aux = scheme_v_only(&spec, |_, v| if v == 1 { 0.5 } else { 0.5 }, |v, _| v);
        let j = FullJoint::round1(&spec, &aux).unwrap();
        let i = j.joint().mutual_information(&["x1"], &["y"]).unwrap();
        assert!(close(i, 0.0, 1e-12));
        let my = j.joint().marginalize(&["y"]).unwrap();
        assert!(close(my.probs()[1], 0.5, 1e-12));

        // p = 0: Y = X noiselessly
        let spec = build_stuck_at(0.0, EveMode::Uninformative).unwrap();
        let aux = scheme_v_only(&spec, |_, _| 0.5, |v, _| v);
        let j = FullJoint::round1(&spec, &aux).unwrap();
        assert!(close(j.joint().mutual_information(&["x1"], &["y"]).unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn stuck_at_state_conditional_rate() {
        // p = 0.3, uniform input carried by V: the state-conditioned input
        // information I(X;Y|S) equals 1 - p (the clean fraction).
        let spec = build_stuck_at(0.3, EveMode::Uninformative).unwrap();
        let aux = scheme_v_only(&spec, |_, _| 0.5, |v, _| v);
        let j = FullJoint::round1(&spec, &aux).unwrap();
        let i = j
            .joint()
            .conditional_mutual_information(&["x1"], &["y"], &["s"])
            .unwrap();
        assert!(close(i, 0.7, 1e-12));
    }

    #[test]
    fn modadd_deterministic_case() {
        let spec = build_modulo_additive(0.0, 0.0, 0.0).unwrap();
        // x1 = v, x2 = 0 so Y = Z = V + S = V
        let aux = scheme_v_only(&spec, |_, _| 0.5, |v, _| v);
        let j = FullJoint::round1(&spec, &aux).unwrap();
        assert!(close(j.joint().mutual_information(&["v"], &["y"]).unwrap(), 1.0, 1e-12));
        assert!(close(j.joint().mutual_information(&["v"], &["z"]).unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn modadd_crossover_matches_convolution() {
        // P(Y != X1+X2) = p_S * p_1 when S and N1 both flip the sum
        let (p_s, p_1) = (0.2, 0.1);
        let spec = build_modulo_additive(p_s, p_1, 0.3).unwrap();
        let aux = scheme_v_only(&spec, |_, _| 0.5, |v, _| v);
        let j = FullJoint::round1(&spec, &aux).unwrap();
        let m = j.joint().marginalize(&["x1", "x2", "y"]).unwrap();
        let mut mismatch = 0.0;
        for x1 in 0..2 {
            for x2 in 0..2 {
                for y in 0..2 {
                    if y != (x1 ^ x2) {
                        mismatch += m.prob(&[x1, x2, y]);
                    }
                }
            }
        }
        assert!(close(mismatch, binary_convolution(p_s, p_1).unwrap(), 1e-12));
    }

    #[test]
    fn modadd_equal_noises_symmetric() {
        let spec = build_modulo_additive(0.2, 0.15, 0.15).unwrap();
        let aux = scheme_v_only(&spec, |_, _| 0.5, |v, _| v);
        let j = FullJoint::round1(&spec, &aux).unwrap();
        let iy = j.joint().mutual_information(&["v"], &["y"]).unwrap();
        let iz = j.joint().mutual_information(&["v"], &["z"]).unwrap();
        assert!(close(iy, iz, 1e-12));
    }

    #[test]
    fn cascade_is_degraded() {
        let spec = build_modulo_additive_cascade(0.2, 0.1, 0.3).unwrap();
        let aux = scheme_v_only(&spec, |s, v| if v == s { 0.8 } else { 0.2 }, |v, s| v ^ s);
        let j = FullJoint::round1(&spec, &aux).unwrap();
        assert!(j
            .joint()
            .is_markov_chain(&["x1", "x2", "s"], &["y"], &["z"], 1e-10)
            .unwrap());
        assert!(j.joint().is_markov_chain(&["u", "v"], &["y"], &["z"], 1e-10).unwrap());
        // Z marginal crossover matches the direct construction
        let direct = build_modulo_additive(0.2, 0.1, 0.3).unwrap();
        let jd = FullJoint::round1(&direct, &aux).unwrap();
        let a = j.joint().marginalize(&["x1", "x2", "s", "z"]).unwrap();
        let b = jd.joint().marginalize(&["x1", "x2", "s", "z"]).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn round1_degenerate_auxiliaries_reduce() {
        // |U| = |V| = 1: the joint reduces to p(s)p(t|s)p(x1,x2|s)p(y,z|.)
        let spec = build_modulo_additive(0.3, 0.1, 0.2).unwrap();
        let u = Alphabet::singleton("u");
        let v = Alphabet::singleton("v");
        let uv = Var::new("u", u.clone());
        let vv = Var::new("v", v.clone());
        let u_kernel =
            ConditionalPmf::from_fn(vec![spec.s_var()], vec![uv.clone()], |_, _| 1.0).unwrap();
        let v_kernel =
            ConditionalPmf::from_fn(vec![uv.clone(), spec.s_var()], vec![vv.clone()], |_, _| 1.0)
                .unwrap();
        let x1_kernel = ConditionalPmf::deterministic(
            vec![uv.clone(), vv.clone(), spec.s_var()],
            vec![spec.x1_var()],
            |g| vec![g[2]],
        )
        .unwrap();
        let x2_kernel = ConditionalPmf::deterministic(
            vec![uv, vv, spec.s_var()],
            vec![spec.x2_var()],
            |_| vec![0],
        )
        .unwrap();
        let aux = AuxiliaryScheme::new(&spec, u, v, u_kernel, v_kernel, x1_kernel, x2_kernel)
            .unwrap();
        let j = FullJoint::round1(&spec, &aux).unwrap();
        assert!(close(j.joint().mutual_information(&["u", "v"], &["s", "y"]).unwrap(), 0.0, 1e-12));
    }

    #[test]
    fn round1_identity_degrade_gives_full_state_info() {
        // p(t|s) identity -> I(S;T) = H(S)
        let base = build_modulo_additive(0.3, 0.1, 0.2).unwrap();
        let t = Alphabet::binary("t");
        let degrade = ConditionalPmf::deterministic(
            vec![base.s_var()],
            vec![Var::new("t", t.clone())],
            |g| vec![g[0]],
        )
        .unwrap();
        let spec = SdMacSpec::new(
            base.s.clone(),
            t,
            base.x1.clone(),
            base.x2.clone(),
            base.y.clone(),
            base.z.clone(),
            base.state_pmf.clone(),
            degrade,
            base.channel_kernel.clone(),
        )
        .unwrap();
        let aux = scheme_v_only(&spec, |_, _| 0.5, |v, _| v);
        let j = FullJoint::round1(&spec, &aux).unwrap();
        let i_st = j.joint().mutual_information(&["s"], &["t"]).unwrap();
        let h_s = j.joint().entropy(&["s"]).unwrap();
        assert!(close(i_st, h_s, 1e-12));
    }

    fn simple_round2_scheme(
        spec: &SdMacSpec,
        t1_of_y: bool,
    ) -> Round2Scheme {
        let t1 = Alphabet::binary("t1");
        let t2 = Alphabet::binary("t2");
        let input_law = ConditionalPmf::from_fn(
            vec![spec.s_var()],
            vec![spec.x1_var(), spec.x2_var()],
            |_, _| 0.25,
        )
        .unwrap();
        let t1_kernel = ConditionalPmf::from_fn(
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t1", t1.clone())],
            move |g, t| {
                if t1_of_y {
                    if t[0] == g[0] {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    0.5
                }
            },
        )
        .unwrap();
        let t2_kernel = ConditionalPmf::from_fn(
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t2", t2.clone())],
            |_, _| 0.5,
        )
        .unwrap();
        Round2Scheme::new(spec, t1, t2, input_law, t1_kernel, t2_kernel).unwrap()
    }

    #[test]
    fn round2_joint_properties() {
        let spec = build_modulo_additive(0.3, 0.1, 0.2).unwrap();

        // kernels ignoring (Y,T): descriptions carry nothing
        let scheme = simple_round2_scheme(&spec, false);
        let j = FullJoint::round2(&spec, &scheme).unwrap();
        assert!(close(
            j.joint().conditional_mutual_information(&["t1"], &["y"], &["t"]).unwrap(),
            0.0,
            1e-12
        ));

        // T1 a copy of Y (T trivial): I(T1;Y) = H(Y)
        let scheme = simple_round2_scheme(&spec, true);
        let j = FullJoint::round2(&spec, &scheme).unwrap();
        let i = j.joint().mutual_information(&["t1"], &["y"]).unwrap();
        let h = j.joint().entropy(&["y"]).unwrap();
        assert!(close(i, h, 1e-12));
    }

    #[test]
    fn round2_descriptions_conditionally_independent() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(19);
        let spec = build_modulo_additive(0.3, 0.1, 0.2).unwrap();
        let t1 = Alphabet::binary("t1");
        let t2 = Alphabet::new("t2", ["a", "b", "c"]).unwrap();
        let input_law = crate::prob::random_kernel(
            &mut rng,
            vec![spec.s_var()],
            vec![spec.x1_var(), spec.x2_var()],
        );
        let t1_kernel = crate::prob::random_kernel(
            &mut rng,
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t1", t1.clone())],
        );
        let t2_kernel = crate::prob::random_kernel(
            &mut rng,
            vec![spec.y_var(), spec.t_var()],
            vec![Var::new("t2", t2.clone())],
        );
        let scheme = Round2Scheme::new(&spec, t1, t2, input_law, t1_kernel, t2_kernel).unwrap();
        let j = FullJoint::round2(&spec, &scheme).unwrap();
        let i = j
            .joint()
            .conditional_mutual_information(&["t1"], &["t2"], &["y", "t"])
            .unwrap();
        assert!(i <= 1e-10);
    }

    #[test]
    fn invalid_probability_rejected() {
        assert!(build_stuck_at(1.5, EveMode::Uninformative).is_err());
        assert!(build_modulo_additive(0.2, -0.1, 0.3).is_err());
        assert!(!modadd_regime_ok(0.4, 0.2));
    }
}
