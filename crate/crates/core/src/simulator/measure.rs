//! The reliable set `B_n(gamma)` and the null law conditioned on it.
//!
//! For a deterministic symbolwise encoder `x^n = f(u^n)`,
//! `B_n(gamma) = {(u^n, v^n) : P_{Y^n|X^n}(A(v^n) | f(u^n)) >= gamma}`.
//! Averaging the acceptance probability gives
//! `1 - alpha <= P(B) + (1 - P(B)) gamma`, so
//! `P(B) >= (1 - alpha - gamma) / (1 - gamma)` at every blocklength; with
//! `gamma = (1 - eps)/2` and `alpha <= eps` this is `(1 - eps)/(1 + eps)`.

use rayon::prelude::*;

use super::{exact_errors, DecisionRule, ExplicitRule, TestInstance};
use crate::error::{Error, Result};
use crate::probcore::{conditional_mutual_information, Joint3};
use crate::sequence::{kronecker, SequenceSpace};

/// Largest `|U|^n |V|^n` and `|V|^n |X|^n |Y|^n` handled.
pub const MAX_MEASURE_SPACE: u128 = 1 << 26;

/// Largest `|V|^n |Y|^n |U|^n` for the exact Markov check.
pub const MAX_MARKOV_SPACE: u128 = 1 << 22;

/// Relative slack for floating-point comparisons.
const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ReliableSet {
    pub gamma: f64,
    pub n: usize,
    pub nu: usize,
    pub nv: usize,
    /// Indexed by `v_index * |U|^n + u_index`.
    pub members: Vec<bool>,
    pub prob: f64,
    /// Exact type-I error of the instance.
    pub alpha: f64,
    /// `(1 - alpha - gamma) / (1 - gamma)`.
    pub lower_bound: f64,
}

impl ReliableSet {
    pub fn bound_holds(&self) -> bool {
        self.prob >= self.lower_bound - REL_TOL
    }

    pub fn contains(&self, u_index: usize, v_index: usize) -> bool {
        self.members[v_index * self.nu.pow(self.n as u32) + u_index]
    }
}

struct Spaces {
    u: SequenceSpace,
    v: SequenceSpace,
    x: SequenceSpace,
    y: SequenceSpace,
}

fn spaces(inst: &TestInstance) -> Result<Spaces> {
    let n = inst.n();
    let s = Spaces {
        u: SequenceSpace::new(inst.source.n_rows(), n)?,
        v: SequenceSpace::new(inst.source.n_cols(), n)?,
        x: SequenceSpace::new(inst.dmc.n_inputs(), n)?,
        y: SequenceSpace::new(inst.dmc.n_outputs(), n)?,
    };
    let uv = s.u.total() as u128 * s.v.total() as u128;
    let vxy = s.v.total() as u128 * s.x.total() as u128 * s.y.total() as u128;
    let needed = uv.max(vxy);
    if needed > MAX_MEASURE_SPACE {
        return Err(Error::TooLarge {
            what: "reliable-set enumeration",
            needed,
            limit: MAX_MEASURE_SPACE,
        });
    }
    Ok(s)
}

fn encoder_map(inst: &TestInstance) -> Result<Vec<usize>> {
    inst.encoder.deterministic_map().ok_or_else(|| {
        Error::Unsupported("the reliable set needs a deterministic symbolwise encoder".into())
    })
}

/// `x^n` index for every `u^n` index.
fn encode_all(s: &Spaces, f: &[usize]) -> Vec<usize> {
    (0..s.u.total())
        .map(|ui| {
            let x: Vec<usize> = s.u.digits(ui).into_iter().map(|u| f[u]).collect();
            s.x.index_of(&x).expect("encoder output in range")
        })
        .collect()
}

/// `P(y^n | x^n)` for every `x^n`, each a vector over `y^n`.
fn channel_tables(inst: &TestInstance, s: &Spaces) -> Vec<Vec<f64>> {
    let w = inst.dmc.transition();
    (0..s.x.total())
        .into_par_iter()
        .map(|xi| {
            let x = s.x.digits(xi);
            let rows: Vec<&[f64]> = x.iter().map(|&a| w.row(a)).collect();
            kronecker(&rows)
        })
        .collect()
}

/// `P_UV(u^n, v^n)`, indexed like [`ReliableSet::members`].
fn source_weights(inst: &TestInstance, s: &Spaces) -> Vec<f64> {
    let ut = s.u.total();
    let mut w = vec![0.0; ut * s.v.total()];
    for vi in 0..s.v.total() {
        let v = s.v.digits(vi);
        for ui in 0..ut {
            let mut p = 1.0;
            let mut rest = ui;
            for &vk in &v {
                p *= inst.source.get(rest % s.u.alphabet_size(), vk);
                rest /= s.u.alphabet_size();
            }
            w[vi * ut + ui] = p;
        }
    }
    w
}

pub fn reliable_set(inst: &TestInstance, gamma: f64) -> Result<ReliableSet> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma must be in [0, 1), got {gamma}")));
    }
    let f = encoder_map(inst)?;
    let s = spaces(inst)?;
    let rule: ExplicitRule = inst.rule.materialize()?;
    let alpha = exact_errors(&inst.with_rule(DecisionRule::Explicit(rule.clone()))?)?.alpha;
    let x_of_u = encode_all(&s, &f);
    let chan = channel_tables(inst, &s);
    // acceptance probability of A(v^n) given x^n
    let accept: Vec<Vec<f64>> = (0..s.v.total())
        .into_par_iter()
        .map(|vi| {
            let region = rule.region(vi);
            chan.iter().map(|py| region.iter().map(|yi| py[yi]).sum()).collect()
        })
        .collect();
    let weights = source_weights(inst, &s);
    let ut = s.u.total();
    let mut members = vec![false; weights.len()];
    let mut prob = 0.0;
    for vi in 0..s.v.total() {
        for ui in 0..ut {
            if accept[vi][x_of_u[ui]] >= gamma {
                members[vi * ut + ui] = true;
                prob += weights[vi * ut + ui];
            }
        }
    }
    Ok(ReliableSet {
        gamma,
        n: inst.n(),
        nu: s.u.alphabet_size(),
        nv: s.v.alphabet_size(),
        members,
        prob: prob.min(1.0),
        alpha,
        lower_bound: (1.0 - alpha - gamma) / (1.0 - gamma),
    })
}

/// Checks on the null law of `(U^n, V^n, X^n, Y^n)` conditioned on `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationReport {
    pub epsilon: f64,
    pub prob_b: f64,
    /// `(1 + eps)/(1 - eps)`.
    pub factor: f64,
    /// `P(B) >= (1 - eps)/(1 + eps)`.
    pub prob_bound_holds: bool,
    /// `max_v P~_V(v^n) / P_V(v^n)`.
    pub max_ratio_v: f64,
    pub max_ratio_y: f64,
    /// `KL(P~_UVX || P_UVX)` computed point by point.
    pub kl: f64,
    /// `I(V~; X~ | U~)`.
    pub markov_vx: f64,
    /// `I(V~; Y~ | U~)`, when the joint space is small enough.
    pub markov_vy: Option<f64>,
}

impl TruncationReport {
    pub fn kl_identity_holds(&self) -> bool {
        (self.kl - (1.0 / self.prob_b).ln()).abs() <= 1e-9
    }

    pub fn kl_bound_holds(&self) -> bool {
        self.kl <= self.factor.ln() + 1e-9
    }

    /// `P~_V <= P_V / P(B)` pointwise, which needs no assumption.
    pub fn conditioning_holds(&self) -> bool {
        let cap = (1.0 / self.prob_b) * (1.0 + REL_TOL);
        self.max_ratio_v <= cap && self.max_ratio_y <= cap
    }

    pub fn domination_v_holds(&self) -> bool {
        self.max_ratio_v <= self.factor * (1.0 + REL_TOL)
    }

    pub fn domination_y_holds(&self) -> bool {
        self.max_ratio_y <= self.factor * (1.0 + REL_TOL)
    }

    pub fn markov_holds(&self) -> bool {
        self.markov_vx <= 1e-9 && self.markov_vy.is_none_or(|m| m <= 1e-9)
    }

    pub fn passes(&self) -> bool {
        self.prob_bound_holds
            && self.conditioning_holds()
            && self.domination_v_holds()
            && self.domination_y_holds()
            && self.kl_identity_holds()
            && self.kl_bound_holds()
            && self.markov_holds()
    }
}

pub fn truncated_measure(inst: &TestInstance, set: &ReliableSet, epsilon: f64) -> Result<TruncationReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    let f = encoder_map(inst)?;
    let s = spaces(inst)?;
    if set.n != inst.n() || set.nu != s.u.alphabet_size() || set.nv != s.v.alphabet_size() {
        return Err(Error::ShapeMismatch("reliable set belongs to another instance".into()));
    }
    let weights = source_weights(inst, &s);
    if set.members.len() != weights.len() {
        return Err(Error::ShapeMismatch("reliable set has the wrong size".into()));
    }
    let prob_b: f64 = weights.iter().zip(&set.members).filter(|(_, &m)| m).map(|(w, _)| w).sum();
    if prob_b <= 0.0 {
        return Err(Error::InvalidParameter("the reliable set has probability 0".into()));
    }
    let x_of_u = encode_all(&s, &f);
    let chan = channel_tables(inst, &s);
    let (ut, vt, xt, yt) = (s.u.total(), s.v.total(), s.x.total(), s.y.total());

    let mut pv = vec![0.0; vt];
    let mut pv_t = vec![0.0; vt];
    let mut px = vec![0.0; xt];
    let mut px_t = vec![0.0; xt];
    let mut kl = 0.0;
    for vi in 0..vt {
        for ui in 0..ut {
            let w = weights[vi * ut + ui];
            pv[vi] += w;
            px[x_of_u[ui]] += w;
            if set.members[vi * ut + ui] && w > 0.0 {
                let wt = w / prob_b;
                pv_t[vi] += wt;
                px_t[x_of_u[ui]] += wt;
                kl += wt * (wt / w).ln();
            }
        }
    }
    let mut py = vec![0.0; yt];
    let mut py_t = vec![0.0; yt];
    for xi in 0..xt {
        for yi in 0..yt {
            py[yi] += px[xi] * chan[xi][yi];
            py_t[yi] += px_t[xi] * chan[xi][yi];
        }
    }
    let max_ratio = |tilde: &[f64], base: &[f64]| -> f64 {
        tilde
            .iter()
            .zip(base)
            .map(|(&t, &b)| {
                if t == 0.0 {
                    0.0
                } else if b == 0.0 {
                    f64::INFINITY
                } else {
                    t / b
                }
            })
            .fold(0.0, f64::max)
    };

    // X~ is a function of U~, so I(V~;X~|U~) = 0 by construction; the
    // check below recomputes it from the conditioned joint.
    let mut vxu = vec![0.0; vt * xt * ut];
    for vi in 0..vt {
        for ui in 0..ut {
            if set.members[vi * ut + ui] {
                vxu[(vi * xt + x_of_u[ui]) * ut + ui] += weights[vi * ut + ui] / prob_b;
            }
        }
    }
    let markov_vx = conditional_mutual_information(&Joint3::from_weights([vt, xt, ut], &vxu)?);
    let markov_vy = if (vt as u128) * (yt as u128) * (ut as u128) <= MAX_MARKOV_SPACE {
        let mut vyu = vec![0.0; vt * yt * ut];
        for vi in 0..vt {
            for ui in 0..ut {
                if set.members[vi * ut + ui] {
                    let w = weights[vi * ut + ui] / prob_b;
                    let py_x = &chan[x_of_u[ui]];
                    for yi in 0..yt {
                        vyu[(vi * yt + yi) * ut + ui] += w * py_x[yi];
                    }
                }
            }
        }
        Some(conditional_mutual_information(&Joint3::from_weights([vt, yt, ut], &vyu)?))
    } else {
        None
    };

    let factor = (1.0 + epsilon) / (1.0 - epsilon);
    Ok(TruncationReport {
        epsilon,
        prob_b,
        factor,
        prob_bound_holds: prob_b >= (1.0 - epsilon) / (1.0 + epsilon) - REL_TOL,
        max_ratio_v: max_ratio(&pv_t, &pv),
        max_ratio_y: max_ratio(&py_t, &py),
        kl,
        markov_vx,
        markov_vy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::Dmc;
    use crate::probcore::{bsc, dsbs, CondPmf};
    use crate::simulator::{tuned_likelihood_instance, Encoder};

    fn demo() -> TestInstance {
        let enc = Encoder::symbolwise(CondPmf::identity(2).unwrap(), 4).unwrap();
        tuned_likelihood_instance(&dsbs(0.1).unwrap(), &Dmc::new(bsc(0.1).unwrap()), enc, 0.3)
            .unwrap()
            .0
    }

    #[test]
    fn trivial_rules() {
        let inst = demo();
        let all = inst.with_rule(DecisionRule::accept_all(2, 2, 4).unwrap()).unwrap();
        let b = reliable_set(&all, 0.9).unwrap();
        assert!((b.prob - 1.0).abs() < 1e-12);
        let r = truncated_measure(&all, &b, 0.3).unwrap();
        assert!(r.kl.abs() < 1e-12);
        assert!((r.max_ratio_v - 1.0).abs() < 1e-12);
        let none = inst.with_rule(DecisionRule::accept_none(2, 2, 4).unwrap()).unwrap();
        let b = reliable_set(&none, 0.1).unwrap();
        assert_eq!(b.prob, 0.0);
        assert!(truncated_measure(&none, &b, 0.3).is_err());
    }

    #[test]
    fn demo_instance_passes() {
        let inst = demo();
        let b = reliable_set(&inst, 0.35).unwrap();
        assert!(b.alpha <= 0.3);
        assert!(b.bound_holds());
        assert!(b.prob >= 0.7 / 1.3);
        let r = truncated_measure(&inst, &b, 0.3).unwrap();
        assert!(r.passes(), "{r:?}");
        assert!(r.markov_vy.is_some());
    }

    #[test]
    fn half_mass_set_costs_ln2() {
        let inst = demo();
        let mut b = reliable_set(&inst, 0.0).unwrap();
        // V^n uniform: keep the v^n with a leading zero, half the mass
        let ut = 16;
        for vi in 0..16 {
            for ui in 0..ut {
                b.members[vi * ut + ui] = vi % 2 == 0;
            }
        }
        let r = truncated_measure(&inst, &b, 0.3).unwrap();
        assert!((r.prob_b - 0.5).abs() < 1e-12);
        assert!((r.kl - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(r.kl_identity_holds());
    }

    #[test]
    fn needs_deterministic_encoder() {
        let enc = Encoder::symbolwise(CondPmf::new(2, 2, vec![0.9, 0.1, 0.1, 0.9]).unwrap(), 3).unwrap();
        let (inst, _) = tuned_likelihood_instance(&dsbs(0.1).unwrap(), &Dmc::new(bsc(0.1).unwrap()), enc, 0.3).unwrap();
        assert!(matches!(reliable_set(&inst, 0.35), Err(Error::Unsupported(_))));
    }
}
