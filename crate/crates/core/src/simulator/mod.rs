//! Finite-blocklength testing against independence over a channel.
//!
//! Under the null `(U_i, V_i)` are i.i.d. `P_UV`; under the alternative
//! they are i.i.d. `P_U x P_V`. The sensor maps `u^n` to `x^n`, the channel
//! delivers `y^n`, and the detector decides from `(y^n, v^n)`.

pub mod encoder;
pub mod measure;
pub mod rule;

pub use encoder::{Codebook, Encoder, EncoderKind};
pub use measure::{reliable_set, truncated_measure, ReliableSet, TruncationReport};
pub use rule::{
    for_each_type, likelihood_scores, per_letter_null, threshold_errors, threshold_for_alpha,
    DecisionRule, ExplicitRule, ThresholdRule,
};

use rayon::prelude::*;

use crate::blowup::{hamming_neighborhood, penalty_factor_log};
use crate::capacity::Dmc;
use crate::error::{Error, Result};
use crate::probcore::JointPmf;
use crate::rng::{derive_stream, Categorical, StreamRng};
use crate::sequence::kronecker;
use rule::error_pair;

/// Trials per Monte-Carlo chunk; each chunk owns one random stream.
pub const MC_CHUNK: u64 = 4096;

/// Uniforms consumed per letter per trial, used or not.
const UNIFORMS_PER_LETTER: usize = 4;

const NULL_STREAM: u64 = 0x4E55_4C4C;
const ALT_STREAM: u64 = 0x414C_5400;

/// Miss probability of the reported Hoeffding interval (99% confidence).
pub const MC_DELTA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct TestInstance {
    pub source: JointPmf,
    pub dmc: Dmc,
    pub encoder: Encoder,
    pub rule: DecisionRule,
}

impl TestInstance {
    pub fn new(source: JointPmf, dmc: Dmc, encoder: Encoder, rule: DecisionRule) -> Result<Self> {
        if encoder.n_inputs() != source.n_rows() {
            return Err(Error::AlphabetMismatch(format!(
                "encoder reads {} symbols, source U has {}",
                encoder.n_inputs(),
                source.n_rows()
            )));
        }
        if encoder.n_outputs() != dmc.n_inputs() {
            return Err(Error::AlphabetMismatch(format!(
                "encoder emits {} symbols, channel takes {}",
                encoder.n_outputs(),
                dmc.n_inputs()
            )));
        }
        if rule.ny() != dmc.n_outputs() || rule.nv() != source.n_cols() {
            return Err(Error::AlphabetMismatch(format!(
                "rule reads {} x {} symbols, instance has |Y| = {} and |V| = {}",
                rule.ny(),
                rule.nv(),
                dmc.n_outputs(),
                source.n_cols()
            )));
        }
        if rule.n() != encoder.n() {
            return Err(Error::ShapeMismatch(format!(
                "rule blocklength {} differs from encoder blocklength {}",
                rule.n(),
                encoder.n()
            )));
        }
        Ok(Self {
            source,
            dmc,
            encoder,
            rule,
        })
    }

    pub fn n(&self) -> usize {
        self.encoder.n()
    }

    pub fn with_rule(&self, rule: DecisionRule) -> Result<Self> {
        Self::new(self.source.clone(), self.dmc.clone(), self.encoder.clone(), rule)
    }

    /// Per-letter law of `(Y, V)` under the null and the alternative, for
    /// symbolwise encoders.
    pub fn letter_laws(&self) -> Result<(JointPmf, JointPmf)> {
        let map = self.encoder.symbol_map().ok_or_else(|| {
            Error::Unsupported("codebook encoders have no per-letter law; use Monte Carlo".into())
        })?;
        let null = per_letter_null(&self.source, map, &self.dmc)?;
        let alt = null.independent_version();
        Ok((null, alt))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMethod {
    Exact,
    MonteCarlo { trials: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub method: EstimateMethod,
    pub ci_halfwidth: f64,
    /// `-ln(beta)/n`, `+inf` when `beta = 0`.
    pub beta_exponent: f64,
}

impl ErrorEstimate {
    fn new(n: usize, alpha: f64, beta: f64, method: EstimateMethod, ci_halfwidth: f64) -> Self {
        let beta_exponent = if beta > 0.0 {
            -beta.ln() / n as f64
        } else {
            f64::INFINITY
        };
        Self {
            n,
            alpha,
            beta,
            method,
            ci_halfwidth,
            beta_exponent,
        }
    }
}

/// Exact type-I and type-II errors of a symbolwise scheme.
pub fn exact_errors(inst: &TestInstance) -> Result<ErrorEstimate> {
    let (null, alt) = inst.letter_laws()?;
    let n = inst.n();
    let (alpha, beta) = match &inst.rule {
        DecisionRule::Threshold(t) => threshold_errors(t, null.as_slice(), alt.as_slice())?,
        DecisionRule::Explicit(e) => explicit_errors(e, &null)?,
    };
    Ok(ErrorEstimate::new(n, alpha, beta, EstimateMethod::Exact, 0.0))
}

fn explicit_errors(rule: &ExplicitRule, null: &JointPmf) -> Result<(f64, f64)> {
    let (p_y, p_v) = null.marginals();
    let (ys, vs) = (rule.y_space(), rule.v_space());
    let p_y_n = ys.product_weights(&p_y)?;
    let y_given_v: Vec<Vec<f64>> = (0..null.n_cols())
        .map(|v| {
            if p_v.get(v) > 0.0 {
                (0..null.n_rows()).map(|y| null.get(y, v) / p_v.get(v)).collect()
            } else {
                vec![0.0; null.n_rows()]
            }
        })
        .collect();
    let parts: Vec<[f64; 4]> = (0..vs.total())
        .into_par_iter()
        .map(|vi| {
            let v = vs.digits(vi);
            let pv: f64 = v.iter().map(|&s| p_v.get(s)).product();
            if pv == 0.0 {
                return [0.0; 4];
            }
            let factors: Vec<&[f64]> = v.iter().map(|&s| y_given_v[s].as_slice()).collect();
            let cond = kronecker(&factors);
            let region = rule.region(vi);
            let mut m = [0.0; 4];
            for yi in 0..ys.total() {
                if region.contains(yi) {
                    m[0] += cond[yi];
                    m[2] += p_y_n[yi];
                } else {
                    m[1] += cond[yi];
                    m[3] += p_y_n[yi];
                }
            }
            m.map(|x| pv * x)
        })
        .collect();
    let total = |k: usize| parts.iter().map(|p| p[k]).sum::<f64>();
    Ok(error_pair(total(0), total(1), total(2), total(3)))
}

/// `sqrt(ln(2/0.01) / (2 trials))`.
pub fn hoeffding_halfwidth(trials: u64) -> f64 {
    ((2.0 / MC_DELTA).ln() / (2.0 * trials as f64)).sqrt()
}

/// Monte-Carlo estimate; every draw is a function of `(seed, chunk)`, so the
/// result does not depend on the thread count.
pub fn monte_carlo_errors(inst: &TestInstance, trials: u64, seed: u64) -> Result<ErrorEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let n = inst.n();
    let (nu, nv) = (inst.source.n_rows(), inst.source.n_cols());
    let pair = Categorical::new(inst.source.as_slice());
    let (p_u, p_v) = inst.source.marginals();
    let u_marg = Categorical::new(p_u.as_slice());
    let v_marg = Categorical::new(p_v.as_slice());
    let enc = inst.encoder.samplers();
    let chan: Vec<Categorical> = (0..inst.dmc.n_inputs())
        .map(|x| Categorical::new(inst.dmc.transition().row(x)))
        .collect();
    let chunks = trials.div_ceil(MC_CHUNK);
    let run = |alt: bool, chunk: u64| -> u64 {
        let base = if alt { ALT_STREAM } else { NULL_STREAM };
        let mut rng = StreamRng::new(seed, derive_stream(base, chunk), 0);
        let count = MC_CHUNK.min(trials - chunk * MC_CHUNK);
        let mut draws = vec![0.0; UNIFORMS_PER_LETTER * n];
        let (mut u, mut v, mut x, mut y) = (vec![0; n], vec![0; n], vec![0; n], vec![0; n]);
        let mut enc_draws = vec![0.0; n];
        let mut counts = vec![0u32; inst.rule.ny() * nv];
        let mut errors = 0;
        for _ in 0..count {
            draws.iter_mut().for_each(|d| *d = rng.uniform());
            for i in 0..n {
                let d = &draws[UNIFORMS_PER_LETTER * i..UNIFORMS_PER_LETTER * (i + 1)];
                if alt {
                    u[i] = u_marg.sample_with(d[0]);
                    v[i] = v_marg.sample_with(d[3]);
                } else {
                    let k = pair.sample_with(d[0]);
                    u[i] = k / nv;
                    v[i] = k % nv;
                }
                enc_draws[i] = d[1];
            }
            debug_assert!(u.iter().all(|&s| s < nu));
            inst.encoder.encode(&u, &enc_draws, &enc, &mut x);
            for i in 0..n {
                y[i] = chan[x[i]].sample_with(draws[UNIFORMS_PER_LETTER * i + 2]);
            }
            let accept = inst.rule.accepts(&y, &v, &mut counts);
            if accept == alt {
                errors += 1;
            }
        }
        errors
    };
    let null_errors: u64 = (0..chunks).into_par_iter().map(|c| run(false, c)).sum();
    let alt_errors: u64 = (0..chunks).into_par_iter().map(|c| run(true, c)).sum();
    Ok(ErrorEstimate::new(
        n,
        null_errors as f64 / trials as f64,
        alt_errors as f64 / trials as f64,
        EstimateMethod::MonteCarlo { trials, seed },
        hoeffding_halfwidth(trials),
    ))
}

/// Replaces every `A(v^n)` by its Hamming `l`-neighbourhood.
pub fn blow_up_rule(rule: &DecisionRule, l: usize) -> Result<DecisionRule> {
    match rule {
        DecisionRule::Threshold(_) => Err(Error::Unsupported(
            "blow-up needs an explicit rule; materialize the threshold rule first".into(),
        )),
        DecisionRule::Explicit(e) => Ok(DecisionRule::Explicit(
            e.map_regions(|r| hamming_neighborhood(r, l))?,
        )),
    }
}

/// Exact errors of a rule and of its blow-up, with the multiplicative
/// type-II slack that the blow-up is allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyCheck {
    pub l: usize,
    pub original: ErrorEstimate,
    pub blown: ErrorEstimate,
    pub penalty_log: f64,
}

impl PenaltyCheck {
    /// `beta(blown) <= beta(original) exp(penalty)`.
    pub fn holds(&self) -> bool {
        self.blown.beta <= self.original.beta * self.penalty_log.exp() * (1.0 + 1e-12)
    }

    pub fn monotone(&self) -> bool {
        self.blown.alpha <= self.original.alpha + 1e-12 && self.blown.beta + 1e-12 >= self.original.beta
    }
}

pub fn penalty_check(inst: &TestInstance, l: usize) -> Result<PenaltyCheck> {
    let explicit = DecisionRule::Explicit(inst.rule.materialize()?);
    let orig_inst = inst.with_rule(explicit.clone())?;
    let blown_inst = inst.with_rule(blow_up_rule(&explicit, l)?)?;
    Ok(PenaltyCheck {
        l,
        original: exact_errors(&orig_inst)?,
        blown: exact_errors(&blown_inst)?,
        penalty_log: penalty_factor_log(inst.n(), l, inst.dmc.n_outputs(), inst.dmc.p_floor())?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    /// Least-squares slope of `-ln beta_n` against `n`.
    pub slope: f64,
    pub intercept: f64,
    /// `(n, -ln(beta_n)/n)`.
    pub per_n: Vec<(usize, f64)>,
}

pub fn exponent_estimate(points: &[(usize, f64)]) -> Result<ExponentFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 blocklengths, got {}",
            points.len()
        )));
    }
    for &(n, beta) in points {
        if n == 0 {
            return Err(Error::InvalidParameter("blocklength 0".into()));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta at n = {n} is {beta}; the exponent is undefined"
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| -p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("blocklengths must not all be equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(ExponentFit {
        slope,
        intercept: my - slope * mx,
        per_n: points.iter().zip(&ys).map(|(&(n, _), y)| (n, y / n as f64)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverseReport {
    pub pass: bool,
    /// `theta + slack - estimate`.
    pub margin: f64,
}

pub fn converse_check(estimate: f64, theta: f64, slack: f64) -> Result<ConverseReport> {
    if !(slack >= 0.0) {
        return Err(Error::InvalidParameter(format!("slack must be >= 0, got {slack}")));
    }
    let margin = theta + slack - estimate;
    Ok(ConverseReport {
        pass: margin >= 0.0,
        margin,
    })
}

/// Symbolwise instance with a likelihood-ratio rule tuned so that the exact
/// type-I error is the largest achievable value not above `target_alpha`.
pub fn tuned_likelihood_instance(
    source: &JointPmf,
    dmc: &Dmc,
    encoder: Encoder,
    target_alpha: f64,
) -> Result<(TestInstance, f64)> {
    let map = encoder
        .symbol_map()
        .ok_or_else(|| Error::Unsupported("tuning needs a symbolwise encoder".into()))?;
    let null = per_letter_null(source, map, dmc)?;
    let alt = null.independent_version();
    let base = ThresholdRule::new(
        null.n_rows(),
        null.n_cols(),
        encoder.n(),
        likelihood_scores(&null),
        0.0,
    )?;
    let (rule, alpha) = threshold_for_alpha(&base, null.as_slice(), alt.as_slice(), target_alpha)?;
    let inst = TestInstance::new(source.clone(), dmc.clone(), encoder, DecisionRule::Threshold(rule))?;
    Ok((inst, alpha))
}

/// Capacity-achieving input law paired with a codebook encoder.
pub fn codebook_instance(
    source: &JointPmf,
    dmc: &Dmc,
    book: Codebook,
    rule: DecisionRule,
) -> Result<TestInstance> {
    TestInstance::new(source.clone(), dmc.clone(), Encoder::codebook(book), rule)
}
