//! Relaxed single-letter bound
//!
//! ```text
//! R^s_{mu,nu} = max over P_{U~V~W~} of
//!     I(V~;W~) + mu C - mu I(U~;W~)
//!       - (nu+mu) I(V~;W~|U~) - (nu+mu) D(P_{U~V~} || P_UV)
//! ```
//!
//! over full joints on `U x V x W~` with `|W~| = |U| + 1`. Expanding into
//! entropies,
//!
//! ```text
//! G = mu C + H(V) + (1-mu) H(W) - H(VW) + nu H(U) - nu H(UW)
//!       + (nu+mu) H(UVW) + (nu+mu) sum q(u,v) ln P(u,v)
//! ```
//!
//! which is ascended by exponentiated-gradient steps on the simplex with a
//! backtracking step size. At step `1/(nu+mu)` the `H(UVW)` term cancels
//! the mirror map and the update becomes a closed-form reweighting of `P_UV`.

use super::lagrangian::{Bottleneck, LagrangianOptions};
use crate::error::{Error, Result};
use crate::probcore::{compose, entropy_of, Joint3, JointPmf};
use crate::rng::{derive_stream, StreamRng};

const RESTART_STREAM: u64 = 0x5E5E_0002;

#[derive(Debug, Clone)]
pub struct SingleLetterOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for SingleLetterOptions {
    fn default() -> Self {
        Self {
            restarts: 64,
            seed: 0,
            max_iter: 3_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SingleLetterPoint {
    pub value: f64,
    /// Maximizing joint over `(U~, V~, W~)`.
    pub joint: Joint3,
    /// Value of the always-evaluated candidate `P~ = P`, `W` from the
    /// `theta_mu` maximizer.
    pub theta_mu_candidate: f64,
}

struct Relaxed {
    nu: usize,
    nv: usize,
    nw: usize,
    ln_p_uv: Vec<f64>,
    support: Vec<bool>,
    mu: f64,
    nu_pen: f64,
    capacity: f64,
}

struct Marginals {
    u: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    uv: Vec<f64>,
    uw: Vec<f64>,
    vw: Vec<f64>,
}

impl Relaxed {
    fn kappa(&self) -> f64 {
        self.nu_pen + self.mu
    }

    fn idx(&self, u: usize, v: usize, w: usize) -> usize {
        (u * self.nv + v) * self.nw + w
    }

    fn marginals(&self, q: &[f64]) -> Marginals {
        let (nu, nv, nw) = (self.nu, self.nv, self.nw);
        let mut m = Marginals {
            u: vec![0.0; nu],
            v: vec![0.0; nv],
            w: vec![0.0; nw],
            uv: vec![0.0; nu * nv],
            uw: vec![0.0; nu * nw],
            vw: vec![0.0; nv * nw],
        };
        for u in 0..nu {
            for v in 0..nv {
                for w in 0..nw {
                    let p = q[self.idx(u, v, w)];
                    m.u[u] += p;
                    m.v[v] += p;
                    m.w[w] += p;
                    m.uv[u * nv + v] += p;
                    m.uw[u * nw + w] += p;
                    m.vw[v * nw + w] += p;
                }
            }
        }
        m
    }

    fn objective(&self, q: &[f64]) -> f64 {
        let m = self.marginals(q);
        let k = self.kappa();
        let mut cross = 0.0;
        for (i, &p) in m.uv.iter().enumerate() {
            if p > 0.0 {
                if !self.support[i] {
                    return f64::NEG_INFINITY;
                }
                cross += p * self.ln_p_uv[i];
            }
        }
        self.mu * self.capacity + entropy_of(&m.v) + (1.0 - self.mu) * entropy_of(&m.w)
            - entropy_of(&m.vw)
            + self.nu_pen * (entropy_of(&m.u) - entropy_of(&m.uw))
            + k * entropy_of(q)
            + k * cross
    }

    /// Exponentiated-gradient step of size `eta` from `q` into `out`.
    fn step(&self, q: &[f64], m: &Marginals, eta: f64, out: &mut [f64]) {
        let (nv, nw) = (self.nv, self.nw);
        let k = self.kappa();
        let mut max_logit = f64::NEG_INFINITY;
        for u in 0..self.nu {
            for v in 0..nv {
                for w in 0..nw {
                    let i = self.idx(u, v, w);
                    let p = q[i];
                    if p <= 0.0 {
                        out[i] = f64::NEG_INFINITY;
                        continue;
                    }
                    let grad = -m.v[v].ln() - (1.0 - self.mu) * m.w[w].ln()
                        + m.vw[v * nw + w].ln()
                        + self.nu_pen * (m.uw[u * nw + w].ln() - m.u[u].ln())
                        - k * p.ln()
                        + k * self.ln_p_uv[u * nv + v];
                    let logit = p.ln() + eta * grad;
                    out[i] = logit;
                    max_logit = max_logit.max(logit);
                }
            }
        }
        let mut z = 0.0;
        for o in out.iter_mut() {
            *o = if o.is_finite() { (*o - max_logit).exp() } else { 0.0 };
            z += *o;
        }
        out.iter_mut().for_each(|o| *o /= z);
    }

    fn ascend(&self, q: &mut Vec<f64>, max_iter: usize) -> f64 {
        let mut best = self.objective(q);
        let mut eta = 1.0 / self.kappa();
        let mut next = vec![0.0; q.len()];
        for _ in 0..max_iter {
            let m = self.marginals(q);
            let mut improved = None;
            for _ in 0..40 {
                self.step(q, &m, eta, &mut next);
                let val = self.objective(&next);
                if val > best {
                    improved = Some(val);
                    break;
                }
                eta *= 0.5;
            }
            let Some(val) = improved else { break };
            std::mem::swap(q, &mut next);
            let gain = val - best;
            best = val;
            if gain < 1e-14 {
                break;
            }
            eta = (eta * 1.5).min(4.0 / self.kappa());
        }
        best
    }
}

/// `R^s_{mu,nu}(P_UV, C)` by multi-restart ascent.
pub fn r_s_mu_nu(
    source: &JointPmf,
    capacity: f64,
    mu: f64,
    nu: f64,
    restarts: usize,
    seed: u64,
) -> Result<f64> {
    let opts = SingleLetterOptions {
        restarts,
        seed,
        ..Default::default()
    };
    Ok(r_s_mu_nu_with(source, capacity, mu, nu, &opts)?.value)
}

pub fn r_s_mu_nu_with(
    source: &JointPmf,
    capacity: f64,
    mu: f64,
    nu: f64,
    opts: &SingleLetterOptions,
) -> Result<SingleLetterPoint> {
    if !(mu > 0.0 && nu > 0.0) || !mu.is_finite() || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "mu and nu must be > 0, got mu={mu} nu={nu}"
        )));
    }
    if opts.restarts < 1 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }
    if !(capacity >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "capacity must be >= 0, got {capacity}"
        )));
    }
    let (n_u, n_v) = (source.n_rows(), source.n_cols());
    let n_w = n_u + 1;
    let probs = source.as_slice();
    let problem = Relaxed {
        nu: n_u,
        nv: n_v,
        nw: n_w,
        ln_p_uv: probs.iter().map(|&p| if p > 0.0 { p.ln() } else { 0.0 }).collect(),
        support: probs.iter().map(|&p| p > 0.0).collect(),
        mu,
        nu_pen: nu,
        capacity,
    };

    // P~ = P with the theta_mu maximizer: feasible with zero penalties
    let lag = LagrangianOptions {
        restarts: opts.restarts,
        seed: opts.seed,
        ..Default::default()
    };
    let hyper = Bottleneck::new(source).solve(mu, &lag, &[])?;
    let anchor = compose(source, hyper.aux.cond())?;
    let anchor_value = problem.objective(anchor.as_slice());

    let mut best_value = anchor_value;
    let mut best_q = anchor.as_slice().to_vec();
    for r in 0..opts.restarts {
        let mut q = if r == 0 {
            anchor.as_slice().to_vec()
        } else if r == 1 {
            // anchor smoothed to full support so every cell can move
            let mut q = anchor.as_slice().to_vec();
            for u in 0..n_u {
                for v in 0..n_v {
                    let puv = probs[u * n_v + v];
                    for w in 0..n_w {
                        let i = problem.idx(u, v, w);
                        q[i] = 0.9 * q[i] + 0.1 * puv / n_w as f64;
                    }
                }
            }
            q
        } else {
            let mut rng = StreamRng::new(opts.seed, derive_stream(RESTART_STREAM, r as u64), 0);
            let mut q = vec![0.0; n_u * n_v * n_w];
            for u in 0..n_u {
                for v in 0..n_v {
                    let puv = probs[u * n_v + v];
                    if puv <= 0.0 {
                        continue;
                    }
                    let mut row: Vec<f64> =
                        (0..n_w).map(|_| -(1.0 - rng.uniform()).ln()).collect();
                    let z: f64 = row.iter().sum();
                    row.iter_mut().for_each(|x| *x /= z);
                    for w in 0..n_w {
                        q[problem.idx(u, v, w)] = puv * row[w];
                    }
                }
            }
            q
        };
        let val = problem.ascend(&mut q, opts.max_iter);
        if val > best_value + 1e-12 {
            best_value = val;
            best_q = q;
        }
    }
    Ok(SingleLetterPoint {
        value: best_value,
        joint: Joint3::from_weights([n_u, n_v, n_w], &best_q)?,
        theta_mu_candidate: anchor_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::theta_mu;
    use crate::probcore::{
        conditional_mutual_information, dsbs, kl_divergence, mutual_information, product, Pmf,
    };

    /// The objective straight from its definition.
    fn reference_objective(src: &JointPmf, c: f64, mu: f64, nu: f64, j: &Joint3) -> f64 {
        let ivw = mutual_information(&j.pair(1, 2).unwrap());
        let iuw = mutual_information(&j.pair(0, 2).unwrap());
        let cmi = conditional_mutual_information(&j.permute([1, 2, 0]).unwrap());
        let d = kl_divergence(&j.pair(0, 1).unwrap(), src).unwrap();
        ivw + mu * c - mu * iuw - (nu + mu) * cmi - (nu + mu) * d
    }

    #[test]
    fn entropy_expansion_matches_definition() {
        let src = JointPmf::new(2, 3, vec![0.1, 0.2, 0.05, 0.25, 0.15, 0.25]).unwrap();
        let problem = Relaxed {
            nu: 2,
            nv: 3,
            nw: 3,
            ln_p_uv: src.as_slice().iter().map(|p| p.ln()).collect(),
            support: vec![true; 6],
            mu: 0.7,
            nu_pen: 3.0,
            capacity: 0.4,
        };
        let mut rng = StreamRng::new(1, 0, 0);
        for _ in 0..20 {
            let w: Vec<f64> = (0..18).map(|_| rng.uniform() + 1e-3).collect();
            let j = Joint3::from_weights([2, 3, 3], &w).unwrap();
            let a = problem.objective(j.as_slice());
            let b = reference_objective(&src, 0.4, 0.7, 3.0, &j);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn product_source_gives_mu_c() {
        let src = product(
            &Pmf::new(vec![0.4, 0.6]).unwrap(),
            &Pmf::new(vec![0.3, 0.7]).unwrap(),
        );
        for (mu, nu) in [(0.5, 1.0), (2.0, 10.0)] {
            let v = r_s_mu_nu(&src, 0.3, mu, nu, 6, 2).unwrap();
            assert!((v - mu * 0.3).abs() < 1e-6, "mu={mu} nu={nu}: {v}");
        }
    }

    #[test]
    fn dominates_theta_mu() {
        let src = JointPmf::new(2, 2, vec![0.35, 0.15, 0.1, 0.4]).unwrap();
        for (mu, nu) in [(0.5, 1.0), (1.0, 10.0), (2.0, 100.0)] {
            let (tm, _) = theta_mu(&src, 0.2, mu, 8, 4).unwrap();
            let p = r_s_mu_nu_with(
                &src,
                0.2,
                mu,
                nu,
                &SingleLetterOptions {
                    restarts: 8,
                    seed: 4,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(p.value >= tm - 1e-9, "{} < {tm}", p.value);
            assert!(p.value >= p.theta_mu_candidate);
            let check = reference_objective(&src, 0.2, mu, nu, &p.joint);
            assert!((check - p.value).abs() < 1e-9);
        }
    }

    #[test]
    fn dsbs_bound_exceeds_theta() {
        let src = dsbs(0.1).unwrap();
        let c = 0.5 * std::f64::consts::LN_2;
        let v = r_s_mu_nu(&src, c, 1.0, 10.0, 8, 1).unwrap();
        let t = crate::exponent::theta_with(
            &src,
            c,
            &crate::exponent::ThetaOptions::default().with_restarts(8, 1),
        )
        .unwrap();
        assert!(v >= t.theta - 1e-6);
    }

    #[test]
    fn rejects_bad_arguments() {
        let src = dsbs(0.1).unwrap();
        assert!(r_s_mu_nu(&src, 0.1, 0.0, 1.0, 4, 0).is_err());
        assert!(r_s_mu_nu(&src, 0.1, 1.0, -1.0, 4, 0).is_err());
        assert!(r_s_mu_nu(&src, 0.1, 1.0, 1.0, 0, 0).is_err());
    }
}
