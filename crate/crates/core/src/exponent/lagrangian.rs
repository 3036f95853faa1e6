//! Multi-restart solver for the hyperplane value
//!
//! ```text
//! R_mu = max_{P_W|U} I(V;W) - mu I(U;W),     theta_mu(C) = R_mu + mu C
//! ```
//!
//! The inner update is the self-consistent bottleneck iteration
//! `Q(w|u) ∝ P(w) exp(-D(P_V|U=u || P_V|W=w) / mu)`, an exact block
//! minimization of a free energy whose value at consistent marginals is
//! `mu I(U;W) - I(V;W) + I(U;V)`; the objective therefore never decreases.

use rayon::prelude::*;

use super::AuxChannel;
use crate::error::{Error, Result};
use crate::probcore::{mutual_information_of, CondPmf, JointPmf};
use crate::rng::{derive_stream, StreamRng};

const RESTART_STREAM: u64 = 0x7E7A_0001;
/// Objective changes below this end an ascent run.
const STALL_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct LagrangianOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub polish_iter: usize,
}

impl Default for LagrangianOptions {
    fn default() -> Self {
        Self {
            restarts: 64,
            seed: 0,
            max_iter: 4_000,
            polish_iter: 20_000,
        }
    }
}

/// Solution of the inner maximization at one `mu`.
#[derive(Debug, Clone)]
pub struct HyperplanePoint {
    pub mu: f64,
    /// `I(V;W) - mu I(U;W)` at the returned channel.
    pub r_mu: f64,
    pub i_uw: f64,
    pub i_vw: f64,
    pub aux: AuxChannel,
    /// Index of the restart that won (0 = `W=U`, 1 = `W=const`).
    pub restart: usize,
}

impl HyperplanePoint {
    pub fn theta_mu(&self, capacity: f64) -> f64 {
        self.r_mu + self.mu * capacity
    }

    /// Subgradient of `mu -> theta_mu(C)` at this point.
    pub fn slope(&self, capacity: f64) -> f64 {
        capacity - self.i_uw
    }
}

/// Precomputed source quantities shared by every restart.
#[derive(Debug, Clone)]
pub(crate) struct Bottleneck {
    nu: usize,
    nv: usize,
    nw: usize,
    p_u: Vec<f64>,
    p_uv: Vec<f64>,
    /// `P(v|u)`, rows of zero-mass `u` left at zero.
    p_v_given_u: Vec<f64>,
}

impl Bottleneck {
    pub(crate) fn new(source: &JointPmf) -> Self {
        let (nu, nv) = (source.n_rows(), source.n_cols());
        let p_u = source.row_marginal().as_slice().to_vec();
        let p_uv = source.as_slice().to_vec();
        let mut p_v_given_u = vec![0.0; nu * nv];
        for u in 0..nu {
            if p_u[u] > 0.0 {
                for v in 0..nv {
                    p_v_given_u[u * nv + v] = p_uv[u * nv + v] / p_u[u];
                }
            }
        }
        Self {
            nu,
            nv,
            nw: nu + 1,
            p_u,
            p_uv,
            p_v_given_u,
        }
    }

    /// `(I(U;W), I(V;W))` for the channel `q` (row-major `nu x nw`).
    pub(crate) fn informations(&self, q: &[f64]) -> (f64, f64) {
        let (nu, nv, nw) = (self.nu, self.nv, self.nw);
        let mut p_uw = vec![0.0; nu * nw];
        let mut p_vw = vec![0.0; nv * nw];
        for u in 0..nu {
            for w in 0..nw {
                let quw = q[u * nw + w];
                p_uw[u * nw + w] = self.p_u[u] * quw;
                if quw > 0.0 {
                    for v in 0..nv {
                        p_vw[v * nw + w] += self.p_uv[u * nv + v] * quw;
                    }
                }
            }
        }
        (
            mutual_information_of(&p_uw, nu, nw),
            mutual_information_of(&p_vw, nv, nw),
        )
    }

    fn objective(&self, q: &[f64], mu: f64) -> f64 {
        let (iuw, ivw) = self.informations(q);
        ivw - mu * iuw
    }

    /// One self-consistent update `q -> out`.
    fn step(&self, q: &[f64], out: &mut [f64], mu: f64) {
        let (nu, nv, nw) = (self.nu, self.nv, self.nw);
        let mut p_w = vec![0.0; nw];
        let mut p_vw = vec![0.0; nv * nw];
        for u in 0..nu {
            for w in 0..nw {
                let quw = q[u * nw + w];
                p_w[w] += self.p_u[u] * quw;
                for v in 0..nv {
                    p_vw[v * nw + w] += self.p_uv[u * nv + v] * quw;
                }
            }
        }
        // ln P(v|w), -inf where the cell is empty
        let mut ln_v_given_w = vec![f64::NEG_INFINITY; nv * nw];
        for w in 0..nw {
            if p_w[w] > 0.0 {
                for v in 0..nv {
                    let p = p_vw[v * nw + w];
                    if p > 0.0 {
                        ln_v_given_w[v * nw + w] = (p / p_w[w]).ln();
                    }
                }
            }
        }
        let mut logits = vec![0.0; nw];
        for u in 0..nu {
            let row = &mut out[u * nw..(u + 1) * nw];
            if self.p_u[u] <= 0.0 {
                row.copy_from_slice(&q[u * nw..(u + 1) * nw]);
                continue;
            }
            let pv = &self.p_v_given_u[u * nv..(u + 1) * nv];
            for w in 0..nw {
                logits[w] = if p_w[w] > 0.0 {
                    // -D(P(.|u) || P(.|w)) / mu + ln P(w), dropping the
                    // u-only entropy term which cancels in the softmax
                    let mut cross = 0.0;
                    for v in 0..nv {
                        if pv[v] > 0.0 {
                            cross += pv[v] * ln_v_given_w[v * nw + w];
                        }
                    }
                    cross / mu + p_w[w].ln()
                } else {
                    f64::NEG_INFINITY
                };
            }
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                row.copy_from_slice(&q[u * nw..(u + 1) * nw]);
                continue;
            }
            let mut z = 0.0;
            for w in 0..nw {
                let e = (logits[w] - m).exp();
                row[w] = e;
                z += e;
            }
            row.iter_mut().for_each(|r| *r /= z);
        }
    }

    /// Ascends from `q` in place; returns the best objective seen and
    /// leaves the corresponding channel in `q`.
    fn ascend(&self, q: &mut Vec<f64>, mu: f64, max_iter: usize) -> f64 {
        let mut best = self.objective(q, mu);
        let mut next = vec![0.0; q.len()];
        for _ in 0..max_iter {
            self.step(q, &mut next, mu);
            let val = self.objective(&next, mu);
            if !(val > best) {
                // fixed point or rounding-level wobble
                break;
            }
            std::mem::swap(q, &mut next);
            let gain = val - best;
            best = val;
            if gain < STALL_TOL {
                break;
            }
        }
        best
    }

    fn identity_seed(&self) -> Vec<f64> {
        let nw = self.nw;
        let mut q = vec![0.0; self.nu * nw];
        for u in 0..self.nu {
            q[u * nw + u] = 1.0;
        }
        q
    }

    fn constant_seed(&self) -> Vec<f64> {
        let nw = self.nw;
        let mut q = vec![0.0; self.nu * nw];
        for u in 0..self.nu {
            q[u * nw] = 1.0;
        }
        q
    }

    fn random_seed(&self, seed: u64, restart: usize) -> Vec<f64> {
        let mut rng = StreamRng::new(seed, derive_stream(RESTART_STREAM, restart as u64), 0);
        let nw = self.nw;
        let mut q = vec![0.0; self.nu * nw];
        for row in q.chunks_mut(nw) {
            // flat Dirichlet via normalized exponentials
            for r in row.iter_mut() {
                *r = -(1.0 - rng.uniform()).ln();
            }
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|r| *r /= z);
        }
        q
    }

    pub(crate) fn to_aux(&self, q: Vec<f64>) -> Result<AuxChannel> {
        AuxChannel::new(CondPmf::new(self.nu, self.nw, q)?)
    }

    /// Solves for `R_mu`, seeding restart 0 with `W=U`, restart 1 with
    /// `W=const`, any `warm` channels next, and random channels after.
    pub(crate) fn solve(
        &self,
        mu: f64,
        opts: &LagrangianOptions,
        warm: &[&AuxChannel],
    ) -> Result<HyperplanePoint> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be > 0, got {mu}")));
        }
        if opts.restarts < 1 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        let n_det = 2 + warm.len();
        let total = opts.restarts.max(n_det);
        let runs: Vec<(usize, f64, Vec<f64>)> = (0..total)
            .into_par_iter()
            .map(|i| {
                let mut q = match i {
                    0 => self.identity_seed(),
                    1 => self.constant_seed(),
                    i if i < n_det => warm[i - 2].cond().as_slice().to_vec(),
                    i => self.random_seed(opts.seed, i),
                };
                let val = self.ascend(&mut q, mu, opts.max_iter);
                (i, val, q)
            })
            .collect();
        // max value, ties within 1e-12 broken by lowest restart index
        let mut winner = 0;
        for (k, run) in runs.iter().enumerate() {
            if run.1 > runs[winner].1 + 1e-12 {
                winner = k;
            }
        }
        let (restart, _, mut q) = runs.into_iter().nth(winner).expect("restarts >= 1");
        self.ascend(&mut q, mu, opts.polish_iter);
        let (i_uw, i_vw) = self.informations(&q);
        Ok(HyperplanePoint {
            mu,
            r_mu: i_vw - mu * i_uw,
            i_uw,
            i_vw,
            aux: self.to_aux(q)?,
            restart,
        })
    }
}

/// `theta_mu(C)` and its maximizing auxiliary channel.
pub fn theta_mu(
    source: &JointPmf,
    capacity: f64,
    mu: f64,
    restarts: usize,
    seed: u64,
) -> Result<(f64, AuxChannel)> {
    if !(capacity >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "capacity must be >= 0, got {capacity}"
        )));
    }
    let opts = LagrangianOptions {
        restarts,
        seed,
        ..Default::default()
    };
    let point = Bottleneck::new(source).solve(mu, &opts, &[])?;
    Ok((point.theta_mu(capacity), point.aux))
}

/// Full hyperplane solution at `mu` with explicit options.
pub fn hyperplane_point(
    source: &JointPmf,
    mu: f64,
    opts: &LagrangianOptions,
) -> Result<HyperplanePoint> {
    Bottleneck::new(source).solve(mu, opts, &[])
}
