//! Exhaustive scan over simplex grids for the rows of `P_W|U`.
//!
//! Every scanned channel that meets the rate constraint is feasible, so the
//! result is a lower bound on `theta`; it approaches `theta` as the grid is
//! refined.

use super::{AuxChannel, ExponentResult, Method};
use crate::error::{Error, Result};
use crate::probcore::{entropy_of, xlnx, CondPmf, JointPmf};

/// Largest number of candidate channels a scan may visit.
pub const DIRECT_GRID_CAP: u128 = 100_000_000;

/// Slack on the rate constraint `I(U;W) <= C`.
const RATE_SLACK: f64 = 1e-12;

fn simplex_grid(parts: usize, step: f64) -> Vec<Vec<f64>> {
    let k = (1.0 / step + 1e-9).floor() as usize;
    let mut out = Vec::new();
    let mut cur = vec![0usize; parts.saturating_sub(1)];
    fn rec(
        pos: usize,
        left: usize,
        cur: &mut Vec<usize>,
        step: f64,
        out: &mut Vec<Vec<f64>>,
    ) {
        if pos == cur.len() {
            let mut row: Vec<f64> = cur.iter().map(|&i| i as f64 * step).collect();
            let used: f64 = row.iter().sum();
            row.push((1.0 - used).max(0.0));
            out.push(row);
            return;
        }
        for i in 0..=left {
            cur[pos] = i;
            rec(pos + 1, left - i, cur, step, out);
        }
    }
    rec(0, k, &mut cur, step, &mut out);
    out
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

struct Scan<'a> {
    nu: usize,
    nv: usize,
    nw: usize,
    p_u: Vec<f64>,
    p_uv: &'a [f64],
    rows: Vec<Vec<f64>>,
    row_negentropy: Vec<f64>,
    h_v: f64,
    capacity: f64,
    // per-depth accumulators
    p_w: Vec<Vec<f64>>,
    p_vw: Vec<Vec<f64>>,
    neg: Vec<f64>,
    choice: Vec<usize>,
    best: f64,
    best_choice: Vec<usize>,
}

impl Scan<'_> {
    fn run(&mut self, u: usize) {
        if u == self.nu {
            self.leaf();
            return;
        }
        let (nv, nw) = (self.nv, self.nw);
        let n_rows = if self.p_u[u] > 0.0 { self.rows.len() } else { 1 };
        for r in 0..n_rows {
            let row = &self.rows[r];
            let (head, tail) = self.p_w.split_at_mut(u + 1);
            for w in 0..nw {
                tail[0][w] = head[u][w] + self.p_u[u] * row[w];
            }
            let (head, tail) = self.p_vw.split_at_mut(u + 1);
            for v in 0..nv {
                let puv = self.p_uv[u * nv + v];
                for w in 0..nw {
                    tail[0][v * nw + w] = head[u][v * nw + w] + puv * row[w];
                }
            }
            self.neg[u + 1] = self.neg[u] + self.p_u[u] * self.row_negentropy[r];
            self.choice[u] = r;
            self.run(u + 1);
        }
    }

    fn leaf(&mut self) {
        let h_w = entropy_of(&self.p_w[self.nu]);
        let i_uw = h_w + self.neg[self.nu];
        if i_uw > self.capacity + RATE_SLACK {
            return;
        }
        let i_vw = self.h_v + h_w - entropy_of(&self.p_vw[self.nu]);
        if i_vw > self.best {
            self.best = i_vw;
            self.best_choice.clone_from(&self.choice);
        }
    }
}

/// Lower bound on `theta` by grid search with the given simplex step.
pub fn theta_direct(source: &JointPmf, capacity: f64, grid_step: f64) -> Result<f64> {
    Ok(theta_direct_detailed(source, capacity, grid_step)?.theta)
}

pub fn theta_direct_detailed(
    source: &JointPmf,
    capacity: f64,
    grid_step: f64,
) -> Result<ExponentResult> {
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "grid step must be in (0, 0.5], got {grid_step}"
        )));
    }
    if !(capacity >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "capacity must be >= 0, got {capacity}"
        )));
    }
    let (nu, nv) = (source.n_rows(), source.n_cols());
    let nw = nu + 1;
    let p_u: Vec<f64> = source.row_marginal().as_slice().to_vec();
    let k = (1.0 / grid_step + 1e-9).floor() as u128;
    let per_row = binomial(k + nw as u128 - 1, nw as u128 - 1);
    let active = p_u.iter().filter(|&&p| p > 0.0).count() as u32;
    let total = per_row.checked_pow(active).unwrap_or(u128::MAX);
    if total > DIRECT_GRID_CAP {
        return Err(Error::TooLarge {
            what: "auxiliary-channel grid scan",
            needed: total,
            limit: DIRECT_GRID_CAP,
        });
    }
    let rows = simplex_grid(nw, grid_step);
    debug_assert_eq!(rows.len() as u128, per_row);
    let row_negentropy = rows.iter().map(|r| r.iter().copied().map(xlnx).sum()).collect();
    let mut scan = Scan {
        nu,
        nv,
        nw,
        h_v: entropy_of(source.col_marginal().as_slice()),
        p_u,
        p_uv: source.as_slice(),
        rows,
        row_negentropy,
        capacity,
        p_w: vec![vec![0.0; nw]; nu + 1],
        p_vw: vec![vec![0.0; nv * nw]; nu + 1],
        neg: vec![0.0; nu + 1],
        choice: vec![0; nu],
        best: 0.0,
        best_choice: Vec::new(),
    };
    scan.run(0);
    // the constant channel is always on the grid and feasible
    let aux = if scan.best_choice.is_empty() {
        AuxChannel::constant(nu)?
    } else {
        let q: Vec<f64> = scan
            .best_choice
            .iter()
            .flat_map(|&r| scan.rows[r].iter().copied())
            .collect();
        AuxChannel::new(CondPmf::from_weights(nu, nw, &q)?)?
    };
    Ok(ExponentResult {
        theta: scan.best.max(0.0),
        best_mu: f64::NAN,
        best_aux: aux,
        mu_trace: Vec::new(),
        method: Method::BruteForce,
    })
}
