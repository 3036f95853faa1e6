//! Acceptance criteria 1-10. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stdout, so the line shows even under output capture.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use noisy_tai::blowup::{blowup_sweep, compute_l_n, default_b};
use noisy_tai::capacity::{capacity, Dmc, DEFAULT_TOL};
use noisy_tai::exponent::{r_s_mu_nu, theta_direct, theta_with, ThetaOptions};
use noisy_tai::probcore::{bec, bsc, dsbs, mutual_information, CondPmf, JointPmf, Pmf};
use noisy_tai::rng::StreamRng;
use noisy_tai::sequence::{SequenceSet, SequenceSpace};
use noisy_tai::simulator::{
    exact_errors, exponent_estimate, monte_carlo_errors, penalty_check, reliable_set, truncated_measure,
    tuned_likelihood_instance, Encoder,
};

const LN2: f64 = std::f64::consts::LN_2;

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {criterion}: {verdict} {detail}").unwrap();
    out.flush().unwrap();
}

fn h(p: f64) -> f64 {
    let t = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    t(p) + t(1.0 - p)
}

/// Inverse of `h` on [0, 1/2], by bisection.
fn h_inv(y: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// theta for DSBS(p): the best auxiliary is a BSC(d) with ln 2 - h(d) = C.
fn gerber_theta(p: f64, c: f64) -> f64 {
    if c >= LN2 {
        return LN2 - h(p);
    }
    let d = h_inv(LN2 - c);
    LN2 - h(p * (1.0 - d) + d * (1.0 - p))
}

struct Draw(StreamRng);

impl Draw {
    fn new(seed: u64) -> Self {
        Draw(StreamRng::new(seed, 0xACCE_0001, 0))
    }
    fn u(&mut self) -> f64 {
        self.0.uniform()
    }
    fn below(&mut self, k: usize) -> usize {
        ((self.u() * k as f64) as usize).min(k - 1)
    }
    /// Flat Dirichlet weights.
    fn simplex(&mut self, k: usize) -> Vec<f64> {
        (0..k).map(|_| -(1.0 - self.u()).ln() + 1e-12).collect()
    }
    fn joint(&mut self, r: usize, c: usize) -> JointPmf {
        JointPmf::from_weights(r, c, &self.simplex(r * c)).unwrap()
    }
}

fn mi(j: &JointPmf) -> f64 {
    let (pu, pv) = (j.row_marginal(), j.col_marginal());
    let mut s = 0.0;
    for u in 0..j.n_rows() {
        for v in 0..j.n_cols() {
            let p = j.get(u, v);
            if p > 0.0 {
                s += p * (p / (pu.get(u) * pv.get(v))).ln();
            }
        }
    }
    s
}

fn random_instances(count: usize, seed: u64) -> Vec<(JointPmf, f64)> {
    let mut d = Draw::new(seed);
    (0..count)
        .map(|_| {
            let r = 2 + d.below(2);
            let c = 2 + d.below(2);
            let j = d.joint(r, c);
            let cap = d.u() * (r as f64).ln() * 1.2;
            (j, cap)
        })
        .collect()
}

#[test]
fn criterion_01_capacity_oracle() {
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    let mut cases = Vec::new();
    for i in 0..=10 {
        let p = 0.05 * i as f64;
        cases.push((bsc(p).unwrap(), LN2 - h(p)));
    }
    for i in 0..=10 {
        let e = 0.1 * i as f64;
        cases.push((bec(e).unwrap(), (1.0 - e) * LN2));
    }
    for (ch, oracle) in &cases {
        let start = Instant::now();
        let c = capacity(&Dmc::new(ch.clone()), DEFAULT_TOL).unwrap();
        slowest = slowest.max(start.elapsed());
        worst = worst.max((c.value - oracle).abs());
    }
    let pass = worst <= 1e-6 && slowest < Duration::from_millis(50);
    report(
        1,
        pass,
        &format!("{} channels, max error {worst:.2e} nats, slowest solve {slowest:?}", cases.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_02_exponent_oracle() {
    let start = Instant::now();
    let (mut worst_l, mut worst_d) = (0.0f64, 0.0f64);
    for p in [0.05, 0.1, 0.2] {
        let src = dsbs(p).unwrap();
        for f in [0.25, 0.5, 0.75] {
            let c = f * LN2;
            let oracle = gerber_theta(p, c);
            let t = theta_with(&src, c, &ThetaOptions::default()).unwrap().theta;
            let td = theta_direct(&src, c, 0.02).unwrap();
            worst_l = worst_l.max((t - oracle).abs());
            worst_d = worst_d.max((td - oracle).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_l <= 2e-3 && worst_d <= 2e-2 && elapsed < Duration::from_secs(300);
    report(
        2,
        pass,
        &format!("lagrangian max error {worst_l:.2e}, brute force max error {worst_d:.2e}, {elapsed:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_lagrangian_consistency() {
    let mut violations = 0;
    let mut worst_gap = f64::INFINITY;
    for (src, c) in random_instances(50, 3) {
        let res = theta_with(&src, c, &ThetaOptions::default()).unwrap();
        // the grid scan must stay under the refusal cap for |U| = 3
        let step = if src.n_rows() == 2 { 0.02 } else { 0.1 };
        let td = theta_direct(&src, c, step).unwrap();
        let min_mu = res.mu_trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        worst_gap = worst_gap.min(min_mu - td);
        if min_mu < td - 2e-2 {
            violations += 1;
        }
        violations += res.mu_trace.iter().filter(|t| t.1 < res.theta - 1e-6).count();
    }
    let pass = violations == 0;
    report(
        3,
        pass,
        &format!("50 sources, {violations} violations, min(theta_mu) - brute force >= {worst_gap:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_zero_and_cap_laws() {
    let mut violations = Vec::new();
    let mut d = Draw::new(4);
    for (src, c) in random_instances(50, 3) {
        let opts = ThetaOptions::default();
        let t0 = theta_with(&src, 0.0, &opts).unwrap().theta;
        if t0 > 1e-6 {
            violations.push(format!("theta(., 0) = {t0:.3e}"));
        }
        let t = theta_with(&src, c, &opts).unwrap().theta;
        let cap = mi(&src).min(c);
        if t > cap + 1e-6 {
            violations.push(format!("theta = {t} above min(I, C) = {cap}"));
        }
        let pu = Pmf::from_weights(&d.simplex(src.n_rows())).unwrap();
        let pv = Pmf::from_weights(&d.simplex(src.n_cols())).unwrap();
        let w: Vec<f64> = (0..src.n_rows())
            .flat_map(|u| (0..src.n_cols()).map(move |v| (u, v)))
            .map(|(u, v)| pu.get(u) * pv.get(v))
            .collect();
        let product = JointPmf::from_weights(src.n_rows(), src.n_cols(), &w).unwrap();
        let tp = theta_with(&product, c, &opts).unwrap().theta;
        if tp > 1e-6 {
            violations.push(format!("product source theta = {tp:.3e}"));
        }
    }
    let pass = violations.is_empty();
    report(4, pass, &format!("150 evaluations, {} violations {:?}", violations.len(), violations));
    assert!(pass);
}

/// Exact `P(Gamma^l(D))` by brute-force distance checks.
fn brute_force_blowup(space: SequenceSpace, set: &SequenceSet, weights: &[f64], l: usize) -> f64 {
    let members: Vec<usize> = set.iter().collect();
    (0..space.total())
        .filter(|&x| members.iter().any(|&m| space.hamming(x, m) <= l))
        .map(|x| weights[x])
        .sum()
}

fn product_weights(space: SequenceSpace, pmf: &Pmf) -> Vec<f64> {
    (0..space.total())
        .map(|x| space.digits(x).iter().map(|&a| pmf.get(a)).product())
        .collect()
}

#[test]
fn criterion_05_blowing_up_soundness() {
    let start = Instant::now();
    let mut d = Draw::new(5);
    let (mut checked, mut violations, mut mismatches) = (0usize, 0usize, 0usize);
    for q in [2usize, 3] {
        for n in [6usize, 8, 10, 12] {
            let space = SequenceSpace::new(q, n).unwrap();
            for _ in 0..100 {
                let pmf = Pmf::from_weights(&d.simplex(q)).unwrap();
                // expected size log-uniform between 1 and the whole space
                let density = (space.total() as f64).powf(-d.u());
                let mut set = SequenceSet::from_predicate(space, |_| d.u() < density);
                set.insert(d.below(space.total()));
                let weights = product_weights(space, &pmf);
                let prob_d: f64 = set.iter().map(|x| weights[x]).sum();
                let threshold = (n as f64 / 2.0 * (1.0 / prob_d).ln()).sqrt();
                for c in blowup_sweep(&pmf, n, &set, n).unwrap() {
                    if (c.l as f64) <= threshold {
                        continue;
                    }
                    checked += 1;
                    let bound = 1.0 - (-(2.0 / n as f64) * (c.l as f64 - threshold).powi(2)).exp();
                    if c.exact + 1e-12 < bound || c.exact + 1e-12 < c.bound.value {
                        violations += 1;
                    }
                    if n == 6 && (brute_force_blowup(space, &set, &weights, c.l) - c.exact).abs() > 1e-12 {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && mismatches == 0 && elapsed < Duration::from_secs(120);
    report(
        5,
        pass,
        &format!(
            "800 sets, {checked} (set, l) pairs above threshold, {violations} violations, \
             {mismatches} brute-force mismatches, {elapsed:?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_penalty_factor() {
    let n = 8;
    let mut d = Draw::new(6);
    let mut violations = 0;
    let mut checks = 0;
    let l_n = compute_l_n(n, 0.3, default_b(n)).unwrap().l_n;
    for _ in 0..20 {
        let nu = 2 + d.below(2);
        let src = d.joint(nu, 2);
        let map: Vec<f64> = (0..nu)
            .flat_map(|u| {
                let x = if u < 2 { u } else { 0 };
                [(x == 0) as u8 as f64, (x == 1) as u8 as f64]
            })
            .collect();
        let map = CondPmf::new(nu, 2, map).unwrap();
        // full support: every transition at least 0.02
        let rows: Vec<f64> = (0..2)
            .flat_map(|_| {
                let a = 0.02 + 0.96 * d.u();
                [a, 1.0 - a]
            })
            .collect();
        let dmc = Dmc::new(CondPmf::new(2, 2, rows).unwrap());
        let target = 0.05 + 0.45 * d.u();
        let (inst, _) =
            tuned_likelihood_instance(&src, &dmc, Encoder::symbolwise(map, n).unwrap(), target).unwrap();
        for l in [1, 2, 3, l_n] {
            let pc = penalty_check(&inst, l).unwrap();
            checks += 1;
            let bound = pc.original.beta * pc.penalty_log.exp();
            if pc.blown.beta > bound * (1.0 + 1e-12) || !pc.holds() {
                violations += 1;
            }
        }
    }
    let pass = violations == 0;
    report(
        6,
        pass,
        &format!("20 instances at n = 8, l in {{1, 2, 3, {l_n}}}: {checks} checks, {violations} violations"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_measure_change() {
    let (eps, gamma) = (0.3, 0.35);
    let src = dsbs(0.1).unwrap();
    let dmc = Dmc::new(bsc(0.1).unwrap());
    let enc = Encoder::symbolwise(CondPmf::identity(2).unwrap(), 4).unwrap();
    let (inst, alpha) = tuned_likelihood_instance(&src, &dmc, enc, eps).unwrap();
    let set = reliable_set(&inst, gamma).unwrap();
    let rep = truncated_measure(&inst, &set, eps).unwrap();
    let factor = (1.0 + eps) / (1.0 - eps);
    let prob_target = (1.0 - eps) / (1.0 + eps);
    let tol = 1e-9;
    let checks = [
        ("alpha <= eps", alpha <= eps),
        ("P(B) >= (1-eps)/(1+eps)", rep.prob_b >= prob_target),
        ("V marginal domination", rep.max_ratio_v <= factor + tol),
        ("Y marginal domination", rep.max_ratio_y <= factor + tol),
        ("KL = ln(1/P(B))", (rep.kl - (1.0 / rep.prob_b).ln()).abs() <= tol),
        ("KL <= ln factor", rep.kl <= factor.ln() + tol),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let pass = failed.is_empty();
    report(
        7,
        pass,
        &format!(
            "alpha = {alpha:.6}, P(B) = {:.6} vs {prob_target:.6}, max ratios {:.6}/{:.6} vs {factor:.6}, \
             KL = {:.6}, failed {failed:?}",
            rep.prob_b, rep.max_ratio_v, rep.max_ratio_y, rep.kl
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_strong_converse_ceiling() {
    let start = Instant::now();
    let src = dsbs(0.1).unwrap();
    let dmc = Dmc::new(bsc(0.1).unwrap());
    let c = capacity(&dmc, DEFAULT_TOL).unwrap().value;
    let theta = theta_with(&src, c, &ThetaOptions::default()).unwrap().theta;
    let ceiling = theta + 0.05;
    let mut worst = f64::NEG_INFINITY;
    let mut lines = Vec::new();
    for target in [0.1, 0.3, 0.5] {
        let mut points = Vec::new();
        for n in [4usize, 6, 8, 10] {
            let enc = Encoder::symbolwise(CondPmf::identity(2).unwrap(), n).unwrap();
            let (inst, _) = tuned_likelihood_instance(&src, &dmc, enc, target).unwrap();
            points.push((n, exact_errors(&inst).unwrap().beta));
        }
        let exact_slope = exponent_estimate(&points).unwrap().slope;
        let enc = Encoder::symbolwise(CondPmf::identity(2).unwrap(), 16).unwrap();
        let (inst, _) = tuned_likelihood_instance(&src, &dmc, enc, target).unwrap();
        let mc = monte_carlo_errors(&inst, 1_000_000, 8).unwrap();
        points.push((16, mc.beta));
        let joint_slope = exponent_estimate(&points).unwrap().slope;
        worst = worst.max(exact_slope).max(joint_slope);
        lines.push(format!("alpha {target}: {exact_slope:.4} exact, {joint_slope:.4} with n = 16"));
    }
    let elapsed = start.elapsed();
    let pass = worst <= ceiling && elapsed < Duration::from_secs(600);
    report(
        8,
        pass,
        &format!("theta = {theta:.4}, ceiling {ceiling:.4}; slopes {}; {elapsed:?}", lines.join("; ")),
    );
    assert!(pass);
}

#[test]
fn criterion_09_determinism() {
    let bin = env!("CARGO_BIN_EXE_noisy-tai");
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 6] = [
        &["capacity", "bsc:0.11"],
        &["exponent", "--capacity", "0.3", "--oracle", "--grid-step", "0.05"],
        &["region", "--c-grid", "0:0.6:4", "--restarts", "8"],
        &["blowup", "--n", "10", "--set", "random:0.02,4"],
        &["simulate", "--n-list", "4,8", "--trials", "50000", "--seed", "3"],
        &["simulate", "--n-list", "6", "--exact", "--blowup-l", "1"],
    ];
    let mut mismatches = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let outputs: Vec<Vec<u8>> = (0..3)
            .map(|k| {
                let out = dir.path().join(format!("{i}-{k}.csv"));
                let mut cmd = Command::new(bin);
                if k < 2 {
                    cmd.args(*args);
                } else {
                    cmd.arg("--replay").arg(dir.path().join(format!("{i}-0.csv.config.json")));
                }
                let status = cmd
                    .arg("--out")
                    .arg(&out)
                    .arg("--quiet")
                    .env("NOISY_TAI_THREADS", if k == 1 { "1" } else { "3" })
                    .status()
                    .unwrap();
                assert!(status.success(), "{args:?}");
                std::fs::read(out).unwrap()
            })
            .collect();
        if outputs.iter().any(|o| *o != outputs[0]) {
            mismatches.push(args.join(" "));
        }
    }
    let pass = mismatches.is_empty();
    report(
        9,
        pass,
        &format!("{} commands, each run twice and replayed: mismatches {mismatches:?}", runs.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_10_single_letter_dominance() {
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for (k, (src, c)) in random_instances(20, 10).into_iter().enumerate() {
        let theta = theta_with(&src, c, &ThetaOptions::default()).unwrap().theta;
        for mu in [0.5, 1.0, 2.0] {
            for nu in [1.0, 10.0, 100.0] {
                let r = r_s_mu_nu(&src, c, mu, nu, 16, k as u64).unwrap();
                worst = worst.min(r - theta);
                if r < theta - 1e-6 {
                    violations += 1;
                }
            }
        }
    }
    let pass = violations == 0;
    report(
        10,
        pass,
        &format!("20 instances x 9 (mu, nu): {violations} violations, min(R - theta) = {worst:.3e}"),
    );
    assert!(pass);
}

#[test]
fn oracle_sanity() {
    assert!((gerber_theta(0.1, LN2) - (LN2 - h(0.1))).abs() < 1e-15);
    assert!(gerber_theta(0.1, 0.0).abs() < 1e-12);
    assert!((h(h_inv(0.3)) - 0.3).abs() < 1e-14);
    let j = dsbs(0.2).unwrap();
    assert!((mi(&j) - mutual_information(&j)).abs() < 1e-15);
}
