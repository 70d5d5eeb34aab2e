//! Continuous-time random walk among the conductances.
//!
//! Jumps are proposed from the envelope C₂|z|^{−d−2} truncated at |z| ≤ R_max
//! and accepted with probability w_{x,x+z}/C₂, so the simulated process is
//! exactly the walk of the R_max-truncated kernel; the environment is queried
//! lazily at whatever sites the walker visits. A proposal is drawn in two
//! exact stages: an alias table over the integer shells s = |z|², then a
//! uniform vector of that shell — explicit lists for s ≤ 64 (which carry all
//! but ~1% of the envelope mass), and above that a single bounded draw
//! threaded through the lower-dimensional shell counts r_{d−1}, r_{d−2}, …
//! (mixed radix), so every stage is an exact finite distribution. The one
//! approximation in the whole chain is the ≤ 2⁻³² scaling bias of a bounded
//! draw, far below every statistical tolerance here.

use alloc::vec;
use alloc::vec::Vec;

use crate::env::ConductanceField;
use crate::lattice::{Site, MAX_D};
use crate::math;
use crate::op::{kernel_weight, scale_factor};
use crate::par::Executor;
use crate::rng::Stream;
use crate::shells;
use crate::sum::{pairwise_sum, Compensated};

/// Vector lists are kept for shells up to this squared radius.
const SMALL_SHELL: i64 = 64;
/// The shell table has R_max² entries; refuse to build past this.
const SHELL_BUDGET: usize = 1 << 23;
const PATH_TAG: u64 = 0x77616c6b;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuildError {
    TableTooLarge { shells: usize, budget: usize },
}

impl core::fmt::Display for BuildError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            BuildError::TableTooLarge { shells, budget } => {
                write!(f, "shell table needs {shells} entries, budget {budget}")
            }
        }
    }
}

/// Envelope sampler for jumps: alias table over shells plus exact per-shell
/// vector draws.
pub struct JumpSampler {
    pub d: usize,
    pub r_max: i64,
    pub c2: f64,
    /// Σ_{0<|z|≤R_max} C₂|z|^{−d−2}, compensated over shells ascending.
    pub lambda_env: f64,
    /// squared radii with at least one lattice vector, ascending
    shell_sq: Vec<i64>,
    /// r_d(s) for those radii
    shell_count: Vec<u64>,
    alias_prob: Vec<f64>,
    alias_other: Vec<u32>,
    /// prefix ends into `small_z`, one per shell index with s ≤ SMALL_SHELL
    small_end: Vec<u32>,
    small_z: Vec<Site>,
    /// lower-dimensional counts for shells past the lists; empty when unused
    r2: Vec<i32>,
    r3: Vec<i64>,
}

/// Every z with 0 < |z| ≤ r, odometer order.
fn ball_vectors(d: usize, r: i64) -> Vec<Site> {
    let rsq = r * r;
    let mut out = Vec::new();
    let mut c = [0i64; MAX_D];
    for v in c[..d].iter_mut() {
        *v = -r;
    }
    'outer: loop {
        let z = Site { c };
        let n = z.norm_sq(d);
        if n > 0 && n <= rsq {
            out.push(z);
        }
        for i in (0..d).rev() {
            if c[i] < r {
                c[i] += 1;
                continue 'outer;
            }
            c[i] = -r;
        }
        break;
    }
    out
}

/// Walker alias construction; the table reproduces `masses`/`total` exactly
/// up to one rounding per entry.
fn build_alias(masses: &[f64], total: f64) -> (Vec<f64>, Vec<u32>) {
    let n = masses.len();
    let mut scaled: Vec<f64> = masses.iter().map(|&m| m * n as f64 / total).collect();
    let mut prob = vec![1.0f64; n];
    let mut other: Vec<u32> = (0..n as u32).collect();
    let mut small: Vec<usize> = Vec::new();
    let mut large: Vec<usize> = Vec::new();
    for (i, &s) in scaled.iter().enumerate() {
        if s < 1.0 {
            small.push(i);
        } else {
            large.push(i);
        }
    }
    while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
        small.pop();
        prob[s] = scaled[s];
        other[s] = l as u32;
        scaled[l] -= 1.0 - scaled[s];
        if scaled[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    // leftovers sit at probability 1 up to rounding
    (prob, other)
}

#[inline]
fn isqrt_i64(n: i64) -> i64 {
    debug_assert!(n >= 0);
    (n as u64).isqrt() as i64
}

pub fn build_jump_sampler(d: usize, r_max: i64, c2: f64) -> Result<JumpSampler, BuildError> {
    assert!((1..=MAX_D).contains(&d));
    assert!(r_max >= 1);
    assert!(c2 > 0.0);
    let rsq = (r_max * r_max) as usize;
    if rsq > SHELL_BUDGET {
        return Err(BuildError::TableTooLarge {
            shells: rsq,
            budget: SHELL_BUDGET,
        });
    }
    let counts: Vec<u64> = match d {
        1 => {
            let mut c = vec![0u64; rsq + 1];
            for j in 1..=r_max {
                c[(j * j) as usize] = 2;
            }
            c
        }
        2 => shells::r2_table(rsq).iter().map(|&v| v as u64).collect(),
        3 => shells::r3_table(rsq).iter().map(|&v| v as u64).collect(),
        _ => shells::r4_table(rsq).iter().map(|&v| v as u64).collect(),
    };

    let mut shell_sq = Vec::new();
    let mut shell_count = Vec::new();
    let mut masses = Vec::new();
    let mut lambda = Compensated::new();
    for (s, &cnt) in counts.iter().enumerate().skip(1) {
        if cnt == 0 {
            continue;
        }
        let mass = c2 * cnt as f64 * kernel_weight(d, s as i64);
        shell_sq.push(s as i64);
        shell_count.push(cnt);
        masses.push(mass);
        lambda.add(mass);
    }
    let lambda_env = lambda.value();
    let (alias_prob, alias_other) = build_alias(&masses, lambda_env);

    // explicit lists for the small shells, bucketed in enumeration order;
    // list lengths double as an enumeration-vs-sieve count cross-check
    let n_small = shell_sq.partition_point(|&s| s <= SMALL_SHELL);
    let r_small = r_max.min(isqrt_i64(SMALL_SHELL));
    let mut buckets: Vec<Vec<Site>> = vec![Vec::new(); SMALL_SHELL as usize + 1];
    for z in ball_vectors(d, r_small) {
        let n = z.norm_sq(d);
        if n <= SMALL_SHELL {
            buckets[n as usize].push(z);
        }
    }
    let mut small_z = Vec::new();
    let mut small_end = Vec::with_capacity(n_small);
    for i in 0..n_small {
        let s = shell_sq[i] as usize;
        assert_eq!(
            buckets[s].len() as u64,
            shell_count[i],
            "shell {s}: enumeration disagrees with the count sieve"
        );
        small_z.extend_from_slice(&buckets[s]);
        small_end.push(small_z.len() as u32);
    }

    let need_recursion = shell_sq.last().is_some_and(|&s| s > SMALL_SHELL);
    let r2 = if need_recursion && d >= 3 {
        shells::r2_table(rsq)
    } else {
        Vec::new()
    };
    let r3 = if need_recursion && d == 4 {
        shells::r3_table(rsq)
    } else {
        Vec::new()
    };

    Ok(JumpSampler {
        d,
        r_max,
        c2,
        lambda_env,
        shell_sq,
        shell_count,
        alias_prob,
        alias_other,
        small_end,
        small_z,
        r2,
        r3,
    })
}

impl JumpSampler {
    pub fn shell_probabilities(&self) -> Vec<f64> {
        self.shell_sq
            .iter()
            .zip(&self.shell_count)
            .map(|(&s, &c)| self.c2 * c as f64 * kernel_weight(self.d, s) / self.lambda_env)
            .collect()
    }

    pub fn squared_radii(&self) -> &[i64] {
        &self.shell_sq
    }

    #[inline]
    fn draw_shell(&self, stream: &mut Stream) -> usize {
        let i = stream.next_below(self.alias_prob.len() as u64) as usize;
        if stream.next_f64() < self.alias_prob[i] {
            i
        } else {
            self.alias_other[i] as usize
        }
    }

    #[inline]
    fn level_count(&self, level: usize, n: i64) -> u64 {
        match level {
            1 => {
                if n == 0 {
                    1
                } else {
                    let j = isqrt_i64(n);
                    if j * j == n {
                        2
                    } else {
                        0
                    }
                }
            }
            2 => self.r2[n as usize] as u64,
            _ => self.r3[n as usize] as u64,
        }
    }

    /// The `u`-th vector of the shell |z|² = s, in the mixed-radix order
    /// (last coordinate ascending, then recursively). Bucket sizes are the
    /// exact counts, so u uniform on [0, r_d(s)) gives a uniform vector.
    fn unrank(&self, mut s: i64, mut u: u64) -> Site {
        let mut z = Site::zero();
        let mut level = self.d;
        while level > 1 {
            let r = isqrt_i64(s);
            let mut c = -r;
            loop {
                let n = self.level_count(level - 1, s - c * c);
                if u < n {
                    break;
                }
                u -= n;
                c += 1;
                debug_assert!(c <= r, "count tables inconsistent at s={s}");
            }
            z.c[level - 1] = c;
            s -= c * c;
            level -= 1;
        }
        let j = isqrt_i64(s);
        debug_assert_eq!(j * j, s);
        z.c[0] = if s == 0 {
            0
        } else if u == 0 {
            -j
        } else {
            j
        };
        z
    }

    /// One envelope proposal. Consumes exactly one shell draw (alias) and one
    /// bounded vector draw from the stream.
    pub fn propose(&self, stream: &mut Stream) -> Site {
        let idx = self.draw_shell(stream);
        let u = stream.next_below(self.shell_count[idx]);
        if idx < self.small_end.len() {
            let start = if idx == 0 {
                0
            } else {
                self.small_end[idx - 1] as usize
            };
            self.small_z[start + u as usize]
        } else {
            self.unrank(self.shell_sq[idx], u)
        }
    }
}

/// Positions at the requested unscaled times (post-jump at a tie: the walk
/// is càdlàg), plus the event counts up to the last checkpoint.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub positions: Vec<Site>,
    pub jumps: u64,
    pub proposals: u64,
}

fn check_times(checkpoints: &[f64]) {
    assert!(!checkpoints.is_empty());
    assert!(checkpoints[0] >= 0.0);
    for w in checkpoints.windows(2) {
        assert!(w[0] <= w[1], "checkpoints must ascend");
    }
}

/// Thinning simulation of the walk started at `start`. Draws depend only on
/// (seed, path_index) and the event number, so a longer horizon extends a
/// shorter one exactly.
pub fn simulate_path(
    field: &ConductanceField,
    sampler: &JumpSampler,
    start: &Site,
    checkpoints: &[f64],
    seed: u64,
    path_index: u64,
) -> PathSample {
    let d = sampler.d;
    assert_eq!(field.spec().d, d);
    let (_, hi) = field.spec().law.bounds();
    assert!(hi <= sampler.c2, "envelope must dominate the conductance law");
    check_times(checkpoints);

    let mut stream = Stream::new(seed, PATH_TAG, path_index);
    let mut x = *start;
    let mut t = 0.0f64;
    let mut ci = 0usize;
    let mut positions = Vec::with_capacity(checkpoints.len());
    let mut jumps = 0u64;
    let mut proposals = 0u64;
    loop {
        let t_next = t + stream.next_exp() / sampler.lambda_env;
        while ci < checkpoints.len() && checkpoints[ci] < t_next {
            positions.push(x);
            ci += 1;
        }
        if ci == checkpoints.len() {
            break;
        }
        t = t_next;
        proposals += 1;
        let z = sampler.propose(&mut stream);
        let y = x.add(&z);
        let u = stream.next_f64();
        if u * sampler.c2 < field.weight(&x, &y) {
            x = y;
            jumps += 1;
        }
    }
    PathSample {
        positions,
        jumps,
        proposals,
    }
}

/// Two walks driven by one event stream: `wide` accepts from the full
/// envelope, `base` ignores proposals with |z| > r_base. The wide trajectory
/// is bit-identical to `simulate_path` with the same sampler and stream; the
/// base walk sees exactly the r_base sub-envelope Poisson stream (thinning),
/// so both marginals are exact while the pairing cancels most of the Monte
/// Carlo noise in their difference.
#[derive(Clone, Debug)]
pub struct CoupledSample {
    pub base: Vec<Site>,
    pub wide: Vec<Site>,
    pub jumps_base: u64,
    pub jumps_wide: u64,
    pub proposals: u64,
}

pub fn simulate_coupled_path(
    field: &ConductanceField,
    sampler: &JumpSampler,
    r_base: i64,
    start: &Site,
    checkpoints: &[f64],
    seed: u64,
    path_index: u64,
) -> CoupledSample {
    let d = sampler.d;
    assert_eq!(field.spec().d, d);
    let (_, hi) = field.spec().law.bounds();
    assert!(hi <= sampler.c2, "envelope must dominate the conductance law");
    assert!(r_base >= 1 && r_base < sampler.r_max);
    check_times(checkpoints);
    let base_sq = r_base * r_base;

    let mut stream = Stream::new(seed, PATH_TAG, path_index);
    let mut xb = *start;
    let mut xw = *start;
    let mut t = 0.0f64;
    let mut ci = 0usize;
    let mut base = Vec::with_capacity(checkpoints.len());
    let mut wide = Vec::with_capacity(checkpoints.len());
    let mut jumps_base = 0u64;
    let mut jumps_wide = 0u64;
    let mut proposals = 0u64;
    loop {
        let t_next = t + stream.next_exp() / sampler.lambda_env;
        while ci < checkpoints.len() && checkpoints[ci] < t_next {
            base.push(xb);
            wide.push(xw);
            ci += 1;
        }
        if ci == checkpoints.len() {
            break;
        }
        t = t_next;
        proposals += 1;
        let z = sampler.propose(&mut stream);
        let u = stream.next_f64();
        let yw = xw.add(&z);
        if u * sampler.c2 < field.weight(&xw, &yw) {
            xw = yw;
            jumps_wide += 1;
        }
        if z.norm_sq(d) <= base_sq {
            let yb = xb.add(&z);
            if u * sampler.c2 < field.weight(&xb, &yb) {
                xb = yb;
                jumps_base += 1;
            }
        }
    }
    CoupledSample {
        base,
        wide,
        jumps_base,
        jumps_wide,
        proposals,
    }
}

/// Moments of the scaled displacements, with the raw per-path samples kept
/// for quantile diagnostics. Lane index = checkpoint·d + coordinate.
#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub d: usize,
    pub k: i64,
    pub ts: Vec<f64>,
    pub n_paths: usize,
    pub mean: Vec<f64>,
    /// unbiased sample variance per lane
    pub var: Vec<f64>,
    /// per checkpoint, d×d row-major; diagonal equals `var`
    pub cov: Vec<f64>,
    /// lane-major samples, n_paths per lane
    pub samples: Vec<f64>,
    pub total_jumps: f64,
    pub total_proposals: f64,
    /// per-path acceptance fractions (1 when a path saw no proposal)
    pub path_accept: Vec<f64>,
}

impl EnsembleStats {
    /// Moments from lane-major displacement samples; the event-count fields
    /// start at zero.
    pub fn from_displacements(
        d: usize,
        k: i64,
        ts: &[f64],
        n_paths: usize,
        lanes: Vec<f64>,
    ) -> Self {
        assert!(n_paths >= 1);
        let ln = ts.len() * d;
        assert_eq!(lanes.len(), ln * n_paths);
        let nf = n_paths as f64;
        let mut mean = vec![0.0; ln];
        let mut var = vec![0.0; ln];
        let mut scratch = vec![0.0; n_paths];
        for l in 0..ln {
            let lane = &lanes[l * n_paths..(l + 1) * n_paths];
            mean[l] = pairwise_sum(lane) / nf;
            for (s, &v) in scratch.iter_mut().zip(lane) {
                let dev = v - mean[l];
                *s = dev * dev;
            }
            if n_paths > 1 {
                var[l] = pairwise_sum(&scratch) / (nf - 1.0);
            }
        }
        let mut cov = vec![0.0; ts.len() * d * d];
        for j in 0..ts.len() {
            for a in 0..d {
                cov[j * d * d + a * d + a] = var[j * d + a];
                for b in a + 1..d {
                    let la = &lanes[(j * d + a) * n_paths..(j * d + a + 1) * n_paths];
                    let lb = &lanes[(j * d + b) * n_paths..(j * d + b + 1) * n_paths];
                    let (ma, mb) = (mean[j * d + a], mean[j * d + b]);
                    for (s, (&va, &vb)) in scratch.iter_mut().zip(la.iter().zip(lb)) {
                        *s = (va - ma) * (vb - mb);
                    }
                    let c = if n_paths > 1 {
                        pairwise_sum(&scratch) / (nf - 1.0)
                    } else {
                        0.0
                    };
                    cov[j * d * d + a * d + b] = c;
                    cov[j * d * d + b * d + a] = c;
                }
            }
        }
        Self {
            d,
            k,
            ts: ts.to_vec(),
            n_paths,
            mean,
            var,
            cov,
            samples: lanes,
            total_jumps: 0.0,
            total_proposals: 0.0,
            path_accept: Vec::new(),
        }
    }

    pub fn lane(&self, checkpoint: usize, coord: usize) -> &[f64] {
        let l = checkpoint * self.d + coord;
        &self.samples[l * self.n_paths..(l + 1) * self.n_paths]
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        if self.total_proposals > 0.0 {
            Some(self.total_jumps / self.total_proposals)
        } else {
            None
        }
    }

    /// Smallest LDLᵀ pivot of the checkpoint's covariance block; nonnegative
    /// up to roundoff iff the block is positive semidefinite.
    pub fn psd_defect(&self, checkpoint: usize) -> f64 {
        let d = self.d;
        let a = &self.cov[checkpoint * d * d..(checkpoint + 1) * d * d];
        let mut l = [[0.0f64; MAX_D]; MAX_D];
        let mut diag = [0.0f64; MAX_D];
        let mut worst = f64::INFINITY;
        for j in 0..d {
            let mut v = a[j * d + j];
            for t in 0..j {
                v -= l[j][t] * l[j][t] * diag[t];
            }
            diag[j] = v;
            worst = worst.min(v);
            for i in j + 1..d {
                let mut w = a[i * d + j];
                for t in 0..j {
                    w -= l[i][t] * l[j][t] * diag[t];
                }
                l[i][j] = if v != 0.0 { w / v } else { 0.0 };
            }
        }
        worst
    }
}

/// Simulates n_paths of the scaled walk X^{(k)} (space 1/k, time k²/log k)
/// started at the origin and accumulates displacement moments. R_max is the
/// kernel truncation in lattice units; pass k to match the a₀(k) partial sum.
pub fn scaled_ensemble<E: Executor>(
    ex: &E,
    field: &ConductanceField,
    k: i64,
    ts: &[f64],
    n_paths: usize,
    r_max: i64,
    seed: u64,
) -> Result<EnsembleStats, BuildError> {
    let d = field.spec().d;
    assert!(n_paths >= 1);
    check_times(ts);
    let (_, hi) = field.spec().law.bounds();
    let sampler = build_jump_sampler(d, r_max, hi)?;
    let tscale = scale_factor(d, k);
    let unscaled: Vec<f64> = ts.iter().map(|&t| t * tscale).collect();
    let n_ck = ts.len();
    let stride = n_ck * d + 2;
    let mut buf = vec![0.0; n_paths * stride];
    let inv_k = 1.0 / k as f64;
    let start = Site::zero();
    ex.fill(&mut buf, stride, &|path, _start, piece| {
        let sample = simulate_path(field, &sampler, &start, &unscaled, seed, path as u64);
        for (j, pos) in sample.positions.iter().enumerate() {
            for i in 0..d {
                piece[j * d + i] = pos.c[i] as f64 * inv_k;
            }
        }
        piece[n_ck * d] = sample.jumps as f64;
        piece[n_ck * d + 1] = sample.proposals as f64;
    });

    let mut lanes = vec![0.0; n_ck * d * n_paths];
    for p in 0..n_paths {
        for l in 0..n_ck * d {
            lanes[l * n_paths + p] = buf[p * stride + l];
        }
    }
    let mut stats = EnsembleStats::from_displacements(d, k, ts, n_paths, lanes);
    let jumps: Vec<f64> = (0..n_paths).map(|p| buf[p * stride + n_ck * d]).collect();
    let props: Vec<f64> = (0..n_paths)
        .map(|p| buf[p * stride + n_ck * d + 1])
        .collect();
    stats.total_jumps = pairwise_sum(&jumps);
    stats.total_proposals = pairwise_sum(&props);
    stats.path_accept = jumps
        .iter()
        .zip(&props)
        .map(|(&j, &p)| if p > 0.0 { j / p } else { 1.0 })
        .collect();
    Ok(stats)
}

/// Diffusivity verdict: per-coordinate variance against the 2a₀t line and
/// quartiles against the Gaussian with that variance.
#[derive(Clone, Debug)]
pub struct DiffusivityReport {
    pub a0: f64,
    /// per coordinate: variance / (2 a₀ t) at the last checkpoint
    pub variance_ratio: Vec<f64>,
    /// per coordinate: 3 × standard error of that ratio (fourth-moment
    /// estimator, no Gaussianity assumed)
    pub variance_se3: Vec<f64>,
    /// per coordinate: least-squares slope of var(t) through the origin,
    /// relative to 2 a₀
    pub slope_ratio: Vec<f64>,
    /// per coordinate: empirical IQR / Gaussian IQR at the last checkpoint
    pub iqr_ratio: Vec<f64>,
    pub variance_band: (f64, f64),
    pub iqr_tol: f64,
    pub variance_ok: bool,
    pub iqr_ok: bool,
}

impl DiffusivityReport {
    pub fn pass(&self) -> bool {
        self.variance_ok && self.iqr_ok
    }
}

/// Rank-interpolated quantile of a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(sorted.len() >= 2);
    assert!((0.0..=1.0).contains(&p));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

pub fn diffusivity_check(
    stats: &EnsembleStats,
    a0: f64,
    variance_band: (f64, f64),
    iqr_tol: f64,
) -> DiffusivityReport {
    assert!(a0 > 0.0);
    let d = stats.d;
    let last = stats.ts.len() - 1;
    let t_last = stats.ts[last];
    assert!(t_last > 0.0, "need a positive checkpoint time");
    let expected = 2.0 * a0 * t_last;
    let sigma = math::sqrt(expected);
    let gauss_iqr = 2.0 * math::inv_norm_cdf(0.75) * sigma;
    let n = stats.n_paths as f64;

    let mut variance_ratio = Vec::with_capacity(d);
    let mut variance_se3 = Vec::with_capacity(d);
    let mut slope_ratio = Vec::with_capacity(d);
    let mut iqr_ratio = Vec::with_capacity(d);
    let mut sorted = vec![0.0; stats.n_paths];
    for c in 0..d {
        let l = last * d + c;
        let var = stats.var[l];
        variance_ratio.push(var / expected);
        // Var(s²) ≈ (m₄ − m₂²(n−3)/(n−1))/n from the sample moments
        let lane = stats.lane(last, c);
        let (mut m2, mut m4) = (Compensated::new(), Compensated::new());
        for &v in lane {
            let dev = v - stats.mean[l];
            m2.add(dev * dev);
            m4.add(dev * dev * dev * dev);
        }
        let m2 = m2.value() / n;
        let m4 = m4.value() / n;
        let se_sq = (m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n;
        variance_se3.push(3.0 * math::sqrt(se_sq.max(0.0)) / expected);

        let (mut num, mut den) = (0.0, 0.0);
        for (j, &t) in stats.ts.iter().enumerate() {
            num += t * stats.var[j * d + c];
            den += t * t;
        }
        slope_ratio.push(num / den / (2.0 * a0));

        sorted.copy_from_slice(lane);
        sorted.sort_unstable_by(f64::total_cmp);
        let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
        iqr_ratio.push(iqr / gauss_iqr);
    }
    let variance_ok = variance_ratio
        .iter()
        .all(|&r| r >= variance_band.0 && r <= variance_band.1);
    let iqr_ok = iqr_ratio.iter().all(|&r| (r - 1.0).abs() <= iqr_tol);
    DiffusivityReport {
        a0,
        variance_ratio,
        variance_se3,
        slope_ratio,
        iqr_ratio,
        variance_band,
        iqr_tol,
        variance_ok,
        iqr_ok,
    }
}

/// Coupled measurement of the variance added by doubling the truncation
/// radius from k to 2k: the logarithmic-tail signature of the critical
/// kernel, ≈ log 2 / log k relatively.
#[derive(Clone, Debug)]
pub struct TruncationReport {
    pub d: usize,
    pub k: i64,
    pub r_base: i64,
    pub r_wide: i64,
    pub n_paths: usize,
    /// pooled over coordinates (exchangeable by lattice symmetry)
    pub var_base: f64,
    pub var_wide: f64,
    pub observed_increase: f64,
    /// S_d(2k, d)/S_d(k, d) − 1: the identity value of the increase
    pub predicted_increase: f64,
    /// 3 × delta-method standard error of the observed increase
    pub se3: f64,
}

pub fn truncation_study<E: Executor>(
    ex: &E,
    field: &ConductanceField,
    k: i64,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<TruncationReport, BuildError> {
    let d = field.spec().d;
    assert!(t > 0.0);
    assert!(n_paths >= 2);
    let r_base = k;
    let r_wide = 2 * k;
    let (_, hi) = field.spec().law.bounds();
    let sampler = build_jump_sampler(d, r_wide, hi)?;
    let unscaled = [t * scale_factor(d, k)];
    let stride = 2 * d;
    let mut buf = vec![0.0; n_paths * stride];
    let inv_k = 1.0 / k as f64;
    let start = Site::zero();
    ex.fill(&mut buf, stride, &|path, _s, piece| {
        let cs = simulate_coupled_path(field, &sampler, r_base, &start, &unscaled, seed, path as u64);
        for i in 0..d {
            piece[i] = cs.base[0].c[i] as f64 * inv_k;
            piece[d + i] = cs.wide[0].c[i] as f64 * inv_k;
        }
    });

    // pooled per-path squared deviations, then a delta-method error bar for
    // the ratio of the two pooled variances
    let nf = n_paths as f64;
    let mut mean = vec![0.0f64; 2 * d];
    for (l, m) in mean.iter_mut().enumerate() {
        let col: Vec<f64> = (0..n_paths).map(|p| buf[p * stride + l]).collect();
        *m = pairwise_sum(&col) / nf;
    }
    let mut ab = vec![0.0f64; n_paths];
    let mut aw = vec![0.0f64; n_paths];
    for p in 0..n_paths {
        let (mut sb, mut sw) = (0.0, 0.0);
        for i in 0..d {
            let db = buf[p * stride + i] - mean[i];
            let dw = buf[p * stride + d + i] - mean[d + i];
            sb += db * db;
            sw += dw * dw;
        }
        ab[p] = sb / d as f64;
        aw[p] = sw / d as f64;
    }
    let sum_b = pairwise_sum(&ab);
    let sum_w = pairwise_sum(&aw);
    let var_base = sum_b / (nf - 1.0);
    let var_wide = sum_w / (nf - 1.0);
    let ratio = sum_w / sum_b;
    let (mb, mw) = (sum_b / nf, sum_w / nf);
    let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
    for p in 0..n_paths {
        let (xb, xw) = (ab[p] - mb, aw[p] - mw);
        va += xw * xw;
        vb += xb * xb;
        cab += xw * xb;
    }
    va /= nf;
    vb /= nf;
    cab /= nf;
    let se = math::sqrt(((va + ratio * ratio * vb - 2.0 * ratio * cab) / nf).max(0.0)) / mb;

    let s_base = shells::radial_sum(d, r_base as u64, d as f64).value;
    let s_wide = shells::radial_sum(d, r_wide as u64, d as f64).value;
    Ok(TruncationReport {
        d,
        k,
        r_base,
        r_wide,
        n_paths,
        var_base,
        var_wide,
        observed_increase: ratio - 1.0,
        predicted_increase: s_wide / s_base - 1.0,
        se3: 3.0 * se,
    })
}
