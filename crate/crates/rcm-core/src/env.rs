//! Deterministic conductance environments.
//!
//! A conductance field is a pure function of (spec, unordered pair): the
//! pair is put in canonical (lexicographic) order, each site is packed
//! through a wrapping linear code, and finalizer rounds turn
//! (seed key, code, code) into a uniform variate that the law maps through
//! its inverse CDF. Distinct canonical pairs hit distinct counter positions
//! of the same keyed generator, which is what makes whole-space operators,
//! box operators, and walkers see one consistent environment with no stored
//! tables.

use crate::lattice::{Site, MAX_D};

/// Odd multipliers for the per-coordinate linear site code.
const MULT: [u64; MAX_D] = [
    0x9e3779b97f4a7c15,
    0xc2b2ae3d27d4eb4f,
    0x165667b19e3779f9,
    0x27d4eb2f165667c5,
];

const KEY_TWEAK: u64 = 0x6a09e667f3bcc909;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Wrapping linear site code. Linearity matters: for a fixed jump Z the
/// code of x+Z is code(x) + code(Z), so offset sweeps pay one add per pair.
#[inline]
pub fn encode_site(d: usize, x: &Site) -> u64 {
    let mut acc = 0u64;
    for i in 0..d {
        acc = acc.wrapping_add((x.c[i] as u64).wrapping_mul(MULT[i]));
    }
    acc
}

/// Lexicographic sign of a nonzero offset: true when x <_lex x + z, i.e.
/// the first nonzero coordinate of z is positive. Fixed per offset, so a
/// sweep canonicalizes once instead of per pair.
pub fn offset_lex_positive(d: usize, z: &Site) -> bool {
    for i in 0..d {
        if z.c[i] != 0 {
            return z.c[i] > 0;
        }
    }
    panic!("zero offset has no orientation");
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Law {
    /// w ≡ 1: the degenerate environment.
    Constant,
    /// Uniform on [lo, hi]; validation requires (lo+hi)/2 = 1.
    Uniform { lo: f64, hi: f64 },
    /// {1−δ, 1+δ} with equal mass.
    TwoPoint { delta: f64 },
}

impl Law {
    /// (C₁, C₂) support bounds.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Law::Constant => (1.0, 1.0),
            Law::Uniform { lo, hi } => (lo, hi),
            Law::TwoPoint { delta } => (1.0 - delta, 1.0 + delta),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Law::Constant => 1.0,
            Law::Uniform { lo, hi } => 0.5 * (lo + hi),
            Law::TwoPoint { .. } => 1.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Law::Constant => 0.0,
            Law::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Law::TwoPoint { delta } => delta * delta,
        }
    }
}

/// Default experiment law.
pub const DEFAULT_LAW: Law = Law::Uniform { lo: 0.5, hi: 1.5 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvironmentSpec {
    pub seed: u64,
    pub d: usize,
    pub law: Law,
    /// Interaction range of the randomness, in lattice units: pairs with
    /// |x−y| beyond it have conductance exactly 1. `None` puts independent
    /// randomness on every pair. A finite range keeps the field inside the
    /// admissible class (symmetric, independent, mean 1, uniformly
    /// elliptic) while leaving only finitely many random bonds per site,
    /// so box operators on it are exact rather than truncated.
    pub range: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpecViolation {
    BadDimension(usize),
    /// Law mean differs from 1.
    MeanNotOne(f64),
    /// Lower support bound C₁ is not strictly positive.
    NonPositiveLower(f64),
    InvertedBounds(f64, f64),
    /// Interaction range must be at least 1.
    BadRange(i64),
}

impl core::fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match *self {
            SpecViolation::BadDimension(d) => write!(f, "dimension {d} outside 1..=4"),
            SpecViolation::MeanNotOne(m) => write!(f, "law mean {m} differs from 1"),
            SpecViolation::NonPositiveLower(c1) => {
                write!(f, "lower conductance bound {c1} is not positive")
            }
            SpecViolation::InvertedBounds(lo, hi) => write!(f, "bounds inverted: {lo} > {hi}"),
            SpecViolation::BadRange(r) => write!(f, "interaction range {r} below 1"),
        }
    }
}

impl EnvironmentSpec {
    pub fn new(seed: u64, d: usize, law: Law) -> Result<Self, SpecViolation> {
        let spec = Self {
            seed,
            d,
            law,
            range: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Environment whose randomness stops beyond `range`.
    pub fn with_range(seed: u64, d: usize, law: Law, range: i64) -> Result<Self, SpecViolation> {
        let spec = Self {
            seed,
            d,
            law,
            range: Some(range),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Stable digest of the full spec, the cache and manifest key.
    pub fn digest(&self) -> u64 {
        let mut acc = mix64(self.seed ^ KEY_TWEAK);
        acc = mix64(acc ^ self.d as u64);
        let (tag, a, b) = match self.law {
            Law::Constant => (1u64, 0.0, 0.0),
            Law::Uniform { lo, hi } => (2, lo, hi),
            Law::TwoPoint { delta } => (3, delta, 0.0),
        };
        acc = mix64(acc ^ tag);
        acc = mix64(acc ^ a.to_bits());
        acc = mix64(acc ^ b.to_bits());
        match self.range {
            None => mix64(acc ^ u64::MAX),
            Some(r) => mix64(acc ^ r as u64),
        }
    }

    pub fn validate(&self) -> Result<(), SpecViolation> {
        if !(1..=MAX_D).contains(&self.d) {
            return Err(SpecViolation::BadDimension(self.d));
        }
        if let Some(r) = self.range {
            if r < 1 {
                return Err(SpecViolation::BadRange(r));
            }
        }
        match self.law {
            Law::Constant => {}
            Law::Uniform { lo, hi } => {
                if lo > hi {
                    return Err(SpecViolation::InvertedBounds(lo, hi));
                }
                if !(lo > 0.0) {
                    return Err(SpecViolation::NonPositiveLower(lo));
                }
                let mean = 0.5 * (lo + hi);
                if (mean - 1.0).abs() > 1e-12 {
                    return Err(SpecViolation::MeanNotOne(mean));
                }
            }
            Law::TwoPoint { delta } => {
                if !(delta >= 0.0) {
                    return Err(SpecViolation::InvertedBounds(1.0 - delta, 1.0 + delta));
                }
                if delta >= 1.0 {
                    return Err(SpecViolation::NonPositiveLower(1.0 - delta));
                }
            }
        }
        Ok(())
    }
}

/// The conductance field of one environment. Copyable view, no state.
#[derive(Clone, Copy, Debug)]
pub struct ConductanceField {
    spec: EnvironmentSpec,
    key: u64,
}

impl ConductanceField {
    pub fn new(spec: EnvironmentSpec) -> Self {
        debug_assert!(spec.validate().is_ok());
        Self {
            spec,
            key: mix64(spec.seed ^ KEY_TWEAK),
        }
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn encode(&self, x: &Site) -> u64 {
        encode_site(self.spec.d, x)
    }

    /// Conductance of the unordered pair {x, y}, x ≠ y.
    pub fn weight(&self, x: &Site, y: &Site) -> f64 {
        assert_ne!(x.c, y.c, "conductance needs two distinct sites");
        if matches!(self.spec.law, Law::Constant) {
            return 1.0;
        }
        if let Some(r) = self.spec.range {
            if y.sub(x).norm_sq(self.spec.d) > r * r {
                return 1.0;
            }
        }
        let (a, b) = if x.c <= y.c { (x, y) } else { (y, x) };
        self.weight_codes(self.encode(a), self.encode(b))
    }

    /// Radius beyond which ξ vanishes identically: the spec range, or the
    /// caller's own cap when the randomness is unbounded. Offset sweeps clip
    /// their tables with this so `weight_codes` is only asked about pairs
    /// that are actually random.
    pub fn xi_range(&self, cap: i64) -> i64 {
        match self.spec.law {
            Law::Constant => 0,
            _ => match self.spec.range {
                Some(r) => r.min(cap),
                None => cap,
            },
        }
    }

    /// Fluctuation ξ = w − 1. Exact: w ∈ [C₁, C₂] ⊂ [0.5·C₁, 2] keeps the
    /// subtraction lossless for every supported law.
    pub fn xi(&self, x: &Site, y: &Site) -> f64 {
        self.weight(x, y) - 1.0
    }

    /// Hot path: `ea`, `eb` are site codes already in canonical pair order
    /// (code of the lexicographically smaller site first). Does not apply
    /// the interaction range: only call for pairs within `xi_range`.
    #[inline]
    pub fn weight_codes(&self, ea: u64, eb: u64) -> f64 {
        match self.spec.law {
            Law::Constant => 1.0,
            Law::Uniform { lo, hi } => {
                let u = self.uniform(ea, eb);
                lo + (hi - lo) * u
            }
            Law::TwoPoint { delta } => {
                if self.uniform(ea, eb) < 0.5 {
                    1.0 - delta
                } else {
                    1.0 + delta
                }
            }
        }
    }

    #[inline]
    pub fn xi_codes(&self, ea: u64, eb: u64) -> f64 {
        self.weight_codes(ea, eb) - 1.0
    }

    #[inline]
    fn uniform(&self, ea: u64, eb: u64) -> f64 {
        let h = mix64(mix64(self.key ^ ea) ^ eb);
        (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::site;

    fn uniform_field(seed: u64, d: usize) -> ConductanceField {
        ConductanceField::new(EnvironmentSpec::new(seed, d, DEFAULT_LAW).unwrap())
    }

    struct Lcg(u64);

    impl Lcg {
        fn next(&mut self) -> u64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            self.0
        }

        fn coord(&mut self) -> i64 {
            (self.next() >> 40) as i64 - (1 << 23)
        }
    }

    #[test]
    fn validation() {
        assert!(EnvironmentSpec::new(1, 3, Law::Uniform { lo: 0.5, hi: 1.5 }).is_ok());
        assert_eq!(
            EnvironmentSpec::new(1, 3, Law::Uniform { lo: 0.2, hi: 1.0 }).unwrap_err(),
            SpecViolation::MeanNotOne(0.6)
        );
        assert_eq!(
            EnvironmentSpec::new(1, 3, Law::TwoPoint { delta: 1.0 }).unwrap_err(),
            SpecViolation::NonPositiveLower(0.0)
        );
        assert_eq!(
            EnvironmentSpec::new(1, 3, Law::Uniform { lo: -0.5, hi: 2.5 }).unwrap_err(),
            SpecViolation::NonPositiveLower(-0.5)
        );
        assert_eq!(
            EnvironmentSpec::new(1, 7, Law::Constant).unwrap_err(),
            SpecViolation::BadDimension(7)
        );
    }

    #[test]
    fn constant_law_is_one() {
        let f = ConductanceField::new(EnvironmentSpec::new(9, 3, Law::Constant).unwrap());
        let mut rng = Lcg(1);
        for _ in 0..100 {
            let x = site(&[rng.coord(), rng.coord(), rng.coord()]);
            let y = site(&[rng.coord(), rng.coord(), rng.coord()]);
            if x == y {
                continue;
            }
            assert_eq!(f.weight(&x, &y), 1.0);
        }
    }

    #[test]
    fn symmetry_and_bounds_bulk() {
        // 2e5 random pairs across several seeds and dimensions
        let mut rng = Lcg(77);
        for seed in 0..4u64 {
            for d in 1..=4usize {
                let f = uniform_field(seed, d);
                for _ in 0..50_000 / 4 {
                    let mut xc = [0i64; 4];
                    let mut yc = [0i64; 4];
                    for i in 0..d {
                        xc[i] = rng.coord();
                        yc[i] = rng.coord();
                    }
                    let x = site(&xc[..d]);
                    let y = site(&yc[..d]);
                    if x == y {
                        continue;
                    }
                    let w = f.weight(&x, &y);
                    assert_eq!(w, f.weight(&y, &x));
                    assert!((0.5..=1.5).contains(&w), "w={w}");
                    assert_eq!(f.xi(&x, &y), w - 1.0);
                }
            }
        }
    }

    #[test]
    fn determinism_across_instances() {
        let f1 = uniform_field(42, 3);
        let f2 = uniform_field(42, 3);
        let f3 = uniform_field(43, 3);
        let mut rng = Lcg(5);
        let mut all_equal_to_f3 = true;
        for _ in 0..1000 {
            let x = site(&[rng.coord(), rng.coord(), rng.coord()]);
            let y = x.add(&site(&[1, 0, 0]));
            assert_eq!(f1.weight(&x, &y).to_bits(), f2.weight(&x, &y).to_bits());
            all_equal_to_f3 &= f1.weight(&x, &y) == f3.weight(&x, &y);
        }
        assert!(!all_equal_to_f3, "different seeds must give different fields");
    }

    #[test]
    fn code_linearity_matches_weight() {
        let f = uniform_field(4, 3);
        let z = site(&[2, -1, 3]);
        let dz = encode_site(3, &z);
        assert!(offset_lex_positive(3, &z));
        let mut rng = Lcg(9);
        for _ in 0..200 {
            let x = site(&[rng.coord(), rng.coord(), rng.coord()]);
            let y = x.add(&z);
            let ex = f.encode(&x);
            assert_eq!(f.encode(&y), ex.wrapping_add(dz));
            // z is lex-positive, so x is the canonical first element
            assert_eq!(
                f.weight(&x, &y).to_bits(),
                f.weight_codes(ex, ex.wrapping_add(dz)).to_bits()
            );
        }
    }

    #[test]
    fn offset_orientation() {
        assert!(offset_lex_positive(3, &site(&[0, 0, 5])));
        assert!(!offset_lex_positive(3, &site(&[0, -2, 5])));
        assert!(offset_lex_positive(2, &site(&[1, -9])));
    }

    #[test]
    fn moments_match_law() {
        // pair enumeration: fixed offset, sliding base site
        let f = uniform_field(2024, 3);
        let n = 1_000_000usize;
        let step = site(&[0, 0, 1]);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut lag = 0.0;
        let mut prev = f64::NAN;
        let mut x = site(&[3, -8, 0]);
        for _ in 0..n {
            let w = f.weight(&x, &x.add(&step));
            sum += w;
            sum_sq += w * w;
            if !prev.is_nan() {
                lag += (prev - 1.0) * (w - 1.0);
            }
            prev = w;
            x.c[2] += 1;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        // mean: within 3σ/√n of 1, σ² = 1/12
        let mean_tol = 3.0 * (1.0f64 / 12.0).sqrt() / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < mean_tol, "mean={mean}");
        // variance: within 4·SE of 1/12, SE = sqrt((μ4 − σ⁴)/n), μ4 = 1/80
        let se = ((1.0 / 80.0 - 1.0f64 / 144.0) / n as f64).sqrt();
        assert!((var - 1.0 / 12.0).abs() < 4.0 * se, "var={var}");
        // lag-1 correlation along the enumeration
        let rho = (lag / (n - 1) as f64) / var;
        assert!(rho.abs() < 0.01, "lag-1 correlation {rho}");
    }

    #[test]
    fn finite_range_masks_the_unranged_field() {
        let free = uniform_field(11, 3);
        let spec = EnvironmentSpec::with_range(11, 3, DEFAULT_LAW, 4).unwrap();
        let ranged = ConductanceField::new(spec);
        assert_eq!(ranged.xi_range(1000), 4);
        assert_eq!(free.xi_range(1000), 1000);
        let mut rng = Lcg(63);
        let mut saw_far = 0;
        for _ in 0..4000 {
            let x = site(&[rng.coord(), rng.coord(), rng.coord()]);
            let z = site(&[
                (rng.next() % 13) as i64 - 6,
                (rng.next() % 13) as i64 - 6,
                (rng.next() % 13) as i64 - 6,
            ]);
            if z == Site::zero() {
                continue;
            }
            let y = x.add(&z);
            let w = ranged.weight(&x, &y);
            if z.norm_sq(3) > 16 {
                assert_eq!(w, 1.0);
                saw_far += 1;
            } else {
                // within range the two specs sample the same bond variate
                assert_eq!(w.to_bits(), free.weight(&x, &y).to_bits());
            }
        }
        assert!(saw_far > 500);
        assert!(EnvironmentSpec::with_range(1, 3, DEFAULT_LAW, 0).is_err());
    }

    #[test]
    fn two_point_signs_couple_across_delta() {
        // same underlying uniform: the ± pattern is identical for any δ
        let spec_a = EnvironmentSpec::new(5, 3, Law::TwoPoint { delta: 0.1 }).unwrap();
        let spec_b = EnvironmentSpec::new(5, 3, Law::TwoPoint { delta: 0.2 }).unwrap();
        let fa = ConductanceField::new(spec_a);
        let fb = ConductanceField::new(spec_b);
        let mut rng = Lcg(31);
        for _ in 0..2000 {
            let x = site(&[rng.coord(), rng.coord(), rng.coord()]);
            let y = x.add(&site(&[0, 1, 0]));
            let sa = fa.weight(&x, &y) > 1.0;
            let sb = fb.weight(&x, &y) > 1.0;
            assert_eq!(sa, sb);
            let w = fa.weight(&x, &y);
            assert!(w == 0.9 || w == 1.1);
        }
    }
}
