//! Lattice geometry: boxes, dyadic partitions, grid fields, measures, norms.
//!
//! A box B_R(y) is y + (−R, R]^d: open below, closed above, so exactly
//! (2R)^d sites. Enumeration (and hence every field layout and
//! serialization) is lexicographic on coordinates: first coordinate most
//! significant. That ordering is the backbone of bitwise-reproducible
//! caches, so nothing in this crate is allowed to iterate a box any other
//! way when producing stored values.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::sum::{self, Compensated};

pub const MAX_D: usize = 4;

/// Point of ℤ^d. Coordinates at indices ≥ d are kept at zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, PartialOrd, Ord)]
pub struct Site {
    pub c: [i64; MAX_D],
}

impl Site {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_slice(coords: &[i64]) -> Self {
        assert!(coords.len() <= MAX_D);
        let mut c = [0i64; MAX_D];
        c[..coords.len()].copy_from_slice(coords);
        Self { c }
    }

    #[inline]
    pub fn add(&self, o: &Site) -> Site {
        let mut c = [0i64; MAX_D];
        for i in 0..MAX_D {
            c[i] = self.c[i] + o.c[i];
        }
        Site { c }
    }

    #[inline]
    pub fn sub(&self, o: &Site) -> Site {
        let mut c = [0i64; MAX_D];
        for i in 0..MAX_D {
            c[i] = self.c[i] - o.c[i];
        }
        Site { c }
    }

    /// Squared Euclidean norm over the first d coordinates.
    #[inline]
    pub fn norm_sq(&self, d: usize) -> i64 {
        let mut s = 0;
        for i in 0..d {
            s += self.c[i] * self.c[i];
        }
        s
    }

    #[inline]
    pub fn linf(&self, d: usize) -> i64 {
        let mut m = 0;
        for i in 0..d {
            m = m.max(self.c[i].abs());
        }
        m
    }

    /// Physical position on the lattice k^{−1}ℤ^d.
    pub fn position(&self, d: usize, k: i64) -> [f64; MAX_D] {
        let inv = 1.0 / k as f64;
        let mut x = [0.0; MAX_D];
        for i in 0..d {
            x[i] = self.c[i] as f64 * inv;
        }
        x
    }
}

/// Convenience constructor used throughout tests and experiment setup.
pub fn site(coords: &[i64]) -> Site {
    Site::from_slice(coords)
}

/// B_R(center) = center + (−R, R]^d.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxSpec {
    pub d: usize,
    pub center: Site,
    pub half: i64,
}

impl BoxSpec {
    pub fn new(d: usize, center: Site, half: i64) -> Self {
        assert!((1..=MAX_D).contains(&d), "d must be in 1..=4");
        assert!(half >= 1, "halfwidth must be positive");
        for i in d..MAX_D {
            assert_eq!(center.c[i], 0, "center must live in ℤ^d");
        }
        Self { d, center, half }
    }

    pub fn centered(d: usize, half: i64) -> Self {
        Self::new(d, Site::zero(), half)
    }

    /// Sites per axis.
    #[inline]
    pub fn width(&self) -> i64 {
        2 * self.half
    }

    /// Smallest coordinate on `axis` (inclusive).
    #[inline]
    pub fn lo(&self, axis: usize) -> i64 {
        self.center.c[axis] - self.half + 1
    }

    /// Largest coordinate on `axis` (inclusive).
    #[inline]
    pub fn hi(&self, axis: usize) -> i64 {
        self.center.c[axis] + self.half
    }

    pub fn site_count(&self) -> usize {
        let w = self.width() as u128;
        let n = w.pow(self.d as u32);
        assert!(n <= usize::MAX as u128, "box too large to index");
        n as usize
    }

    #[inline]
    pub fn contains(&self, x: &Site) -> bool {
        for i in 0..self.d {
            let r = x.c[i] - self.center.c[i];
            if r <= -self.half || r > self.half {
                return false;
            }
        }
        true
    }

    pub fn contains_box(&self, inner: &BoxSpec) -> bool {
        assert_eq!(self.d, inner.d);
        (0..self.d).all(|i| self.lo(i) <= inner.lo(i) && inner.hi(i) <= self.hi(i))
    }

    /// Canonical (lexicographic) index of a member site.
    #[inline]
    pub fn index_of(&self, x: &Site) -> usize {
        debug_assert!(self.contains(x), "site outside box");
        let w = self.width();
        let mut idx = 0i64;
        for i in 0..self.d {
            idx = idx * w + (x.c[i] - self.lo(i));
        }
        idx as usize
    }

    /// Inverse of `index_of`.
    pub fn site_at(&self, mut idx: usize) -> Site {
        let w = self.width() as usize;
        let mut c = [0i64; MAX_D];
        for i in (0..self.d).rev() {
            c[i] = self.lo(i) + (idx % w) as i64;
            idx /= w;
        }
        debug_assert_eq!(idx, 0);
        Site { c }
    }

    /// Lexicographic site iterator.
    pub fn iter(&self) -> BoxIter {
        BoxIter {
            b: *self,
            next: 0,
            total: self.site_count(),
        }
    }
}

pub struct BoxIter {
    b: BoxSpec,
    next: usize,
    total: usize,
}

impl Iterator for BoxIter {
    type Item = Site;

    fn next(&mut self) -> Option<Site> {
        if self.next >= self.total {
            return None;
        }
        let s = self.b.site_at(self.next);
        self.next += 1;
        Some(s)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = self.total - self.next;
        (rem, Some(rem))
    }
}

impl ExactSizeIterator for BoxIter {}

/// All sites of the box in canonical order. Only for boxes small enough to
/// materialize; bulk code walks `BoxSpec::iter` or raw indices instead.
pub fn enumerate_box(b: &BoxSpec) -> Vec<Site> {
    b.iter().collect()
}

/// Centers ℤ^d_{m,n} of the dyadic partition of B_{2^m} into boxes of
/// halfwidth 2^n: coordinates are odd multiples of 2^n inside (−2^m, 2^m].
/// For n = m the only center is the origin.
pub fn dyadic_centers(d: usize, m: u32, n: u32) -> Vec<Site> {
    assert!((1..=MAX_D).contains(&d));
    assert!(n <= m, "cell scale exceeds box scale");
    if n == m {
        return vec![Site::zero()];
    }
    let half_ratio = 1i64 << (m - n);
    let axis: Vec<i64> = (-(half_ratio - 1)..=half_ratio - 1)
        .step_by(2)
        .map(|q| q << n)
        .collect();
    debug_assert_eq!(axis.len() as i64, half_ratio);
    let mut out = Vec::with_capacity(axis.len().pow(d as u32));
    let mut idx = [0usize; MAX_D];
    loop {
        let mut c = [0i64; MAX_D];
        for i in 0..d {
            c[i] = axis[idx[i]];
        }
        out.push(Site { c });
        // lexicographic odometer, last coordinate fastest
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < axis.len() {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// Measure choice for norms on box fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    /// Unit mass per site.
    Counting,
    /// Mass k^{−d} per site of k^{−1}ℤ^d, so a unit cube has measure 1.
    Normalized,
}

/// Scalar or vector values on the sites of a box of the lattice k^{−1}ℤ^d.
///
/// Box coordinates are in lattice units (integers); physical positions are
/// site/k. Layout is site-major in canonical order, components contiguous
/// per site.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub domain: BoxSpec,
    /// Spacing denominator: 1 for the unscaled lattice.
    pub k: i64,
    pub vdim: usize,
    pub data: Vec<f64>,
}

impl GridField {
    pub fn zeros(domain: BoxSpec, k: i64, vdim: usize) -> Self {
        assert!(k >= 1);
        assert!(vdim >= 1);
        let len = domain
            .site_count()
            .checked_mul(vdim)
            .expect("field too large");
        Self {
            domain,
            k,
            vdim,
            data: vec![0.0; len],
        }
    }

    /// Builds a scalar field by evaluating `f` at every site in canonical
    /// order.
    pub fn from_fn(domain: BoxSpec, k: i64, mut f: impl FnMut(&Site) -> f64) -> Self {
        let mut out = Self::zeros(domain, k, 1);
        for (i, s) in domain.iter().enumerate() {
            out.data[i] = f(&s);
        }
        out
    }

    #[inline]
    pub fn value(&self, x: &Site, comp: usize) -> f64 {
        self.data[self.domain.index_of(x) * self.vdim + comp]
    }

    #[inline]
    pub fn scalar(&self, x: &Site) -> f64 {
        debug_assert_eq!(self.vdim, 1);
        self.data[self.domain.index_of(x)]
    }

    #[inline]
    pub fn set(&mut self, x: &Site, comp: usize, v: f64) {
        let i = self.domain.index_of(x) * self.vdim + comp;
        self.data[i] = v;
    }

    /// Mass of one site under `measure`.
    pub fn site_weight(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Counting => 1.0,
            Measure::Normalized => math::powi(1.0 / self.k as f64, self.domain.d as i32),
        }
    }

    /// sqrt( Σ_x weight · |f(x)|² ), all components included.
    pub fn l2_norm(&self, measure: Measure) -> f64 {
        math::sqrt(self.site_weight(measure) * sum::sum_sq(&self.data))
    }

    /// Componentwise average over `b` (must be contained in the domain).
    pub fn cell_average(&self, b: &BoxSpec) -> Vec<f64> {
        assert!(
            self.domain.contains_box(b),
            "average window leaves the field domain"
        );
        let mut acc = vec![Compensated::new(); self.vdim];
        for s in b.iter() {
            let base = self.domain.index_of(&s) * self.vdim;
            for (c, a) in acc.iter_mut().enumerate() {
                a.add(self.data[base + c]);
            }
        }
        let n = b.site_count() as f64;
        acc.iter().map(|a| a.value() / n).collect()
    }

    /// Subtracts the average over the whole domain from every value
    /// (componentwise), returning the removed averages.
    pub fn center(&mut self) -> Vec<f64> {
        let domain = self.domain;
        let avg = self.cell_average(&domain);
        for chunk in self.data.chunks_mut(self.vdim) {
            for (c, v) in chunk.iter_mut().enumerate() {
                *v -= avg[c];
            }
        }
        avg
    }

    /// Piecewise-constant extension of a scalar field to ℝ^d: the value at
    /// the anchor of the cell containing x, 0 outside the domain. Cells are
    /// anchored so that a lattice point evaluates to its own value and an
    /// interior point x to the site floor(k·x) (componentwise).
    pub fn extend_scalar(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.vdim, 1);
        let mut a = [0i64; MAX_D];
        for i in 0..self.domain.d {
            a[i] = math::floor(self.k as f64 * x[i]) as i64;
        }
        let s = Site { c: a };
        if self.domain.contains(&s) {
            self.scalar(&s)
        } else {
            0.0
        }
    }
}

/// Field codec: canonical-order binary layout with a fixed header.
pub mod codec {
    use super::*;

    const MAGIC: u32 = 0x474c4446; // "GLDF"
    const VERSION: u32 = 1;

    #[derive(Debug, Clone, PartialEq, Eq)]
    pub enum CodecError {
        Truncated,
        BadMagic,
        BadVersion(u32),
        BadHeader,
    }

    impl core::fmt::Display for CodecError {
        fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
            match self {
                CodecError::Truncated => write!(f, "field blob truncated"),
                CodecError::BadMagic => write!(f, "not a field blob"),
                CodecError::BadVersion(v) => write!(f, "unsupported field format version {v}"),
                CodecError::BadHeader => write!(f, "inconsistent field header"),
            }
        }
    }

    struct Reader<'a> {
        buf: &'a [u8],
        at: usize,
    }

    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
            if self.at + n > self.buf.len() {
                return Err(CodecError::Truncated);
            }
            let s = &self.buf[self.at..self.at + n];
            self.at += n;
            Ok(s)
        }

        fn u32(&mut self) -> Result<u32, CodecError> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }

        fn i64(&mut self) -> Result<i64, CodecError> {
            Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
    }

    /// Header: magic, version, d, vdim, k, center (d × i64), halfwidth;
    /// then site-major values as little-endian f64.
    pub fn to_bytes(f: &GridField) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * (f.domain.d + f.data.len()));
        out.extend_from_slice(&MAGIC.to_le_bytes());
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(f.domain.d as u32).to_le_bytes());
        out.extend_from_slice(&(f.vdim as u32).to_le_bytes());
        out.extend_from_slice(&f.k.to_le_bytes());
        for i in 0..f.domain.d {
            out.extend_from_slice(&f.domain.center.c[i].to_le_bytes());
        }
        out.extend_from_slice(&f.domain.half.to_le_bytes());
        for v in &f.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<GridField, CodecError> {
        let mut r = Reader { buf, at: 0 };
        if r.u32()? != MAGIC {
            return Err(CodecError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CodecError::BadVersion(version));
        }
        let d = r.u32()? as usize;
        let vdim = r.u32()? as usize;
        let k = r.i64()?;
        if !(1..=MAX_D).contains(&d) || vdim == 0 || k < 1 {
            return Err(CodecError::BadHeader);
        }
        let mut center = Site::zero();
        for i in 0..d {
            center.c[i] = r.i64()?;
        }
        let half = r.i64()?;
        if half < 1 {
            return Err(CodecError::BadHeader);
        }
        let domain = BoxSpec::new(d, center, half);
        let count = domain
            .site_count()
            .checked_mul(vdim)
            .ok_or(CodecError::BadHeader)?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f64::from_bits(r.i64()? as u64));
        }
        if r.at != buf.len() {
            return Err(CodecError::BadHeader);
        }
        Ok(GridField {
            domain,
            k,
            vdim,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_field(domain: BoxSpec, k: i64, seed: u64) -> GridField {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        GridField::from_fn(domain, k, |_| next())
    }

    #[test]
    fn enumerate_small_boxes() {
        let b1 = BoxSpec::centered(1, 1);
        assert_eq!(enumerate_box(&b1), vec![site(&[0]), site(&[1])]);

        let b2 = BoxSpec::centered(2, 1);
        assert_eq!(
            enumerate_box(&b2),
            vec![site(&[0, 0]), site(&[0, 1]), site(&[1, 0]), site(&[1, 1])]
        );

        let b3 = BoxSpec::centered(3, 4);
        assert_eq!(enumerate_box(&b3).len(), 512);
    }

    #[test]
    fn enumeration_is_lexicographic_and_indexable() {
        let b = BoxSpec::new(3, site(&[5, -2, 0]), 3);
        let sites = enumerate_box(&b);
        let mut sorted = sites.clone();
        sorted.sort();
        assert_eq!(sites, sorted);
        for (i, s) in sites.iter().enumerate() {
            assert_eq!(b.index_of(s), i);
            assert_eq!(b.site_at(i), *s);
        }
    }

    #[test]
    fn box_cardinality() {
        for d in 1..=3 {
            for half in [1i64, 2, 5, 17, 64] {
                if (2 * half).pow(d as u32) > 1_000_000 {
                    continue;
                }
                let b = BoxSpec::centered(d, half);
                assert_eq!(b.iter().count(), (2 * half as usize).pow(d as u32));
            }
        }
    }

    #[test]
    fn membership_is_half_open() {
        let b = BoxSpec::centered(2, 2);
        assert!(b.contains(&site(&[2, 2])));
        assert!(!b.contains(&site(&[-2, 0])));
        assert!(b.contains(&site(&[-1, 2])));
        assert!(!b.contains(&site(&[3, 0])));
    }

    #[test]
    fn dyadic_examples() {
        assert_eq!(dyadic_centers(1, 2, 1), vec![site(&[-2]), site(&[2])]);
        assert_eq!(dyadic_centers(2, 3, 1).len(), 16);
        assert_eq!(dyadic_centers(3, 4, 4), vec![Site::zero()]);
    }

    #[test]
    fn dyadic_partition_tiles_the_box() {
        for d in 1..=3usize {
            for m in 1..=5u32 {
                if (1usize << (d as u32 * m)) > 40_000 {
                    continue;
                }
                for n in 0..m {
                    let centers = dyadic_centers(d, m, n);
                    assert_eq!(centers.len(), 1usize << (d * (m - n) as usize));
                    let mut seen = alloc::collections::BTreeSet::new();
                    for z in &centers {
                        let cell = BoxSpec::new(d, *z, 1 << n);
                        for s in cell.iter() {
                            assert!(seen.insert(s), "cells overlap at {s:?}");
                        }
                    }
                    let whole: alloc::collections::BTreeSet<Site> =
                        BoxSpec::centered(d, 1 << m).iter().collect();
                    assert_eq!(seen, whole);
                }
            }
        }
    }

    #[test]
    fn cell_average_matches_second_path() {
        let b = BoxSpec::centered(3, 4);
        let f = lcg_field(b, 1, 42);
        let avg = f.cell_average(&b)[0];
        // independent path: plain pairwise sum over a collected copy
        let oracle = sum::pairwise_sum(&f.data) / f.data.len() as f64;
        assert!((avg - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));

        let constant = GridField::from_fn(b, 1, |_| 3.25);
        assert_eq!(constant.cell_average(&b)[0], 3.25);

        let mut two = GridField::zeros(BoxSpec::centered(1, 1), 1, 1);
        two.set(&site(&[0]), 0, 0.0);
        two.set(&site(&[1]), 0, 2.0);
        assert_eq!(two.cell_average(&BoxSpec::centered(1, 1))[0], 1.0);
    }

    #[test]
    fn centering_zeroes_the_average() {
        let b = BoxSpec::centered(3, 4);
        let mut f = lcg_field(b, 1, 7);
        f.center();
        assert!(f.cell_average(&b)[0].abs() <= 1e-12);
    }

    #[test]
    fn l2_norms() {
        let b = BoxSpec::centered(2, 4);
        let zero = GridField::zeros(b, 4, 1);
        assert_eq!(zero.l2_norm(Measure::Counting), 0.0);

        let mut ind = GridField::zeros(b, 4, 1);
        ind.set(&site(&[1, 1]), 0, 1.0);
        let want = math::powi(1.0 / 4.0, 1); // k^{−d/2} = 4^{−1}
        assert!((ind.l2_norm(Measure::Normalized) - want).abs() < 1e-15);

        let f = lcg_field(b, 4, 9);
        let mut acc = Compensated::new();
        for &v in &f.data {
            acc.add(v * v);
        }
        let oracle = math::sqrt(acc.value());
        let got = f.l2_norm(Measure::Counting);
        assert!((got - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }

    #[test]
    fn extension_anchor_rule() {
        let b = BoxSpec::centered(2, 4);
        let f = lcg_field(b, 2, 5);
        // exactly on a lattice point: the point's own value
        assert_eq!(f.extend_scalar(&[0.5, -1.0]), f.scalar(&site(&[1, -2])));
        // interior of a cell: the floor anchor
        assert_eq!(f.extend_scalar(&[0.3, 0.3]), f.scalar(&site(&[0, 0])));
        assert_eq!(f.extend_scalar(&[-0.3, 0.6]), f.scalar(&site(&[-1, 1])));
        // outside the window: zero
        assert_eq!(f.extend_scalar(&[9.0, 0.0]), 0.0);
    }

    #[test]
    fn extension_l2_matches_normalized_norm() {
        // cellwise integration oracle: the extension is constant per cell of
        // volume k^{−d}, so ∫|f|² = k^{−d} Σ |f(z)|².
        let k = 3;
        let b = BoxSpec::centered(2, 3);
        let f = lcg_field(b, k, 13);
        let mut acc = Compensated::new();
        for s in b.iter() {
            let v = f.scalar(&s);
            // midpoint of the cell anchored at s
            let x = [
                (s.c[0] as f64 + 0.5) / k as f64,
                (s.c[1] as f64 + 0.5) / k as f64,
            ];
            assert_eq!(f.extend_scalar(&x), v);
            acc.add(v * v * math::powi(1.0 / k as f64, 2));
        }
        let integral = math::sqrt(acc.value());
        let norm = f.l2_norm(Measure::Normalized);
        assert!((integral - norm).abs() <= 1e-12 * norm.max(1.0));
    }

    #[test]
    fn codec_roundtrip_is_bitwise() {
        let b = BoxSpec::new(3, site(&[1, -7, 2]), 2);
        let mut f = lcg_field(b, 8, 77);
        f.vdim = 1;
        let blob = codec::to_bytes(&f);
        let back = codec::from_bytes(&blob).unwrap();
        assert_eq!(f.domain, back.domain);
        assert_eq!(f.k, back.k);
        assert_eq!(f.vdim, back.vdim);
        assert_eq!(f.data.len(), back.data.len());
        for (a, b) in f.data.iter().zip(back.data.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn codec_rejects_garbage() {
        assert_eq!(codec::from_bytes(&[1, 2, 3]), Err(codec::CodecError::Truncated));
        let b = BoxSpec::centered(1, 1);
        let f = GridField::zeros(b, 1, 1);
        let mut blob = codec::to_bytes(&f);
        blob[0] ^= 0xff;
        assert_eq!(codec::from_bytes(&blob), Err(codec::CodecError::BadMagic));
    }
}
