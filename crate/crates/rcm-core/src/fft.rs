//! Radix-2 complex FFT with n-dimensional helpers.
//!
//! Only power-of-two lengths are supported; every grid in this crate is
//! chosen power-of-two for exactly this reason. Data is split re/im, row
//! major with the last axis fastest. Strided axes are gathered into a
//! scratch line, transformed, and scattered back; at the grid sizes the
//! experiments use, line traffic is not the bottleneck.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Precomputed tables for one transform length.
pub struct Plan {
    n: usize,
    rev: Vec<u32>,
    tw_re: Vec<f64>,
    tw_im: Vec<f64>,
}

impl Plan {
    pub fn new(n: usize) -> Plan {
        assert!(n.is_power_of_two(), "transform length must be a power of two");
        let bits = n.trailing_zeros();
        let mut rev = vec![0u32; n];
        for (i, r) in rev.iter_mut().enumerate() {
            *r = (i as u32).reverse_bits() >> (32 - bits.max(1)) as u32;
        }
        if n == 1 {
            rev[0] = 0;
        }
        let half = n / 2;
        let mut tw_re = Vec::with_capacity(half.max(1));
        let mut tw_im = Vec::with_capacity(half.max(1));
        let step = -2.0 * core::f64::consts::PI / n as f64;
        for k in 0..half.max(1) {
            let ang = step * k as f64;
            tw_re.push(math::cos(ang));
            tw_im.push(math::sin(ang));
        }
        Plan { n, rev, tw_re, tw_im }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn transform(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let n = self.n;
        assert_eq!(re.len(), n);
        assert_eq!(im.len(), n);
        if n == 1 {
            return;
        }
        for i in 0..n {
            let j = self.rev[i] as usize;
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let sign = if inverse { -1.0 } else { 1.0 };
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            let mut base = 0;
            while base < n {
                for k in 0..half {
                    let wr = self.tw_re[k * stride];
                    let wi = sign * self.tw_im[k * stride];
                    let i0 = base + k;
                    let i1 = i0 + half;
                    let vr = re[i1] * wr - im[i1] * wi;
                    let vi = re[i1] * wi + im[i1] * wr;
                    re[i1] = re[i0] - vr;
                    im[i1] = im[i0] - vi;
                    re[i0] += vr;
                    im[i0] += vi;
                }
                base += len;
            }
            len <<= 1;
        }
        if inverse {
            let scale = 1.0 / n as f64;
            for v in re.iter_mut() {
                *v *= scale;
            }
            for v in im.iter_mut() {
                *v *= scale;
            }
        }
    }

    pub fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        self.transform(re, im, false);
    }

    pub fn inverse(&self, re: &mut [f64], im: &mut [f64]) {
        self.transform(re, im, true);
    }
}

/// In-place transform along every axis of a row-major array.
pub fn fft_nd(dims: &[usize], re: &mut [f64], im: &mut [f64], inverse: bool) {
    let total: usize = dims.iter().product();
    assert_eq!(re.len(), total);
    assert_eq!(im.len(), total);
    let mut plans: Vec<(usize, Plan)> = Vec::new();
    for (axis, &n) in dims.iter().enumerate() {
        if !plans.iter().any(|(m, _)| *m == n) {
            plans.push((n, Plan::new(n)));
        }
        let plan = &plans.iter().find(|(m, _)| *m == n).unwrap().1;
        let inner: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        if inner == 1 {
            for o in 0..outer {
                let s = o * n;
                plan.transform(&mut re[s..s + n], &mut im[s..s + n], inverse);
            }
        } else {
            let mut line_re = vec![0.0; n];
            let mut line_im = vec![0.0; n];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    for j in 0..n {
                        line_re[j] = re[base + j * inner];
                        line_im[j] = im[base + j * inner];
                    }
                    plan.transform(&mut line_re, &mut line_im, inverse);
                    for j in 0..n {
                        re[base + j * inner] = line_re[j];
                        im[base + j * inner] = line_im[j];
                    }
                }
            }
        }
    }
}

/// Cyclic convolution of two real arrays on the torus ∏ dims:
/// out[x] = Σ_y a[y]·b[(x − y) mod dims].
///
/// Both forward transforms ride one complex FFT (a + i·b), split in the
/// frequency domain by Hermitian symmetry.
pub fn cyclic_convolve_nd(dims: &[usize], a: &[f64], b: &[f64]) -> Vec<f64> {
    let total: usize = dims.iter().product();
    assert_eq!(a.len(), total);
    assert_eq!(b.len(), total);
    let mut re: Vec<f64> = a.to_vec();
    let mut im: Vec<f64> = b.to_vec();
    fft_nd(dims, &mut re, &mut im, false);

    // index of −x on the torus
    let neg_index = |idx: usize| -> usize {
        let mut rem = idx;
        let mut out = 0usize;
        let mut scale = total;
        for &n in dims {
            scale /= n;
            let c = rem / scale;
            rem %= scale;
            let nc = if c == 0 { 0 } else { n - c };
            out += nc * scale;
        }
        out
    };

    let mut prod_re = vec![0.0; total];
    let mut prod_im = vec![0.0; total];
    for x in 0..total {
        let y = neg_index(x);
        let ar = 0.5 * (re[x] + re[y]);
        let ai = 0.5 * (im[x] - im[y]);
        let br = 0.5 * (im[x] + im[y]);
        let bi = 0.5 * (re[y] - re[x]);
        prod_re[x] = ar * br - ai * bi;
        prod_im[x] = ar * bi + ai * br;
    }
    fft_nd(dims, &mut prod_re, &mut prod_im, true);
    prod_re
}
