//! Cross-checks the in-crate FFT against rustfft.

use rustfft::{num_complex::Complex64, FftPlanner};

fn lcg(state: &mut u64) -> f64 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    ((*state >> 11) as f64) / (1u64 << 53) as f64 - 0.5
}

#[test]
fn matches_rustfft_1d() {
    let mut planner = FftPlanner::new();
    for n in [2usize, 8, 64, 512, 4096] {
        let mut state = n as u64;
        let re: Vec<f64> = (0..n).map(|_| lcg(&mut state)).collect();
        let im: Vec<f64> = (0..n).map(|_| lcg(&mut state)).collect();

        let mut buf: Vec<Complex64> = re
            .iter()
            .zip(&im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect();
        planner.plan_fft_forward(n).process(&mut buf);

        let plan = rcm_core::fft::Plan::new(n);
        let (mut gr, mut gi) = (re, im);
        plan.forward(&mut gr, &mut gi);

        for k in 0..n {
            assert!(
                (gr[k] - buf[k].re).abs() < 1e-9 && (gi[k] - buf[k].im).abs() < 1e-9,
                "n={n} k={k}"
            );
        }
    }
}

#[test]
fn matches_rustfft_3d() {
    let dims = [16usize, 8, 32];
    let total: usize = dims.iter().product();
    let mut state = 42u64;
    let re: Vec<f64> = (0..total).map(|_| lcg(&mut state)).collect();
    let im: Vec<f64> = (0..total).map(|_| lcg(&mut state)).collect();

    // rustfft axis by axis
    let mut buf: Vec<Complex64> = re
        .iter()
        .zip(&im)
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect();
    let mut planner = FftPlanner::new();
    for axis in 0..3 {
        let n = dims[axis];
        let fft = planner.plan_fft_forward(n);
        let inner: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for j in 0..n {
                    line[j] = buf[base + j * inner];
                }
                fft.process(&mut line);
                for j in 0..n {
                    buf[base + j * inner] = line[j];
                }
            }
        }
    }

    let (mut gr, mut gi) = (re, im);
    rcm_core::fft::fft_nd(&dims, &mut gr, &mut gi, false);
    for x in 0..total {
        assert!((gr[x] - buf[x].re).abs() < 1e-9 && (gi[x] - buf[x].im).abs() < 1e-9);
    }
}
