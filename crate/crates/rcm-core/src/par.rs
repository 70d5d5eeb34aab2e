//! Bulk-work abstraction.
//!
//! The core crate never spawns threads. Bulk work is phrased as jobs over a
//! chunk grid that is fixed by the problem (never by worker count); outputs
//! go to disjoint slices or are reduced in job-index order. Any conforming
//! executor therefore produces bitwise-identical results, which is what the
//! determinism contract of the whole laboratory rests on.

use alloc::vec;
use alloc::vec::Vec;

use crate::sum::Compensated;

pub type ChunkJob<'a> = dyn Fn(usize, usize, &mut [f64]) + Sync + 'a;
pub type PartialJob<'a> = dyn Fn(usize, &mut [f64]) + Sync + 'a;

pub trait Executor: Sync {
    /// Fills `out` in consecutive pieces of `chunk_len` (last one ragged).
    /// `job(chunk_index, global_start, piece)` must depend only on its
    /// arguments.
    fn fill(&self, out: &mut [f64], chunk_len: usize, job: &ChunkJob<'_>);

    /// Runs `job(i, scratch)` for i in 0..jobs; each job writes `width`
    /// partial values into a zeroed scratch. Partials are combined per lane
    /// with Neumaier compensation in increasing i, regardless of execution
    /// order.
    fn reduce(&self, jobs: usize, width: usize, job: &PartialJob<'_>) -> Vec<f64>;
}

/// Runs every job on the calling thread.
pub struct Serial;

impl Executor for Serial {
    fn fill(&self, out: &mut [f64], chunk_len: usize, job: &ChunkJob<'_>) {
        assert!(chunk_len > 0);
        for (i, piece) in out.chunks_mut(chunk_len).enumerate() {
            job(i, i * chunk_len, piece);
        }
    }

    fn reduce(&self, jobs: usize, width: usize, job: &PartialJob<'_>) -> Vec<f64> {
        let mut acc = vec![Compensated::new(); width];
        let mut scratch = vec![0.0; width];
        for i in 0..jobs {
            scratch.iter_mut().for_each(|v| *v = 0.0);
            job(i, &mut scratch);
            for (a, &v) in acc.iter_mut().zip(scratch.iter()) {
                a.add(v);
            }
        }
        acc.iter().map(Compensated::value).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_covers_every_index_once() {
        let mut out = vec![0.0; 1003];
        Serial.fill(&mut out, 64, &|_, start, piece| {
            for (j, v) in piece.iter_mut().enumerate() {
                *v += (start + j) as f64;
            }
        });
        for (i, &v) in out.iter().enumerate() {
            assert_eq!(v, i as f64);
        }
    }

    #[test]
    fn reduce_runs_in_index_order() {
        let got = Serial.reduce(100, 2, &|i, scratch| {
            scratch[0] = i as f64;
            scratch[1] = 1.0;
        });
        assert_eq!(got[0], 4950.0);
        assert_eq!(got[1], 100.0);
    }
}
