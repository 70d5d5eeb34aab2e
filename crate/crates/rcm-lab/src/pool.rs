//! Scoped-thread executor.
//!
//! Bitwise-identical to `rcm_core::par::Serial` for any worker count: the
//! chunk grid comes from the caller and partial reduction happens in chunk
//! index order after all jobs finish. Workers only race for *which* chunk
//! they compute, never for how results are combined.

use std::sync::Mutex;

use rcm_core::par::{ChunkJob, Executor, PartialJob, Serial};
use rcm_core::sum::Compensated;

pub struct Pool {
    workers: usize,
}

impl Pool {
    pub fn new(workers: usize) -> Self {
        assert!(workers >= 1);
        Self { workers }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}

impl Executor for Pool {
    fn fill(&self, out: &mut [f64], chunk_len: usize, job: &ChunkJob<'_>) {
        assert!(chunk_len > 0);
        if self.workers == 1 || out.len() <= chunk_len {
            return Serial.fill(out, chunk_len, job);
        }
        let mut pieces: Vec<(usize, usize, &mut [f64])> = out
            .chunks_mut(chunk_len)
            .enumerate()
            .map(|(i, p)| (i, i * chunk_len, p))
            .collect();
        // popping from the back keeps the queue O(1); order is irrelevant
        // because every piece is owned by exactly one job
        pieces.reverse();
        let queue = Mutex::new(pieces);
        std::thread::scope(|scope| {
            for _ in 0..self.workers {
                scope.spawn(|| loop {
                    let item = queue.lock().unwrap().pop();
                    match item {
                        Some((i, start, piece)) => job(i, start, piece),
                        None => break,
                    }
                });
            }
        });
    }

    fn reduce(&self, jobs: usize, width: usize, job: &PartialJob<'_>) -> Vec<f64> {
        assert!(width >= 1);
        if self.workers == 1 {
            return Serial.reduce(jobs, width, job);
        }
        // Materialize all partials (jobs × width; callers keep jobs coarse
        // enough for this to stay small), then fold in index order exactly
        // like Serial.
        let mut buf = vec![0.0; jobs * width];
        self.fill(&mut buf, width, &|i, _, scratch| job(i, scratch));
        let mut acc = vec![Compensated::new(); width];
        for part in buf.chunks(width) {
            for (a, &v) in acc.iter_mut().zip(part.iter()) {
                a.add(v);
            }
        }
        acc.iter().map(Compensated::value).collect()
    }
}
