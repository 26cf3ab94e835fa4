//! Deterministic parallel evaluation of independent realizations.
//!
//! Work is spread over a rayon pool, but results are always merged in
//! realization order, so floating-point reductions do not depend on the
//! number of workers.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Number of realizations handed to the pool before merging.
const BATCH: usize = 256;

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))
}

/// Evaluate `f(k)` for k in 0..n and return the results in index order.
/// `jobs = 0` uses all available cores.
pub fn par_map<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    pool(jobs)?.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Map every realization and fold the results into `acc` in index order.
/// Memory stays bounded by one batch of mapped values.
pub fn map_fold<T, A, F, M>(n: usize, jobs: usize, f: F, mut acc: A, mut merge: M) -> Result<A>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
    M: FnMut(&mut A, usize, T),
{
    let pool = pool(jobs)?;
    let mut start = 0;
    while start < n {
        let end = (start + BATCH).min(n);
        let batch: Vec<T> = pool.install(|| (start..end).into_par_iter().map(&f).collect::<Result<_>>())?;
        for (i, item) in batch.into_iter().enumerate() {
            merge(&mut acc, start + i, item);
        }
        start = end;
    }
    Ok(acc)
}

/// Running mean and standard error of a vector-valued quantity.
#[derive(Clone, Debug)]
pub struct VecStats {
    pub count: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl VecStats {
    pub fn new(len: usize) -> Self {
        VecStats {
            count: 0,
            sum: vec![0.0; len],
            sum_sq: vec![0.0; len],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        for ((s, q), v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(x) {
            *s += v;
            *q += v * v;
        }
        self.count += 1;
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Standard error of the mean; NaN with fewer than two samples.
    pub fn std_err(&self) -> Vec<f64> {
        let n = self.count as f64;
        if self.count < 2 {
            return vec![f64::NAN; self.sum.len()];
        }
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                let m = s / n;
                ((q / n - m * m).max(0.0) / (n - 1.0)).sqrt()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_worker_independence() {
        let f = |k: usize| Ok((k as f64).sqrt().sin());
        let one = par_map(1000, 1, f).unwrap();
        let four = par_map(1000, 4, f).unwrap();
        assert_eq!(one, four);
        let sum = |jobs| map_fold(1000, jobs, f, 0.0, |a: &mut f64, _, x| *a += x).unwrap();
        assert_eq!(sum(1).to_bits(), sum(3).to_bits());
    }

    #[test]
    fn errors_propagate() {
        let r = par_map(10, 2, |k| if k == 7 { Err(Error::Numerical("x".into())) } else { Ok(k) });
        assert!(r.is_err());
    }

    #[test]
    fn stats() {
        let mut s = VecStats::new(1);
        for x in [1.0, 2.0, 3.0, 4.0] {
            s.push(&[x]);
        }
        assert_eq!(s.mean(), vec![2.5]);
        assert!((s.std_err()[0] - (1.25f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
