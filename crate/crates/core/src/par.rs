//! Data-parallel helpers. With the `parallel` feature disabled every
//! [`Execution`] runs sequentially; results are identical either way.

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// `f(0), ..., f(len - 1)` in index order.
pub fn map_indexed<R, F>(exec: Execution, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..len).into_par_iter().map(f).collect()
        }
        _ => (0..len).map(f).collect(),
    }
}

/// `f` over a slice, results in slice order.
pub fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_indexed(exec, items.len(), |i| f(&items[i]))
}

/// Streaming mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * (other.count as f64 / count as f64);
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64 / count as f64);
        Moments { count, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Replications per accumulation block. Fixed so the merge tree (and so
/// every rounding) does not depend on the thread count.
pub const BLOCK: usize = 4096;

/// Runs `replications` independent trials in fixed blocks, each block
/// producing `width` observations per trial, and merges the per-block
/// moments in block order.
pub fn replicate<F>(exec: Execution, replications: usize, width: usize, trial: F) -> Vec<Moments>
where
    F: Fn(u64, &mut [f64]) + Sync + Send,
{
    let blocks = replications.div_ceil(BLOCK);
    let partial = map_indexed(exec, blocks, |b| {
        let mut acc = vec![Moments::default(); width];
        let mut obs = vec![0.0; width];
        let end = ((b + 1) * BLOCK).min(replications);
        for rep in b * BLOCK..end {
            trial(rep as u64, &mut obs);
            for (m, x) in acc.iter_mut().zip(&obs) {
                m.push(*x);
            }
        }
        acc
    });
    partial.iter().fold(vec![Moments::default(); width], |acc, block| {
        acc.iter().zip(block).map(|(a, b)| a.merge(b)).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_moments_match_direct() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|x| whole.push(*x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..313].iter().for_each(|x| a.push(*x));
        xs[313..].iter().for_each(|x| b.push(*x));
        let m = a.merge(&b);
        assert_eq!(m.count, whole.count);
        assert!((m.mean - whole.mean).abs() < 1e-12);
        assert!((m.variance() - whole.variance()).abs() < 1e-9);
    }

    #[test]
    fn constant_observations_are_exact() {
        let m = replicate(Execution::default(), 10_000, 1, |_, out| out[0] = 0.3);
        assert_eq!(m[0].mean, 0.3);
        assert_eq!(m[0].stderr(), 0.0);
    }

    #[test]
    fn execution_modes_agree_bitwise() {
        let trial = |rep: u64, out: &mut [f64]| out[0] = ((rep * 2654435761) % 1000) as f64 / 999.0;
        let a = replicate(Execution::Sequential, 20_000, 1, trial);
        let b = replicate(Execution::Parallel, 20_000, 1, trial);
        assert_eq!(a, b);
    }
}
