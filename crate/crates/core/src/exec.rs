//! Row-level execution strategy.
//!
//! Every data-parallel loop in the crate goes through [`Execution`], so the
//! sequential and rayon paths compute the same values in the same per-item
//! order. Only the scheduling differs, which keeps results bitwise identical.

/// How independent items of a batch are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Execution {
    /// Evaluates `f(0..n)` and returns results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
        }
    }

    /// Fallible variant of [`Execution::map`]. The first error in index
    /// order is reported, regardless of schedule.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }

    /// Fills `out` in chunks of `width`, passing each chunk's index.
    pub fn for_each_chunk<F>(self, out: &mut [f64], width: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if width == 0 {
            return;
        }
        match self {
            Execution::Sequential => out
                .chunks_mut(width)
                .enumerate()
                .for_each(|(i, chunk)| f(i, chunk)),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(width)
                    .enumerate()
                    .for_each(|(i, chunk)| f(i, chunk))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v = Execution::default().map(100, |i| i * 2);
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn try_map_reports_first_error() {
        let r: Result<Vec<usize>, usize> =
            Execution::default().try_map(50, |i| if i % 7 == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }

    #[test]
    fn chunks_are_indexed() {
        let mut out = vec![0.0; 12];
        Execution::Sequential.for_each_chunk(&mut out, 4, |i, c| c.fill(i as f64));
        assert_eq!(&out[4..8], &[1.0; 4]);
    }
}
