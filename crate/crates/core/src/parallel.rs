//! Execution strategy for per-document work.
//!
//! Local inference is embarrassingly parallel across documents. With the
//! `parallel` feature (on by default) the work is spread over the rayon pool;
//! without it, or with [`Parallelism::Sequential`], documents are processed in
//! order on the calling thread. Results are always returned in input order and
//! reductions are performed sequentially afterwards, so both strategies
//! produce bit-identical models.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Rayon,
}

impl Parallelism {
    /// True when work will actually fan out to rayon.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Rayon
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Parallelism::Rayon {
            return items
                .par_iter()
                .enumerate()
                .map(|(i, item)| f(i, item))
                .collect();
        }
        items.iter().enumerate().map(|(i, item)| f(i, item)).collect()
    }

    /// Like [`map`](Self::map) but short-circuits on the first error in input order.
    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(usize, &T) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}
