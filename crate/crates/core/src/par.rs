//! Switch between rayon and plain iterators for per-customer loops.
//!
//! All parallel call sites are data-parallel over independent items with
//! no shared mutable state, so both paths produce identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    /// Rayon when the `parallel` feature is compiled in, sequential otherwise.
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `out[i] = f(i, &mut items[i])`.
    pub fn map_mut<T, U, F>(self, items: &mut [T], f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(usize, &mut T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items
                .par_iter_mut()
                .enumerate()
                .map(|(i, x)| f(i, x))
                .collect();
        }
        items.iter_mut().enumerate().map(|(i, x)| f(i, x)).collect()
    }

    /// `f(i, &mut items[i])` for every index in `indices` (distinct).
    pub fn for_each_indexed<T, F>(self, items: &mut [T], indices: &[usize], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        let mut marked = vec![false; items.len()];
        for &i in indices {
            marked[i] = true;
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            items
                .par_iter_mut()
                .enumerate()
                .filter(|(i, _)| marked[*i])
                .for_each(|(i, x)| f(i, x));
            return;
        }
        for (i, x) in items.iter_mut().enumerate() {
            if marked[i] {
                f(i, x);
            }
        }
    }

    /// Map over a slice, keeping order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}
