//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] runs on
//! rayon; without it every call runs sequentially. Results are identical in
//! both modes: searches return the first hit in input order.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

pub fn is_parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// First `Some` in input order.
pub fn find_map_first<T, R, F>(items: &[T], execution: Execution, f: F) -> Option<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Option<R> + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().find_map_first(f)
        }
        _ => items.iter().find_map(f),
    }
}

/// Order-preserving map.
pub fn map<T, R, F>(items: &[T], execution: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let items: Vec<u32> = (0..1000).collect();
        for mode in [Execution::Parallel, Execution::Sequential] {
            assert_eq!(find_map_first(&items, mode, |&x| (x % 97 == 96).then_some(x)), Some(96));
            assert_eq!(map(&items, mode, |&x| x * 2)[500], 1000);
        }
    }
}
