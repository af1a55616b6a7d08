//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the rayon pool; without it every call runs sequentially.

/// Execution strategy for batch operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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

/// Maps `f` over `items`, preserving input order in the output.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Runs each closure, concurrently when parallel, and returns results in order.
pub fn join_all<R, F>(exec: Execution, tasks: Vec<F>) -> Vec<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel if tasks.len() > 1 => {
            use rayon::prelude::*;
            tasks.into_par_iter().map(|t| t()).collect()
        }
        _ => tasks.into_iter().map(|t| t()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u32> = (0..1000).collect();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let out = map(exec, &items, |x| x * 2);
            assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
        let tasks: Vec<_> = (0..8).map(|i| move || i * i).collect();
        assert_eq!(join_all(Execution::Parallel, tasks), vec![0, 1, 4, 9, 16, 25, 36, 49]);
    }
}
