//! Deterministic in-process parallel map.
//!
//! Work is split into fixed-size chunks that idle workers claim from a shared
//! counter. Each result is written back to its input position, so the output
//! never depends on scheduling or on the number of workers.

use std::any::Any;
use std::num::NonZeroUsize;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

/// Environment variable consulted when no explicit thread count is given.
pub const THREADS_ENV: &str = "VOCALIS_THREADS";

#[derive(Debug, Clone)]
pub struct JobSpec<T> {
    pub items: Vec<T>,
    pub worker_count: NonZeroUsize,
    pub chunk_size: NonZeroUsize,
}

impl<T> JobSpec<T> {
    /// Uses the default chunk size `ceil(items / (4 * workers))`.
    pub fn new(items: Vec<T>, worker_count: usize) -> Self {
        let workers = NonZeroUsize::new(worker_count).unwrap_or(NonZeroUsize::MIN);
        let chunk = items.len().div_ceil(4 * workers.get()).max(1);
        JobSpec {
            items,
            worker_count: workers,
            chunk_size: NonZeroUsize::new(chunk).unwrap_or(NonZeroUsize::MIN),
        }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = NonZeroUsize::new(chunk_size).unwrap_or(NonZeroUsize::MIN);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureKind<E> {
    Error(E),
    Panic(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemFailure<E> {
    pub index: usize,
    pub kind: FailureKind<E>,
}

pub type ItemResult<R, E> = Result<R, ItemFailure<E>>;

fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".to_string()
    }
}

fn run_one<T, R, E, F>(index: usize, item: &T, f: &F) -> ItemResult<R, E>
where
    F: Fn(usize, &T) -> Result<R, E>,
{
    match panic::catch_unwind(AssertUnwindSafe(|| f(index, item))) {
        Ok(Ok(r)) => Ok(r),
        Ok(Err(e)) => Err(ItemFailure {
            index,
            kind: FailureKind::Error(e),
        }),
        Err(payload) => Err(ItemFailure {
            index,
            kind: FailureKind::Panic(panic_message(payload.as_ref())),
        }),
    }
}

/// Applies `f(index, item)` to every item. Results come back in input order;
/// failures (errors and panics) are collected per item instead of aborting.
pub fn par_map<T, R, E, F>(job: &JobSpec<T>, f: F) -> Vec<ItemResult<R, E>>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync,
{
    let n = job.items.len();
    let workers = job.worker_count.get().min(n.max(1));
    if workers == 1 {
        return job
            .items
            .iter()
            .enumerate()
            .map(|(i, item)| run_one(i, item, &f))
            .collect();
    }

    let chunk = job.chunk_size.get();
    let num_chunks = n.div_ceil(chunk);
    let next = AtomicUsize::new(0);
    let mut done: Vec<(usize, Vec<ItemResult<R, E>>)> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let c = next.fetch_add(1, Ordering::Relaxed);
                        if c >= num_chunks {
                            break;
                        }
                        let start = c * chunk;
                        let end = (start + chunk).min(n);
                        let part: Vec<_> = (start..end)
                            .map(|i| run_one(i, &job.items[i], &f))
                            .collect();
                        local.push((c, part));
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread died outside an item"))
            .collect()
    });
    done.sort_unstable_by_key(|(c, _)| *c);
    done.into_iter().flat_map(|(_, part)| part).collect()
}

/// Infallible variant: panics inside `f` are re-raised on the caller.
pub fn par_map_infallible<T, R, F>(job: &JobSpec<T>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    par_map::<T, R, std::convert::Infallible, _>(job, |i, t| Ok(f(i, t)))
        .into_iter()
        .map(|r| match r {
            Ok(v) => v,
            Err(ItemFailure {
                kind: FailureKind::Panic(msg),
                index,
            }) => panic!("item {index} panicked: {msg}"),
            Err(ItemFailure {
                kind: FailureKind::Error(never),
                ..
            }) => match never {},
        })
        .collect()
}

/// Splits ordered results into successes (with their index) and failures.
pub fn partition<R, E>(results: Vec<ItemResult<R, E>>) -> (Vec<(usize, R)>, Vec<ItemFailure<E>>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push((i, v)),
            Err(e) => failed.push(e),
        }
    }
    (ok, failed)
}

/// Worker count: explicit value, else `VOCALIS_THREADS`, else available cores.
pub fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .filter(|&n| n > 0)
        .or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.trim().parse::<usize>().ok())
                .filter(|&n| n > 0)
        })
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, NonZeroUsize::get))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn work(i: usize, x: &u64) -> Result<u64, String> {
        let mut h = *x ^ 0x9e37_79b9_7f4a_7c15;
        for _ in 0..200 {
            h = h.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        }
        if i % 97 == 13 {
            Err(format!("bad item {i}"))
        } else {
            Ok(h)
        }
    }

    #[test]
    fn identical_for_any_worker_count() {
        let items: Vec<u64> = (0..1000).collect();
        let one = par_map(&JobSpec::new(items.clone(), 1), work);
        for workers in [2, 3, 8] {
            let many = par_map(&JobSpec::new(items.clone(), workers), work);
            assert_eq!(one, many, "workers = {workers}");
        }
        let odd_chunks = par_map(&JobSpec::new(items, 8).with_chunk_size(7), work);
        assert_eq!(one, odd_chunks);
    }

    #[test]
    fn empty_input() {
        let out = par_map(&JobSpec::new(Vec::<u64>::new(), 8), work);
        assert!(out.is_empty());
    }

    #[test]
    fn failures_collected_with_index() {
        let items: Vec<u64> = (0..200).collect();
        let (ok, failed) = partition(par_map(&JobSpec::new(items, 4), work));
        let idx: Vec<usize> = failed.iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![13, 110]);
        assert_eq!(ok.len(), 198);
    }

    #[test]
    fn panics_are_data() {
        let items: Vec<u32> = (0..20).collect();
        let out = par_map(&JobSpec::new(items, 4), |_, &x| {
            if x == 5 {
                panic!("boom");
            }
            Ok::<_, ()>(x * 2)
        });
        assert!(matches!(
            &out[5],
            Err(ItemFailure { index: 5, kind: FailureKind::Panic(m) }) if m == "boom"
        ));
        assert_eq!(out[6], Ok(12));
    }

    #[test]
    fn default_chunk_size() {
        let job = JobSpec::new(vec![0u8; 100], 8);
        assert_eq!(job.chunk_size.get(), 4);
        let job = JobSpec::new(vec![0u8; 3], 8);
        assert_eq!(job.chunk_size.get(), 1);
    }

    #[test]
    fn explicit_threads_win() {
        assert_eq!(resolve_threads(Some(3)), 3);
        assert!(resolve_threads(None) >= 1);
    }
}
