//! Index-ordered parallel maps.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it the same closures run sequentially. Output order is always the
//! index order, so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(i)` for `i in range` and collects in index order.
pub fn map_range<T, F>(range: std::ops::Range<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        range.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        range.map(f).collect()
    }
}

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

fn workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Attempts to launch next: enough to finish at the success rate seen so
/// far, at least one per worker. Only affects wasted work, never results.
fn next_chunk(found: usize, target: usize, tried: usize) -> usize {
    let remaining = target - found;
    let rate = if tried == 0 { 1.0 } else { (found as f64 / tried as f64).max(0.02) };
    ((remaining as f64 / rate).ceil() as usize).max(workers())
}

/// Runs `attempt(i)` for i = 0, 1, ... in parallel chunks and keeps the first
/// `target` successes in index order, stopping after `max_attempts`.
/// Returns the successes and the number of attempts consumed.
pub fn first_successes<T, F>(target: usize, max_attempts: usize, attempt: F) -> (Vec<(usize, T)>, usize)
where
    T: Send,
    F: Fn(usize) -> Option<T> + Sync + Send,
{
    let mut found = Vec::with_capacity(target);
    let mut next = 0;
    if target == 0 {
        return (found, 0);
    }
    while found.len() < target && next < max_attempts {
        let end = (next + next_chunk(found.len(), target, next)).min(max_attempts);
        let batch = map_range(next..end, |i| attempt(i));
        for (offset, item) in batch.into_iter().enumerate() {
            if let Some(v) = item {
                found.push((next + offset, v));
                if found.len() == target {
                    return (found, next + offset + 1);
                }
            }
        }
        next = end;
    }
    (found, next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_keeps_order() {
        assert_eq!(map_range(0..100, |i| i * i), (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn first_successes_counts_attempts() {
        let (found, attempts) = first_successes(3, 1000, |i| (i % 5 == 4).then_some(i));
        assert_eq!(found.iter().map(|x| x.1).collect::<Vec<_>>(), vec![4, 9, 14]);
        assert_eq!(attempts, 15);
        let (found, attempts) = first_successes(3, 7, |i| (i % 5 == 4).then_some(i));
        assert_eq!(found.len(), 1);
        assert_eq!(attempts, 7);
        let (found, attempts) = first_successes(0, 7, |i| Some(i));
        assert!(found.is_empty());
        assert_eq!(attempts, 0);
    }
}
