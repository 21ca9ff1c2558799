//! Order-preserving parallel map over indexed work items.
//!
//! Results are written back by index, so the output is identical for any
//! worker count; `jobs = 1` degenerates to a plain loop. Each worker builds
//! its own scratch state via `init`, which lets the physics workspace be
//! reused across the items one worker processes.

use std::sync::atomic::{AtomicUsize, Ordering};

pub fn map_indexed<T, S, I, F>(jobs: usize, n: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    S: Send,
    I: Fn() -> S + Sync,
    F: Fn(&mut S, usize) -> T + Sync,
{
    let jobs = jobs.max(1).min(n.max(1));
    if jobs <= 1 {
        let mut scratch = init();
        return (0..n).map(|i| f(&mut scratch, i)).collect();
    }

    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let next = AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<&mut Option<T>>> =
        out.iter_mut().map(std::sync::Mutex::new).collect();

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| {
                let mut scratch = init();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let r = f(&mut scratch, i);
                    **slots[i].lock().unwrap() = Some(r);
                }
            });
        }
    });

    drop(slots);
    out.into_iter().map(|x| x.expect("worker filled slot")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order_for_any_job_count() {
        let serial = map_indexed(1, 100, || (), |_, i| i * i);
        for jobs in [2, 3, 8] {
            let par = map_indexed(jobs, 100, || (), |_, i| i * i);
            assert_eq!(serial, par);
        }
    }

    #[test]
    fn handles_empty_input() {
        let v: Vec<usize> = map_indexed(4, 0, || (), |_, i| i);
        assert!(v.is_empty());
    }
}
