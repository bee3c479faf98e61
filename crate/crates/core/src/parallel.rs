//! Order-preserving parallel map used by the training loops: results land
//! by index, so worker scheduling never changes downstream arithmetic.

pub fn parallel_map<I, O, F>(items: &[I], workers: usize, f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let mut out: Vec<Option<O>> = (0..items.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for _ in 0..workers.min(items.len()) {
            let f = &f;
            let next = &next;
            handles.push(scope.spawn(move || {
                let mut results = Vec::new();
                loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= items.len() {
                        break;
                    }
                    results.push((i, f(&items[i])));
                }
                results
            }));
        }
        for h in handles {
            for (i, o) in h.join().expect("worker panicked") {
                out[i] = Some(o);
            }
        }
    });
    out.into_iter().map(|o| o.expect("all slots filled")).collect()
}
