//! The dry-run memory estimate against the measured heap peak of real runs.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use sffmon::runner::{run, validate, Overrides, RunConfig};

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::SeqCst);
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

/// Heap growth above the starting level while `f` runs.
fn measured_peak(f: impl FnOnce()) -> usize {
    let base = LIVE.load(Ordering::SeqCst);
    PEAK.store(base, Ordering::SeqCst);
    f();
    PEAK.load(Ordering::SeqCst) - base
}

#[test]
fn estimate_is_within_a_factor_two_of_the_measured_peak() {
    let tmp = tempfile::tempdir().unwrap();
    let configs = [
        r#"{"experiment": "sff-run", "spectrum": {"kind": "syk", "n_majorana": 14}, "gamma": 1.0,
            "grid": {"t_min": 0.1, "t_max": 10000, "points": 500}, "averaging": {"n_disorder": 20},
            "features": {"window": 21}}"#,
        r#"{"experiment": "sweep-gamma", "spectrum": {"kind": "gue", "dim": 256}, "gammas": [0.1, 1.0, 10.0],
            "grid": {"t_min": 0.1, "t_max": 10000, "points": 300}, "averaging": {"n_disorder": 8}}"#,
        r#"{"experiment": "benchmark-sme", "spectrum": {"kind": "syk", "n_majorana": 12}, "gammas": [1.0],
            "sde": {"t_max": 5.0, "guard": 0.05, "record_every": 10}}"#,
        r#"{"experiment": "collapse-stats", "spectrum": {"kind": "syk", "n_majorana": 10}, "gamma": 1.0,
            "grid": {"t_min": 0.001, "t_max": 1000, "points": 100}, "collapse": {"n_paths": 20000}}"#,
    ];
    for body in configs {
        let mut c = RunConfig::from_json(body).unwrap();
        c.apply(&Overrides {
            seed: None,
            workers: Some(1),
            out: Some(tmp.path().to_path_buf()),
        });
        let estimate = validate(&c).unwrap().estimated_bytes as f64;
        let peak = measured_peak(|| {
            run(&c).unwrap();
        }) as f64;
        let r = estimate / peak;
        println!("{}: estimate {estimate:.0} B, peak {peak:.0} B, ratio {r:.2}", c.experiment.name());
        assert!((0.5..=2.0).contains(&r), "{}: estimate {estimate} vs peak {peak}", c.experiment.name());
    }
}
