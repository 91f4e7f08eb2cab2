use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use bakery_core::runtime::{stress, LockError, LockGroup, StressConfig};

#[test]
fn guards_serialize_a_read_modify_write() {
    let (group, handles) = LockGroup::with_handles(4, 2).unwrap();
    let counter = Arc::new(AtomicU64::new(0));
    let workers: Vec<_> = handles
        .into_iter()
        .map(|mut h| {
            let counter = Arc::clone(&counter);
            thread::spawn(move || {
                for _ in 0..2_000 {
                    let guard = h.acquire();
                    assert!(guard.ticket() >= 1 && guard.ticket() <= 2);
                    let v = counter.load(Ordering::Relaxed);
                    thread::yield_now();
                    counter.store(v + 1, Ordering::Relaxed);
                }
                h.stats()
            })
        })
        .collect();
    for w in workers {
        let stats = w.join().unwrap();
        assert_eq!(stats.acquisitions, 2_000);
        assert!(stats.max_ticket <= 2);
    }
    assert_eq!(counter.load(Ordering::Relaxed), 8_000);
    assert_eq!(group.numbers(), vec![0; 4]);
    assert_eq!(group.choosings(), vec![0; 4]);
}

#[test]
fn cancelled_waiter_leaves_no_trace() {
    let (group, mut handles) = LockGroup::with_handles(2, 3).unwrap();
    let mut waiter = handles.pop().unwrap();
    let mut holder = handles.pop().unwrap();
    let guard = holder.acquire();
    let cancel = Arc::new(AtomicBool::new(false));
    let c = Arc::clone(&cancel);
    let t = thread::spawn(move || {
        let got = waiter.acquire_cancellable(&c).is_some();
        (got, waiter)
    });
    thread::sleep(Duration::from_millis(50));
    cancel.store(true, Ordering::Relaxed);
    let (got, _waiter) = t.join().unwrap();
    assert!(!got);
    assert_eq!(group.numbers()[1], 0);
    assert_eq!(group.choosings()[1], 0);
    drop(guard);
    assert_eq!(group.numbers(), vec![0, 0]);
}

#[test]
fn group_rejects_bad_shapes() {
    assert!(matches!(
        LockGroup::with_handles(0, 3),
        Err(LockError::NoSlots)
    ));
    assert!(LockGroup::with_handles(2, 0).is_err());
    let mut cfg = StressConfig::new(3, 10, 3);
    cfg.slots = Some(2);
    assert!(stress(&cfg).is_err());
}

#[test]
fn stress_with_tight_limits() {
    for (threads, limit) in [(2, 1), (3, 2), (5, 3), (8, 7)] {
        let r = stress(&StressConfig::new(threads, 2_000, limit)).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.cells, 2 * threads);
        assert!(r.max_observed <= limit);
    }
}

#[test]
fn spare_slots_stay_idle() {
    let mut cfg = StressConfig::new(2, 1_000, 4);
    cfg.slots = Some(5);
    let r = stress(&cfg).unwrap();
    assert!(r.passed());
    assert_eq!(r.cells, 10);
}
