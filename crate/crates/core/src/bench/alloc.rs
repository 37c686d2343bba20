//! Allocation tracking for per-task peak-memory measurements.
//!
//! Install [`TrackingAllocator`] as the global allocator of a binary or test
//! target:
//!
//! ```ignore
//! #[global_allocator]
//! static ALLOC: fmesvm::bench::TrackingAllocator = fmesvm::bench::TrackingAllocator;
//! ```
//!
//! Counters are per thread, so concurrent measurements on different threads
//! do not see each other's allocations.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::sync::atomic::{AtomicBool, Ordering};

pub struct TrackingAllocator;

static INSTALLED: AtomicBool = AtomicBool::new(false);

thread_local! {
    static CURRENT: Cell<isize> = const { Cell::new(0) };
    static PEAK: Cell<isize> = const { Cell::new(0) };
}

#[inline]
fn record(delta: isize) {
    let _ = CURRENT.try_with(|c| {
        let v = c.get() + delta;
        c.set(v);
        let _ = PEAK.try_with(|p| {
            if v > p.get() {
                p.set(v);
            }
        });
    });
}

#[inline]
fn mark_installed() {
    if !INSTALLED.load(Ordering::Relaxed) {
        INSTALLED.store(true, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let ptr = unsafe { System.alloc(layout) };
        if !ptr.is_null() {
            mark_installed();
            record(layout.size() as isize);
        }
        ptr
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let ptr = unsafe { System.alloc_zeroed(layout) };
        if !ptr.is_null() {
            mark_installed();
            record(layout.size() as isize);
        }
        ptr
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        record(-(layout.size() as isize));
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let out = unsafe { System.realloc(ptr, layout, new_size) };
        if !out.is_null() {
            record(new_size as isize - layout.size() as isize);
        }
        out
    }
}

/// Whether allocations are going through [`TrackingAllocator`].
pub fn is_installed() -> bool {
    // Force at least one allocation so the flag reflects the real allocator.
    drop(Box::new(0u64));
    INSTALLED.load(Ordering::Relaxed)
}

/// A measurement window on the current thread.
pub(crate) struct Window {
    baseline: isize,
}

impl Window {
    pub(crate) fn open() -> Self {
        let baseline = CURRENT.with(Cell::get);
        PEAK.with(|p| p.set(baseline));
        Self { baseline }
    }

    /// Bytes above the opening level at the high-water mark.
    pub(crate) fn peak(&self) -> u64 {
        (PEAK.with(Cell::get) - self.baseline).max(0) as u64
    }
}
