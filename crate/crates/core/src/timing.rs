//! CPU-time measurement for cost comparisons.
//!
//! Timed regions must not block on nested parallel work: a worker waiting in
//! a rayon join may steal unrelated jobs, which would be billed to the region.

use std::time::Instant;

/// CPU seconds consumed by the calling thread so far.
#[cfg(unix)]
pub fn thread_cpu_seconds() -> Option<f64> {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    (rc == 0).then_some(ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9)
}

#[cfg(not(unix))]
pub fn thread_cpu_seconds() -> Option<f64> {
    None
}

/// Runs `f` and returns its output with the CPU seconds it used on this
/// thread, falling back to elapsed wall-clock time where thread CPU clocks
/// are unavailable.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let cpu0 = thread_cpu_seconds();
    let wall0 = Instant::now();
    let out = f();
    let secs = match (cpu0, thread_cpu_seconds()) {
        (Some(a), Some(b)) => b - a,
        _ => wall0.elapsed().as_secs_f64(),
    };
    (out, secs)
}
