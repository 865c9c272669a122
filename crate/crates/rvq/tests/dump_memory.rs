//! Peak heap use while streaming a 10^6-vector dump. Lives in its own test
//! binary because it installs a counting global allocator.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering::Relaxed};

use rvq::format::{DType, DumpReader, DumpWriter};

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let now = CURRENT.fetch_add(layout.size(), Relaxed) + layout.size();
        PEAK.fetch_max(now, Relaxed);
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        CURRENT.fetch_sub(layout.size(), Relaxed);
        unsafe { System.dealloc(ptr, layout) }
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

fn reset_peak() -> usize {
    let now = CURRENT.load(Relaxed);
    PEAK.store(now, Relaxed);
    now
}

const COUNT: u64 = 1_000_000;
const DIM: usize = 16;
const CEILING: usize = 1 << 20;

fn value(t: u64, c: usize) -> f32 {
    ((t as usize * 31 + c * 7) % 97) as f32 * 0.125 - 6.0
}

#[test]
fn million_vector_dump_streams_in_bounded_memory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.rvqa");

    let base = reset_peak();
    let mut w = DumpWriter::create(&path, DIM, COUNT, DType::F16).unwrap();
    let mut x = [0.0f32; DIM];
    for t in 0..COUNT {
        for (c, v) in x.iter_mut().enumerate() {
            *v = value(t, c);
        }
        w.write(&x).unwrap();
    }
    w.finish().unwrap();
    let write_peak = PEAK.load(Relaxed) - base;
    let file_len = std::fs::metadata(&path).unwrap().len() as usize;
    assert_eq!(file_len, 19 + COUNT as usize * DIM * 2 + 4);

    let base = reset_peak();
    let mut reader = DumpReader::open(&path).unwrap();
    let mut seen = 0u64;
    while reader.next_into(&mut x).unwrap() {
        // every value is a multiple of 1/8 below 8 in magnitude: exact in f16
        if seen.is_multiple_of(99_991) {
            for (c, v) in x.iter().enumerate() {
                assert_eq!(*v, value(seen, c));
            }
        }
        seen += 1;
    }
    drop(reader);
    let read_peak = PEAK.load(Relaxed) - base;

    assert_eq!(seen, COUNT);
    println!("file {file_len} bytes, write peak {write_peak} bytes, read peak {read_peak} bytes");
    assert!(write_peak < CEILING, "writer peaked at {write_peak} bytes");
    assert!(read_peak < CEILING, "reader peaked at {read_peak} bytes");
    assert!(read_peak * 32 < file_len);
}
