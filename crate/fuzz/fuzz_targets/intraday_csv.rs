#![no_main]
use libfuzzer_sys::fuzz_target;
use tailrisk::ingest::{parse_intraday_csv, DayBoundary};

fuzz_target!(|data: &[u8]| {
    let _ = parse_intraday_csv(data, DayBoundary::utc());
    let _ = parse_intraday_csv(data, DayBoundary::with_offset_hours(-5));
});
