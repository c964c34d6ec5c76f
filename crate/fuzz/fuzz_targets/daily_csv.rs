#![no_main]
use libfuzzer_sys::fuzz_target;
use tailrisk::ingest::parse_daily_csv;

fuzz_target!(|data: &[u8]| {
    let _ = parse_daily_csv(data);
});
