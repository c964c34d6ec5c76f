#![no_main]
use libfuzzer_sys::fuzz_target;
use tailrisk::factors::FactorSeries;

fuzz_target!(|data: &[u8]| {
    let _ = FactorSeries::parse_csv(data);
});
