#![no_main]
use libfuzzer_sys::fuzz_target;
use tailrisk::model::ForecastSeries;

fuzz_target!(|data: &[u8]| {
    let _ = ForecastSeries::parse_csv(data);
});
