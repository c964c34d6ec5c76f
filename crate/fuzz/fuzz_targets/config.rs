#![no_main]
use libfuzzer_sys::fuzz_target;
use tailrisk_cli::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let _ = std::str::from_utf8(data).map(|text| PipelineConfig::parse(text).and_then(|c| c.validate()));
});
