#![no_main]
use libfuzzer_sys::fuzz_target;
use tailrisk::realized::MeasurePanel;

fuzz_target!(|data: &[u8]| {
    // anything that parses must survive a write/parse round trip
    if let Ok(panel) = MeasurePanel::parse_csv(data) {
        let text = panel.to_csv();
        MeasurePanel::parse_csv(text.as_bytes()).expect("re-parse of written panel");
    }
});
