#![no_main]
use libfuzzer_sys::fuzz_target;
use tailrisk::evaluate::LossTag;
use tailrisk_cli::stages::parse_loss_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_loss_csv(text, LossTag::Fz0, 0.05);
    }
});
