//! Replays the fuzz seed corpus through the parser entry points on stable.

use std::path::{Path, PathBuf};

use tailrisk::evaluate::LossTag;
use tailrisk::factors::FactorSeries;
use tailrisk::ingest::{parse_daily_csv, parse_intraday_csv, DayBoundary};
use tailrisk::model::ForecastSeries;
use tailrisk::realized::MeasurePanel;
use tailrisk_cli::stages::parse_loss_csv;
use tailrisk_cli::PipelineConfig;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn seed_inputs_parse() {
    for (p, b) in seeds("intraday_csv") {
        let load = parse_intraday_csv(&b[..], DayBoundary::utc()).unwrap_or_else(|e| panic!("{p:?}: {e}"));
        assert!(!load.days.is_empty(), "{p:?}");
    }
    for (p, b) in seeds("daily_csv") {
        parse_daily_csv(&b[..]).unwrap_or_else(|e| panic!("{p:?}: {e}"));
    }
    for (p, b) in seeds("panel_csv") {
        let panel = MeasurePanel::parse_csv(&b[..]).unwrap_or_else(|e| panic!("{p:?}: {e}"));
        let again = MeasurePanel::parse_csv(panel.to_csv().as_bytes()).unwrap();
        assert_eq!(again.to_csv(), panel.to_csv());
    }
    for (p, b) in seeds("factor_csv") {
        FactorSeries::parse_csv(&b[..]).unwrap_or_else(|e| panic!("{p:?}: {e}"));
    }
    for (p, b) in seeds("forecast_csv") {
        assert!(!ForecastSeries::parse_csv(&b[..]).unwrap_or_else(|e| panic!("{p:?}: {e}")).is_empty());
    }
    for (p, b) in seeds("loss_csv") {
        parse_loss_csv(std::str::from_utf8(&b).unwrap(), LossTag::Fz0, 0.05).unwrap_or_else(|e| panic!("{p:?}: {e}"));
    }
    for (p, b) in seeds("config") {
        let cfg = PipelineConfig::parse(std::str::from_utf8(&b).unwrap()).unwrap_or_else(|e| panic!("{p:?}: {e}"));
        cfg.validate().unwrap();
    }
}

#[test]
fn truncated_seeds_never_panic() {
    let targets = ["intraday_csv", "daily_csv", "panel_csv", "factor_csv", "forecast_csv", "loss_csv", "config"];
    for t in targets {
        for (_, b) in seeds(t) {
            for cut in (0..b.len()).step_by(7) {
                let d = &b[..cut];
                let text = String::from_utf8_lossy(d);
                match t {
                    "intraday_csv" => drop(parse_intraday_csv(d, DayBoundary::utc())),
                    "daily_csv" => drop(parse_daily_csv(d)),
                    "panel_csv" => drop(MeasurePanel::parse_csv(d)),
                    "factor_csv" => drop(FactorSeries::parse_csv(d)),
                    "forecast_csv" => drop(ForecastSeries::parse_csv(d)),
                    "loss_csv" => drop(parse_loss_csv(&text, LossTag::Fz0, 0.05)),
                    _ => drop(PipelineConfig::parse(&text).map(|c| c.validate())),
                }
            }
        }
    }
}
