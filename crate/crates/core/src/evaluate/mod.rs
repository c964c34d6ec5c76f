//! Out-of-sample evaluation: VaR and ES backtests, joint scoring rules and
//! the Model Confidence Set.

mod backtest;
mod mcs;
mod scoring;

pub use backtest::{
    backtest_series, chi2_sf, christoffersen_cc, dq_test, es_cc_test, es_uc_test, exceedance_residuals, hits,
    kupiec_uc, returns_on, BacktestConfig, BacktestRow, HitSeries, TestResult, MIN_ES_VIOLATIONS,
};
pub use mcs::{default_block_len, mcs, McsConfig, McsModel, McsResult, MIN_MCS_LEN};
pub use scoring::{al_loss, fz0_loss, fzg_loss, score_models, LossMatrix, LossTag, G1, G2};

use serde::{Deserialize, Serialize};

/// Backtest report over a set of forecast series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub config: BacktestConfig,
    pub rows: Vec<BacktestRow>,
}

impl BacktestReport {
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat table: one line per series with statistic and p-value of each test.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model_id,alpha,n,viol_rate,VaR_AE,VaR_UC,VaR_UC_p,VaR_CC,VaR_CC_p,VaR_DQ,VaR_DQ_p,ES_UC,ES_UC_p,ES_CC,ES_CC_p\n",
        );
        let p = |t: &TestResult| t.p_value.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.model_id,
                r.alpha,
                r.n,
                r.viol_rate,
                r.var_ae,
                r.var_uc.statistic,
                p(&r.var_uc),
                r.var_cc.statistic,
                p(&r.var_cc),
                r.var_dq.statistic,
                p(&r.var_dq),
                r.es_uc.statistic,
                p(&r.es_uc),
                r.es_cc.statistic,
                p(&r.es_cc),
            ));
        }
        out
    }
}
