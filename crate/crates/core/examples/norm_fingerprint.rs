//! Tell LayerNorm from RMSNorm: removing the mean logit vector drops the
//! rank by one only for LayerNorm.

use std::sync::Arc;

use lmextract::api::{ApiConfig, ApiMode, Session};
use lmextract::extract::{collect_query_matrix, detect_norm_layer};
use lmextract::victim::{build_victim, NormKind, VictimSpec};

fn main() -> lmextract::Result<()> {
    for (kind, bias) in [(NormKind::LayerNorm, true), (NormKind::RmsNorm, false), (NormKind::RmsNorm, true)] {
        let victim = Arc::new(build_victim(&VictimSpec::new(400, 24, 2).with_norm(kind, bias))?);
        let api = Session::new(victim, ApiConfig::new(ApiMode::AllLogits))?;
        let d = detect_norm_layer(&collect_query_matrix(&api, 80, None, 0)?)?;
        println!("{kind:?} bias={bias}: rank {} -> {}, verdict {:?}", d.dim_before, d.dim_after, d.verdict);
    }
    Ok(())
}
