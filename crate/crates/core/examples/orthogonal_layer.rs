//! For normalized victims, pin the stolen layer down to an orthogonal
//! factor by fitting the ellipsoid the logits lie on.

use std::sync::Arc;

use lmextract::api::{ApiConfig, ApiMode, Session};
use lmextract::extract::{
    collect_query_matrix, extract_layer_orthogonal, orthogonal_query_count, orthogonality_defect, residual_symmetry,
};
use lmextract::victim::{build_victim, VictimSpec};

fn main() -> lmextract::Result<()> {
    let h = 16;
    let victim = Arc::new(build_victim(&VictimSpec::new(300, h, 4))?);
    let api = Session::new(victim.clone(), ApiConfig::new(ApiMode::AllLogits))?;
    let n = 2 * orthogonal_query_count(h);
    let fit = extract_layer_orthogonal(&collect_query_matrix(&api, n, None, 0)?, h)?;
    let o = residual_symmetry(&fit.layer.w, &victim.folded_projection())?;
    println!("{n} queries: sphere residual {:.2e}, |O^T O - I| = {:.2e}", fit.sphere_residual, orthogonality_defect(&o));
    Ok(())
}
