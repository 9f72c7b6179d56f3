//! Build a seeded victim, look at one logit vector, and dump the ground
//! truth a test oracle would compare against.

use lmextract::matfile;
use lmextract::victim::{argmax, build_victim, NormKind, VictimSpec};

fn main() -> lmextract::Result<()> {
    let spec = VictimSpec::new(1000, 16, 7).with_norm(NormKind::LayerNorm, true);
    let victim = build_victim(&spec)?;
    print!("{}", spec.to_toml_string()?);

    let prompt = [12, 400, 3];
    let z = victim.logits(&prompt)?;
    println!("top token for {prompt:?}: {} (logit {:.4})", argmax(&z), z[argmax(&z)]);

    let dir = std::env::temp_dir().join("lmextract-truth");
    std::fs::create_dir_all(&dir)?;
    matfile::save(dir.join("weights.mat"), victim.effective_weights())?;
    let back = matfile::load(dir.join("weights.mat"))?;
    println!("wrote {}x{} weights to {}", back.nrows(), back.ncols(), dir.display());
    Ok(())
}
