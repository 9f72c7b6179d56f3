//! Record every request and response of an attack, then replay the
//! transcript offline and get the same answer without the victim.

use std::sync::Arc;

use lmextract::api::{ApiConfig, ApiMode, Recorder, Replay, Session};
use lmextract::recover::recover_reference_token;
use lmextract::victim::{build_victim, VictimSpec};

fn main() -> lmextract::Result<()> {
    let victim = Arc::new(build_victim(&VictimSpec::new(200, 8, 0))?);
    let path = std::env::temp_dir().join("lmextract-transcript.jsonl");
    let api = Recorder::to_file(Session::new(victim, ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 }))?, &path)?;
    let live = recover_reference_token(&api, &[1, 2], 40.0)?;
    api.flush()?;

    let replay = Replay::load(&path)?;
    let offline = recover_reference_token(&replay, &[1, 2], 40.0)?;
    println!("replayed identically: {}", live.values == offline.values);
    Ok(())
}
