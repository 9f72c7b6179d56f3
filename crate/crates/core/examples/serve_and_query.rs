//! Serve a victim over loopback HTTP and attack it with the same code that
//! runs in process.

use std::sync::Arc;

use lmextract::api::{query_topk, ApiConfig, ApiMode, CompletionApi, LogitBias};
use lmextract::recover::recover_reference_token;
use lmextract::victim::{build_victim, VictimSpec};
use lmextract::wire::{serve, RemoteSession};

fn main() -> lmextract::Result<()> {
    let victim = Arc::new(build_victim(&VictimSpec::new(500, 16, 1))?);
    let server = serve(victim.clone(), ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 }), "127.0.0.1:0")?;
    println!("listening on {}", server.url());

    let client = RemoteSession::connect(&server.url())?.with_session("demo");
    let prompt = [5, 6, 7];
    let top = query_topk(&client, &prompt, &LogitBias::new().with(42, 10.0))?;
    println!("top-5 with token 42 boosted: {:?}", top.items);

    let recovered = recover_reference_token(&client, &prompt, 40.0)?;
    let truth = victim.logits(&prompt)?;
    println!(
        "recovered {} logits, max error {:.2e}, {} queries (server agrees: {})",
        recovered.recovered(),
        recovered.max_abs_error(&truth),
        client.ledger().queries,
        server.session_ledger("demo") == Some(client.ledger())
    );
    server.shutdown()
}
