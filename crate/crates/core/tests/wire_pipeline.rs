//! Every attack family runs unmodified against the HTTP server, and the
//! client and server ledgers agree.

use std::sync::Arc;

use lmextract::api::{ApiConfig, ApiMode, ApiRestrictions, CompletionApi, Session};
use lmextract::recover::{recover_binarized, recover_hyperrectangle, recover_k_logprob, Centering, KLogprobConfig};
use lmextract::victim::{build_victim, Victim, VictimSpec};
use lmextract::wire::{serve, RemoteSession};
use lmextract::RejectCode;

fn victim() -> Arc<Victim> {
    Arc::new(build_victim(&VictimSpec::new(150, 8, 2)).unwrap())
}

fn compare<F>(config: ApiConfig, attack: F)
where
    F: Fn(&dyn CompletionApi) -> Vec<f64>,
{
    let v = victim();
    let local = Session::new(v.clone(), config.clone()).unwrap();
    let server = serve(v, config, "127.0.0.1:0").unwrap();
    let remote = RemoteSession::connect(&server.url()).unwrap().with_session("t");
    assert_eq!(attack(&local), attack(&remote));
    assert_eq!(local.ledger(), remote.ledger());
    assert_eq!(server.session_ledger("t"), Some(remote.ledger()));
    server.shutdown().unwrap();
}

#[test]
fn k_logprob_over_http() {
    compare(ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 }), |api| {
        recover_k_logprob(api, &[1, 2], &KLogprobConfig::default()).unwrap().values
    });
}

#[test]
fn binarized_over_http() {
    compare(ApiConfig::new(ApiMode::Top1BinaryBias), |api| recover_binarized(api, &[3]).unwrap().values);
}

#[test]
fn hyperrectangle_over_http() {
    compare(ApiConfig::new(ApiMode::ArgmaxOnlyWithBias), |api| {
        let b = recover_hyperrectangle(api, &[4, 4], 30, Centering::OneOfN, 100.0).unwrap();
        b.alpha.into_iter().chain(b.beta).collect()
    });
}

#[test]
fn rejections_keep_their_code() {
    let restrictions = ApiRestrictions { bias_xor_logprobs: true, ..Default::default() };
    let config = ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 }).with_restrictions(restrictions);
    let server = serve(victim(), config, "127.0.0.1:0").unwrap();
    let remote = RemoteSession::connect(&server.url()).unwrap();
    let err = recover_k_logprob(&remote, &[1], &KLogprobConfig::default()).unwrap_err();
    assert_eq!(err.reject_code(), Some(RejectCode::BiasXorLogprobs));
    server.shutdown().unwrap();
}
