use herodraft_client::Client;
use herodraft_core::api::CreateSession;
use herodraft_core::oracle::{OracleParams, SyntheticOracle};
use herodraft_core::winrate::WinratePredictor;
use herodraft_core::{GameConfig, Player};
use herodraft_service::{serve, AppState, ServiceConfig};
use tokio::net::TcpListener;

async fn spawn_server() -> Client {
    let config = GameConfig::small(8, 2).unwrap();
    let oracle = SyntheticOracle::sample(2, 8, OracleParams::new(1.0, 0.5, 0.5, 2)).unwrap();
    let mut settings = ServiceConfig::new(config, WinratePredictor::oracle(oracle));
    settings.engine.search.iterations = 100;
    settings.recommend_iterations = 100;
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, AppState::new(settings)));
    Client::new(format!("http://{addr}"))
}

#[tokio::test]
async fn drives_a_series_over_tcp() {
    let client = spawn_server().await;
    let created = client
        .create_session(&CreateSession {
            human_player: Some(Player::One),
            seed: Some(3),
            ..CreateSession::default()
        })
        .await
        .unwrap();
    let id = created.id;
    assert_eq!(client.heroes().await.unwrap().n_heroes, 8);
    let mut view = created.view;
    let mut rid = 0;
    while !view.terminal {
        rid += 1;
        view = if view.human_turn {
            let recs = client.recommendations(id, Some(2)).await.unwrap();
            let w = client.whatif(id, recs.items[0].hero_id, Some(1)).await.unwrap();
            assert_eq!(w.view.t, view.t + 1);
            client.pick(id, recs.items[0].hero_id, Some(rid)).await.unwrap()
        } else {
            client.engine_move(id, Some(rid)).await.unwrap().view
        };
    }
    assert_eq!(view.phi_history.len(), 2);
    assert!(view.series_score().is_some());
    let back = client.undo(id, None).await.unwrap();
    assert!(back.t < view.t);
}

#[tokio::test]
async fn api_errors_surface_codes() {
    let client = spawn_server().await;
    let err = client.session(12345).await.unwrap_err();
    assert_eq!(err.code(), Some("not_found"));
    let id = client.create_session(&CreateSession::default()).await.unwrap().id;
    let err = client.pick(id, 200, None).await.unwrap_err();
    assert_eq!(err.code(), Some("illegal_pick"));
    let err = client.engine_move(id, None).await.unwrap_err();
    assert_eq!(err.code(), Some("wrong_turn"));
}
