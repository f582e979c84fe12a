//! Terminal draft. Talks to the session service over HTTP; without
//! `--server` it starts one in-process on a loopback port.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use herodraft_client::Client;
use herodraft_core::api::{CreateSession, SessionView};
use herodraft_core::{HeroId, Player};
use herodraft_service::AppState;

use crate::config::RunConfig;

#[derive(Args)]
pub struct DraftArgs {
    /// Needed unless --server is given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Existing service, e.g. http://127.0.0.1:8080.
    #[arg(long)]
    server: Option<String>,
    /// Seat to play (1 or 2); 0 enters picks for both seats.
    #[arg(long, default_value_t = 1)]
    human: u8,
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long, default_value_t = 3000)]
    time_cap_ms: u64,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

const HELP: &str = "commands: <hero id> pick | r [k] recommendations | w <hero id> what-if | e engine move | u undo | q quit";

fn render(v: &SessionView) -> String {
    let mut out = String::new();
    for r in &v.rounds {
        if r.camp1.is_empty() && !r.complete {
            continue;
        }
        let phi = r.phi_player1.map(|p| format!("  player1 φ {p:.3}")).unwrap_or_default();
        out.push_str(&format!(
            "round {} (camp1 = {}): {:?} vs {:?}{phi}\n",
            r.round + 1,
            r.camp1_player,
            r.camp1,
            r.camp2
        ));
    }
    match v.to_move {
        Some(p) => out.push_str(&format!("{p} to move; legal {:?}\n", v.legal_actions)),
        None => {
            let score = v.series_score().unwrap_or(0.5);
            out.push_str(&format!("series over; player1 mean φ {score:.3}\n"));
        }
    }
    out
}

async fn read_line() -> Result<Option<String>> {
    tokio::task::spawn_blocking(|| {
        let mut s = String::new();
        let n = std::io::stdin().read_line(&mut s)?;
        Ok::<_, std::io::Error>((n > 0).then_some(s))
    })
    .await?
    .map_err(Into::into)
}

pub async fn run(a: DraftArgs) -> Result<()> {
    let mut create = CreateSession {
        human_player: match a.human {
            0 => None,
            p => Some(Player::try_from(p).context("--human must be 0, 1 or 2")?),
        },
        seed: Some(a.seed),
        ..CreateSession::default()
    };
    let client = match &a.server {
        Some(url) => {
            if let Some(p) = &a.config {
                let cfg = RunConfig::load(p)?;
                create.config = cfg.game.clone();
                create.engine_spec = cfg.engine.clone();
            }
            Client::new(url.clone())
        }
        None => {
            let cfg = RunConfig::load(a.config.as_deref().context("--config is required without --server")?)?;
            let state = AppState::new(crate::service_settings(&cfg, a.oracle.as_deref(), a.time_cap_ms)?);
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
            let addr = listener.local_addr()?;
            tokio::spawn(herodraft_service::serve(listener, state));
            Client::new(format!("http://{addr}"))
        }
    };
    let created = client.create_session(&create).await?;
    let id = created.id;
    let mut view = created.view;
    let mut request = 0u64;
    println!("{HELP}");
    loop {
        print!("{}", render(&view));
        if view.terminal {
            return Ok(());
        }
        if !view.human_turn {
            request += 1;
            let r = client.engine_move(id, Some(request)).await?;
            println!("engine picks {} ({:.0} ms)", r.engine_move.hero_id, r.engine_move.latency_ms);
            view = r.view;
            continue;
        }
        print!("> ");
        use std::io::Write;
        std::io::stdout().flush()?;
        let Some(line) = read_line().await? else { return Ok(()) };
        let words: Vec<&str> = line.split_whitespace().collect();
        let result = match words.as_slice() {
            [] => continue,
            ["q"] => return Ok(()),
            ["u"] => client.undo(id, None).await.map(|v| view = v),
            ["e"] => {
                println!("the engine only moves on its own turn");
                Ok(())
            }
            ["r", rest @ ..] => {
                let k = rest.first().and_then(|s| s.parse().ok()).unwrap_or(a.top_k);
                client.recommendations(id, Some(k)).await.map(|recs| {
                    for r in &recs.items {
                        println!(
                            "  hero {:>3}  visits {:>6}  prior {:.3}  q {:+.3}  φ≈{:.3}",
                            r.hero_id, r.visits, r.prior, r.q, r.phi_estimate
                        );
                    }
                })
            }
            ["w", h] => match h.parse::<HeroId>() {
                Ok(h) => client.whatif(id, h, Some(a.top_k)).await.map(|w| {
                    println!("  if {h}: φ≈{:.3}", w.phi_estimate);
                    for r in w.recommendations.iter().flat_map(|r| &r.items) {
                        println!("    reply {:>3}  visits {:>6}  φ≈{:.3}", r.hero_id, r.visits, r.phi_estimate);
                    }
                }),
                Err(_) => {
                    println!("{HELP}");
                    Ok(())
                }
            },
            [h] => match h.parse::<HeroId>() {
                Ok(h) => {
                    request += 1;
                    client.pick(id, h, Some(request)).await.map(|v| view = v)
                }
                Err(_) => {
                    println!("{HELP}");
                    Ok(())
                }
            },
            _ => {
                println!("{HELP}");
                Ok(())
            }
        };
        if let Err(e) = result {
            println!("  {e}");
        }
    }
}
